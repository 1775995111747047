import itertools
import math

import numpy as np
import pytest
from scipy import stats

from scorespde.metrics import (frechet_gaussian, sinkhorn_divergence,
                               sinkhorn_w2, spearman)


def standardized_cloud(n, d, seed):
    """Cloud with exactly zero mean and exactly unit per-axis variance."""
    z = np.random.default_rng(seed).normal(size=(n, d))
    z -= z.mean(axis=0)
    z /= z.std(axis=0, ddof=1)
    return z


def test_sinkhorn_self_divergence_is_zero():
    a = np.random.default_rng(0).normal(size=(400, 2))
    assert sinkhorn_divergence(a, a) <= 1e-6
    assert sinkhorn_w2(a, a) <= 1e-3


def test_sinkhorn_gaussian_mean_separation():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((1500, 2))
    b = rng.standard_normal((1500, 2)) + np.array([1.0, 0.0])
    assert sinkhorn_w2(a, b) == pytest.approx(1.0, rel=0.07)


def test_sinkhorn_symmetry():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(300, 2))
    b = rng.normal(loc=0.5, size=(300, 2))
    assert abs(sinkhorn_divergence(a, b) - sinkhorn_divergence(b, a)) <= 1e-8


def test_sinkhorn_translation_equivariance():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(250, 2))
    b = rng.normal(loc=0.3, size=(250, 2))
    shift = np.array([5.0, -2.0])
    d0 = sinkhorn_divergence(a, b)
    d1 = sinkhorn_divergence(a + shift, b + shift)
    assert abs(d0 - d1) <= 1e-6


def test_sinkhorn_nonnegative_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = rng.normal(scale=rng.uniform(0.5, 2.0), size=(60, 2))
        b = rng.normal(loc=rng.uniform(-1, 1), size=(60, 2))
        assert sinkhorn_divergence(a, b) >= -1e-9


def test_sinkhorn_validation():
    a = np.zeros((5, 2))
    with pytest.raises(ValueError):
        sinkhorn_w2(a, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        sinkhorn_w2(a, a, blur=0.0)
    with pytest.raises(ValueError):
        sinkhorn_w2(a, a, scaling=1.0)


def test_frechet_identical_clouds():
    a = np.random.default_rng(5).normal(size=(500, 3))
    assert frechet_gaussian(a, a) == 0.0


def test_frechet_pure_mean_shift():
    z = standardized_cloud(400, 2, seed=6)
    m = np.array([0.8, -0.6])
    assert frechet_gaussian(z, z + m) == pytest.approx(m @ m, rel=1e-12)


def test_frechet_diagonal_closed_form():
    z = standardized_cloud(400, 2, seed=7)
    a = z * np.sqrt(np.array([1.0, 4.0]))
    b = z * np.sqrt(np.array([4.0, 1.0]))
    # per-axis (sqrt(var_a) - sqrt(var_b))^2 sums to (1-2)^2 + (2-1)^2 = 2
    assert frechet_gaussian(a, b) == pytest.approx(2.0, rel=1e-12)


def test_frechet_validation():
    rng = np.random.default_rng(8)
    with pytest.raises(ValueError, match="n > d"):
        frechet_gaussian(rng.normal(size=(3, 3)), rng.normal(size=(10, 3)))
    a = np.zeros((10, 2))
    a[:, 0] = rng.normal(size=10)
    with pytest.raises(ValueError, match="degenerate"):
        frechet_gaussian(a, rng.normal(size=(10, 2)))


def test_spearman_perfect_monotone():
    xs = np.arange(10.0)
    rho, p = spearman(xs, np.exp(xs))
    assert rho == 1.0
    assert p == 0.0
    rho_rev, _ = spearman(xs, -xs)
    assert rho_rev == -1.0


def test_spearman_monotone_transform_invariance():
    rng = np.random.default_rng(9)
    xs = rng.normal(size=20)
    ys = rng.normal(size=20)
    rho1, p1 = spearman(xs, ys)
    rho2, p2 = spearman(np.exp(xs), ys)
    rho3, p3 = spearman(xs, ys ** 3)
    assert rho1 == pytest.approx(rho2, abs=1e-12)
    assert rho1 == pytest.approx(rho3, abs=1e-12)
    assert p1 == pytest.approx(p2, abs=1e-12)


def test_spearman_exact_permutation_oracle_n8():
    # oracle: full 8!-enumeration with an independent rho implementation
    rng = np.random.default_rng(10)
    for _ in range(20):
        xs = rng.normal(size=8)
        ys = rng.normal(size=8)
        rho, p = spearman(xs, ys)
        rx = stats.rankdata(xs)
        ry = stats.rankdata(ys)
        obs = np.corrcoef(rx, ry)[0, 1]
        hits = sum(abs(np.corrcoef(rx, ry[list(perm)])[0, 1]) >= abs(obs) - 1e-12
                   for perm in itertools.permutations(range(8)))
        assert rho == pytest.approx(obs, abs=1e-12)
        assert p == hits / math.factorial(8)


def test_spearman_t_approximation_matches_scipy():
    rng = np.random.default_rng(11)
    xs = rng.normal(size=30)
    ys = 0.5 * xs + rng.normal(size=30)
    rho, p = spearman(xs, ys)
    ref = stats.spearmanr(xs, ys)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_spearman_ties_use_average_ranks():
    xs = np.array([1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0])
    ys = np.array([2.0, 1.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.0])
    rho, _ = spearman(xs, ys)
    ref = stats.spearmanr(xs, ys)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)


def test_spearman_validation():
    with pytest.raises(ValueError, match="constant"):
        spearman(np.ones(5), np.arange(5.0))
    with pytest.raises(ValueError):
        spearman(np.arange(2.0), np.arange(2.0))
    with pytest.raises(ValueError):
        spearman(np.arange(5.0), np.arange(6.0))
