import numpy as np
import pytest

from scorespde.errors import NumericalAbort
from scorespde.schedule import forward_index, linear_beta_schedule, transition_coeffs
from scorespde.scoremodel import (CorruptionSpec, corrupt, exact_score,
                                  load_score_checkpoint, save_score_checkpoint,
                                  train_mlp_score)
from scorespde.siem import LorentzParams, evaluate_siem
from scorespde.target import GaussianMixture, diffused_marginal, log_density, single_gaussian, true_score


@pytest.fixture
def mixture():
    return GaussianMixture([0.5, 0.5], [[-1.5, 0.0], [1.5, 0.0]],
                           [[0.6, 0.6], [0.6, 0.6]])


@pytest.fixture
def sched():
    return linear_beta_schedule(100, 1e-4, 0.02)


def test_exact_score_is_marginal_score(mixture, sched):
    model = exact_score(mixture, sched)
    rng = np.random.default_rng(0)
    for t in (0, 37, 99):
        x = rng.normal(size=(50, 2))
        diff = model(t, x) - true_score(diffused_marginal(mixture, sched, t), x)
        np.testing.assert_array_equal(diff, 0.0)


def test_exact_score_matches_finite_difference_oracle(mixture, sched):
    model = exact_score(mixture, sched)
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(20):
        t = int(rng.integers(0, sched.K))
        x = rng.normal(size=2)
        v_t = diffused_marginal(mixture, sched, t)
        fd = np.empty(2)
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = h
            fd[axis] = (log_density(v_t, x + e) - log_density(v_t, x - e)) / (2 * h)
        np.testing.assert_allclose(model(t, x), fd, rtol=1e-5, atol=1e-5)


def test_corrupt_zero_amplitudes_is_identity(mixture, sched):
    base = exact_score(mixture, sched)
    model = corrupt(base, CorruptionSpec(bias_amplitude=0.0, noise_amplitude=0.0))
    x = np.random.default_rng(2).normal(size=(64, 2))
    for t in (0, 50):
        np.testing.assert_array_equal(model(t, x), base(t, x))


def test_corrupt_constant_bias_exact(mixture, sched):
    base = exact_score(mixture, sched)
    c = 0.37
    model = corrupt(base, CorruptionSpec(bias_amplitude=c, bias_field="constant"))
    x = np.random.default_rng(3).normal(size=(32, 2))
    np.testing.assert_allclose(model(11, x) - base(11, x), c * np.ones_like(x),
                               rtol=0, atol=1e-13)


def test_corrupt_additivity(mixture, sched):
    base = exact_score(mixture, sched)
    s1 = CorruptionSpec(bias_amplitude=0.2, bias_field="linear",
                        noise_amplitude=0.1, seed=5)
    s2 = CorruptionSpec(bias_amplitude=0.0, noise_amplitude=0.3, seed=9)
    stacked = corrupt(corrupt(base, s1), s2)
    m1 = corrupt(base, s1)
    m2 = corrupt(base, s2)
    x = np.random.default_rng(4).normal(size=(128, 2))
    for t in (3, 77):
        expected = m1(t, x) + m2(t, x) - base(t, x)
        np.testing.assert_allclose(stacked(t, x), expected, atol=1e-12)


def test_corruption_noise_field_unit_variance(mixture, sched):
    # Monte Carlo oracle: the frozen field has unit variance, so the
    # evaluator discrepancy has variance amplitude^2 within 5%
    base = exact_score(mixture, sched)
    amp = 0.2
    model = corrupt(base, CorruptionSpec(noise_amplitude=amp,
                                         noise_correlation_length=0.5, seed=7))
    rng = np.random.default_rng(5)
    diffs = []
    for t in range(0, sched.K, 5):
        x = rng.normal(scale=2.0, size=(500, 2))
        diffs.append((model(t, x) - base(t, x)).ravel())
    var = np.var(np.concatenate(diffs))
    assert var == pytest.approx(amp ** 2, rel=0.05)


def test_corruption_determinism(mixture, sched):
    base = exact_score(mixture, sched)
    spec = CorruptionSpec(bias_amplitude=0.1, noise_amplitude=0.4, seed=123)
    m1 = corrupt(base, spec)
    m2 = corrupt(base, spec)
    x = np.random.default_rng(6).normal(size=(16, 2))
    a = m1(42, x)
    np.testing.assert_array_equal(a, m1(42, x))   # repeat call, same object
    np.testing.assert_array_equal(a, m2(42, x))   # fresh object, same seed


def test_unknown_bias_pattern_rejected():
    with pytest.raises(ValueError, match="unknown bias pattern"):
        CorruptionSpec(bias_field="swirl")


def test_training_loss_decreases(mixture, sched):
    rng = np.random.default_rng(8)
    data = mixture.sample(4096, rng)
    ckpts = train_mlp_score(data, sched, steps=800, width=32, seed=0,
                            checkpoint_steps=[50, 800])
    assert ckpts[-1].meta["loss"] < ckpts[0].meta["loss"]


def test_training_divergence_aborts(mixture, sched):
    data = mixture.sample(512, np.random.default_rng(9))
    with pytest.raises(NumericalAbort):
        train_mlp_score(data, sched, steps=200, width=32, seed=0, lr=1e6)


def test_checkpoint_serialization_roundtrip(tmp_path, mixture, sched):
    data = mixture.sample(1024, np.random.default_rng(10))
    model = train_mlp_score(data, sched, steps=300, width=32, seed=3,
                            checkpoint_steps=[300])[0]
    path = tmp_path / "ckpt.bin"
    save_score_checkpoint(model, str(path))
    loaded = load_score_checkpoint(str(path), sched)
    x = np.random.default_rng(11).normal(size=(20, 2))
    for t in (0, 50, 99):
        np.testing.assert_array_equal(loaded(t, x), model(t, x))
    assert loaded.meta["steps"] == 300


def test_checkpoint_schedule_mismatch_rejected(tmp_path, mixture, sched):
    data = mixture.sample(512, np.random.default_rng(12))
    model = train_mlp_score(data, sched, steps=100, width=32, seed=0,
                            checkpoint_steps=[100])[0]
    path = tmp_path / "ckpt.bin"
    save_score_checkpoint(model, str(path))
    with pytest.raises(ValueError, match="schedule"):
        load_score_checkpoint(str(path), linear_beta_schedule(50, 1e-4, 0.02))


@pytest.mark.slow
def test_trained_score_matches_analytic_at_origin():
    # single-Gaussian target: the true diffused score at the origin is 0
    sched = linear_beta_schedule(100, 1e-4, 0.02)
    gm = single_gaussian([0.0, 0.0], 1.0)
    data = gm.sample(20000, np.random.default_rng(13))
    model = train_mlp_score(data, sched, steps=20000, width=128, seed=1,
                            checkpoint_steps=[20000])[0]
    origin = np.zeros(2)
    for t in (25, 50, 75):
        v_t = diffused_marginal(gm, sched, t)
        err = np.abs(model(t, origin) - true_score(v_t, origin))
        assert err.max() < 0.1


@pytest.mark.slow
def test_untrained_siem_exceeds_trained_siem():
    # end-to-end ordering: random init scores worse than the final checkpoint
    sched = linear_beta_schedule(100, 1e-4, 0.02)
    gm = GaussianMixture([0.5, 0.5], [[-1.5, 0.0], [1.5, 0.0]],
                         [[0.6, 0.6], [0.6, 0.6]])
    params = LorentzParams(d=2, epsilon=2.0)
    for seed in (0, 1, 2):
        data = gm.sample(4096, np.random.default_rng(100 + seed))
        init, final = train_mlp_score(data, sched, steps=4000, width=64, seed=seed,
                                      checkpoint_steps=[0, 4000])
        siem_init = evaluate_siem(init, gm, sched, params, n_per_step=256,
                                  seed=seed).siem_values[(0, 99)]
        siem_final = evaluate_siem(final, gm, sched, params, n_per_step=256,
                                   seed=seed).siem_values[(0, 99)]
        assert siem_init > siem_final
