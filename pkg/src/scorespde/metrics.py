"""Reference comparison metrics.

- sinkhorn_w2: debiased entropic optimal transport between point clouds
  with cost |x-y|^2/2, annealing the temperature from the data diameter
  down to blur^2, reported on the W2 scale (sqrt of twice the divergence).
- frechet_gaussian: closed-form Frechet distance between the diagonal
  Gaussian moment summaries of two clouds (a desk-scale stand-in for
  feature-space Frechet scores).
- spearman: rank correlation with average-rank ties; exact permutation
  p-value for n <= 8, t approximation otherwise.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import stats

_EXACT_P_MAX_N = 8
_CLIP = 80.0  # exp argument clip; also keeps float32 out of denormal range


def _cost_half_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = (np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :]
          - 2.0 * x @ y.T)
    return 0.5 * np.maximum(sq, 0.0)


def _stage(C: np.ndarray, T: np.ndarray, f: np.ndarray, g: np.ndarray,
           eps: float, ones_row: np.ndarray, ones_col: np.ndarray):
    """Row and column log-sums of exp((f_i + g_j - C_ij)/eps) in one pass."""
    np.multiply(C, np.float32(-1.0 / eps), out=T)
    T += (f / eps).astype(np.float32)[:, None]
    T += (g / eps).astype(np.float32)[None, :]
    np.clip(T, -_CLIP, _CLIP, out=T)
    np.exp(T, out=T)
    rows = np.maximum(T @ ones_col, np.float32(1e-37))
    cols = np.maximum(ones_row @ T, np.float32(1e-37))
    return rows, cols


def _anneal_schedule(diameter: float, blur: float, scaling: float) -> list[float]:
    sigmas = [max(diameter, blur)]
    while sigmas[-1] > blur:
        sigmas.append(max(sigmas[-1] * scaling, blur))
    return sigmas + [blur] * 3  # a few cleanup sweeps at the target blur


def sinkhorn_divergence(A, B, blur: float = 0.05, scaling: float = 0.9) -> float:
    """Debiased entropic divergence S(A, B) >= 0 with S(A, A) = 0.

    Symmetric damped potential updates under epsilon scaling; the self
    terms (A, A) and (B, B) are annealed alongside the cross term, and the
    divergence is the difference of the dual values.  Deterministic for
    fixed inputs; float32 internals.
    """
    A = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=np.float32)))
    B = np.ascontiguousarray(np.atleast_2d(np.asarray(B, dtype=np.float32)))
    if len(A) == 0 or len(B) == 0:
        raise ValueError("point sets must be nonempty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if blur <= 0:
        raise ValueError("blur must be > 0")
    if not 0.0 < scaling < 1.0:
        raise ValueError("scaling must lie in (0, 1)")
    n, m = len(A), len(B)
    Cab = _cost_half_sq(A, B)
    Caa = _cost_half_sq(A, A)
    Cbb = _cost_half_sq(B, B)
    diameter = float(np.sqrt(2.0 * max(float(Cab.max()), 1e-12)))
    sigmas = _anneal_schedule(diameter, blur, scaling)

    f = np.zeros(n, np.float32)
    g = np.zeros(m, np.float32)
    pa = np.zeros(n, np.float32)
    pb = np.zeros(m, np.float32)
    Tab = np.empty_like(Cab)
    Taa = np.empty_like(Caa)
    Tbb = np.empty_like(Cbb)
    on = np.ones(n, np.float32)
    om = np.ones(m, np.float32)
    log_n, log_m = np.log(n), np.log(m)
    for sig in sigmas:
        eps = sig * sig
        rows, cols = _stage(Cab, Tab, f, g, eps, on, om)
        f_new = 0.5 * (f + (f - eps * (np.log(rows) - log_m)))
        g_new = 0.5 * (g + (g - eps * (np.log(cols) - log_n)))
        ra, _ = _stage(Caa, Taa, pa, pa, eps, on, on)
        pa = (0.5 * (pa + (pa - eps * (np.log(ra) - log_n)))).astype(np.float32)
        rb, _ = _stage(Cbb, Tbb, pb, pb, eps, om, om)
        pb = (0.5 * (pb + (pb - eps * (np.log(rb) - log_m)))).astype(np.float32)
        f, g = f_new.astype(np.float32), g_new.astype(np.float32)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise RuntimeError(
                f"sinkhorn failed to converge at sigma={sig:.4g}: non-finite potentials"
            )
    return float(np.mean(f - pa) + np.mean(g - pb))


def sinkhorn_w2(A, B, blur: float = 0.05, scaling: float = 0.9) -> float:
    """W2 estimate sqrt(2 * S(A, B)): calibrated so that for Gaussians with
    equal covariance the value approaches the mean distance |m_A - m_B|."""
    return float(np.sqrt(max(2.0 * sinkhorn_divergence(A, B, blur, scaling), 0.0)))


def frechet_gaussian(A, B) -> float:
    """|m_A - m_B|^2 + sum_i (sqrt(var_A_i) - sqrt(var_B_i))^2 with
    diagonal sample covariances.  Requires n > d per cloud."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    d = A.shape[1]
    if len(A) <= d or len(B) <= d:
        raise ValueError(f"need n > d = {d} points per cloud for moment estimation")
    mean_diff = A.mean(axis=0) - B.mean(axis=0)
    var_a = A.var(axis=0, ddof=1)
    var_b = B.var(axis=0, ddof=1)
    if np.any(var_a <= 0) or np.any(var_b <= 0):
        raise ValueError("degenerate covariance: zero variance along some axis")
    return float(mean_diff @ mean_diff + np.sum((np.sqrt(var_a) - np.sqrt(var_b)) ** 2))


def _rank_rho(rx: np.ndarray, ry: np.ndarray) -> float:
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    return float((rx @ ry) / denom)


def spearman(xs, ys) -> tuple[float, float]:
    """Spearman rank correlation with average-rank ties.

    p-value: exact two-sided permutation distribution for n <= 8
    (enumerating all n! orderings of one argument), t approximation with
    n-2 degrees of freedom otherwise.  Constant inputs are an error.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-D sequences")
    n = len(xs)
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise ValueError("undefined correlation: constant input sequence")
    rx = stats.rankdata(xs)
    ry = stats.rankdata(ys)
    rho = _rank_rho(rx, ry)
    if n <= _EXACT_P_MAX_N:
        target = abs(rho) - 1e-12
        hits = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            if abs(_rank_rho(rx, ry[list(perm)])) >= target:
                hits += 1
        return rho, hits / total
    if abs(rho) >= 1.0:
        return rho, 0.0
    tstat = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(tstat), n - 2))
