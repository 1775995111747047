"""Analytic Gaussian-mixture targets.

A diagonal-covariance Gaussian mixture is closed under the forward
diffusion kernel N(a*y, b^2 I): the diffused marginal is again a mixture
with means a*mu_i and covariances a^2*Sigma_i + b^2*I.  That gives exact
densities, scores, and samples at every noise level, which is the ground
truth all the estimator tests lean on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule, forward_index, transition_coeffs

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of m diagonal Gaussians in R^d.

    weights: (m,) simplex vector; means: (m, d); variances: (m, d) > 0.
    Immutable after construction; weights are renormalized to sum to 1
    exactly (inputs must already be within 1e-6 of a simplex).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        var = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if w.ndim != 1:
            raise ValueError("weights must be a 1-D vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
        if mu.shape != var.shape or mu.shape[0] != len(w):
            raise ValueError(
                f"shape mismatch: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if np.any(var <= 0):
            raise ValueError("all variances must be positive")
        w = w / w.sum()
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n points (component choice then conditional Gaussian)."""
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        return self.means[comps] + z * np.sqrt(self.variances[comps])


def single_gaussian(mean, variance) -> GaussianMixture:
    """Convenience one-component mixture."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    variance = np.broadcast_to(np.asarray(variance, dtype=float), mean.shape)
    return GaussianMixture(np.array([1.0]), mean[None, :], variance[None, :])


def diffuse(gm: GaussianMixture, a: float, b: float) -> GaussianMixture:
    """Exact marginal of the mixture under the kernel x -> a*x + b*z."""
    if b < 0:
        raise ValueError(f"kernel scale b must be >= 0, got {b}")
    return GaussianMixture(gm.weights, a * gm.means, a * a * gm.variances + b * b)


def diffused_marginal(gm: GaussianMixture, s: NoiseSchedule, t: int) -> GaussianMixture:
    """Target marginal v_t at reverse step t (forward index k = K-1-t)."""
    a, b = transition_coeffs(s, forward_index(s, t))
    return diffuse(gm, a, b)


def _component_logpdfs(gm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    # x: (..., d) -> (..., m) per-component log w_i + log N(x; mu_i, var_i)
    diff = x[..., None, :] - gm.means
    maha = np.sum(diff * diff / gm.variances, axis=-1)
    lognorm = -0.5 * (gm.d * _LOG_2PI + np.sum(np.log(gm.variances), axis=-1))
    with np.errstate(divide="ignore"):
        logw = np.log(gm.weights)
    return logw + lognorm - 0.5 * maha


def log_density(gm: GaussianMixture, x) -> np.ndarray | float:
    """log sum_i w_i N(x; mu_i, var_i), max-shifted so far-field probes
    do not underflow.  x may be a single point (d,) or a batch (..., d)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    out = logsumexp(_component_logpdfs(gm, x), axis=-1)
    return float(out) if scalar else out


def true_score(gm: GaussianMixture, x) -> np.ndarray:
    """Gradient of log density: responsibility-weighted component scores."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    xb = np.atleast_2d(x)
    logp = _component_logpdfs(gm, xb)
    logp = logp - logp.max(axis=-1, keepdims=True)
    resp = np.exp(logp)
    resp /= resp.sum(axis=-1, keepdims=True)
    comp_scores = -(xb[:, None, :] - gm.means) / gm.variances
    score = np.sum(resp[..., None] * comp_scores, axis=1)
    return score[0] if scalar else score


def conditional_score(x_t, x0, a: float, b: float) -> np.ndarray:
    """Score of the forward transition kernel: -(x_t - a*x0)/b^2.

    When x_t = a*x0 + b*z this equals -z/b exactly, which is the identity
    the denoising estimator relies on.
    """
    if b <= 0:
        raise ValueError(f"degenerate kernel: b must be > 0, got {b}")
    x_t = np.asarray(x_t, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    return -(x_t - a * x0) / (b * b)
