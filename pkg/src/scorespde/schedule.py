"""Discrete variance-preserving diffusion schedule.

Conventions used throughout the toolkit:

- Forward indices k = 0..K-1 run from clean data towards noise, with
  per-step variances beta[k].  The marginal of the forward chain at index k
  is x_k = a_k x_0 + b_k z with a_k = sqrt(alpha_bar[k]) and
  b_k = sqrt(1 - alpha_bar[k]), z ~ N(0, I).
- Reverse indices t = 0..K-1 run from noise towards data; t maps to the
  forward index k = K-1-t.  The reverse-time drift/diffusion coefficients at
  reverse step t are f_bar = -beta_k/2 and g_bar = sqrt(beta_k), the
  standard VP discretization.
- The unit time interval is split evenly, so dt = 1/K.  Quadratic-variation
  sums use this dt, which makes them invariant to re-indexing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-ramp beta schedule with precomputed cumulative products."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float
    beta_end: float

    @property
    def K(self) -> int:
        return len(self.betas)

    @property
    def dt(self) -> float:
        return 1.0 / self.K


def linear_beta_schedule(K: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Build the K-step linear schedule beta[k] = beta_start + (beta_end-beta_start) * k/(K-1).

    The cumulative product alpha_bar is accumulated in extended precision:
    a 1000-factor product of numbers near 1 loses digits otherwise.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )
    if K == 1:
        betas = np.array([beta_start], dtype=float)
    else:
        betas = np.linspace(beta_start, beta_end, K)
    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas.astype(np.longdouble)).astype(float)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bar=alpha_bar,
                         beta_start=float(beta_start), beta_end=float(beta_end))


def _check_index(s: NoiseSchedule, i: int, what: str) -> int:
    i = int(i)
    if not 0 <= i < s.K:
        raise IndexError(f"{what} {i} out of range [0, {s.K})")
    return i


def forward_index(s: NoiseSchedule, t: int) -> int:
    """Forward index k = K-1-t of reverse step t."""
    t = _check_index(s, t, "reverse step")
    return s.K - 1 - t


def reverse_index(s: NoiseSchedule, k: int) -> int:
    """Reverse step t = K-1-k of forward index k (its own inverse)."""
    k = _check_index(s, k, "forward index")
    return s.K - 1 - k


def transition_coeffs(s: NoiseSchedule, k: int) -> tuple[float, float]:
    """Coefficients (a, b) of the forward transition kernel at index k,
    so that x_k = a*x_0 + b*z.  Satisfies a**2 + b**2 = 1 exactly up to
    rounding (variance preservation)."""
    k = _check_index(s, k, "forward index")
    ab = s.alpha_bar[k]
    return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))


def reverse_coeffs(s: NoiseSchedule, t: int) -> tuple[float, float]:
    """Reverse-time coefficients (f_bar, g_bar) at reverse step t.

    f_bar = -beta_k/2 and g_bar = sqrt(beta_k) with k = K-1-t; g_bar**2 is
    the factor multiplying the score in the generation-time reverse SDE.
    """
    t = _check_index(s, t, "reverse step")
    beta = s.betas[s.K - 1 - t]
    return float(-0.5 * beta), float(np.sqrt(beta))
