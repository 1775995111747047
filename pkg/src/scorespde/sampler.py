"""Forward perturbation and reverse-time ancestral generation.

Produces the two sample streams the estimators consume: exact draws from
the diffused target (forward perturbation of data) and approximate draws
from the generated distribution (ancestral chains driven by a ScoreModel).

Every operation is deterministic given its seed.  Per-step noise streams
are keyed by (seed, step), so results do not depend on evaluation order or
parallel layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import stream_rng
from .errors import NumericalAbort
from .schedule import NoiseSchedule, forward_index, reverse_index, transition_coeffs
from .scoremodel import ScoreModel


@dataclass(frozen=True)
class SampleBatch:
    """n x d points tagged with their reverse step and provenance.

    reverse_step ranges over [0, K]; the value K denotes the terminal batch
    after the final ancestral update (fully denoised samples).
    """

    points: np.ndarray
    reverse_step: int
    source: str  # "target" | "generated"
    seed: int

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(pts) < 1:
            raise ValueError("batch must contain at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]


def forward_perturb(x0: np.ndarray, s: NoiseSchedule, k: int, seed: int
                    ) -> tuple[SampleBatch, np.ndarray]:
    """x_k = a_k x_0 + b_k z with z ~ N(0, I) from the (seed, k) stream.

    Returns the perturbed batch (tagged with the matching reverse step
    K-1-k) together with z itself, which the denoising form of the error
    estimator needs.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    a, b = transition_coeffs(s, k)
    z = stream_rng(seed, "forward", k).standard_normal(x0.shape)
    xk = a * x0 + b * z
    return SampleBatch(xk, reverse_index(s, k), "target", seed), z


def ancestral_step(m: ScoreModel, s: NoiseSchedule, x: np.ndarray, t: int,
                   seed: int) -> np.ndarray:
    """One reverse update at step t: x <- (x + beta_k s(t,x)) / sqrt(1-beta_k)
    plus sqrt(beta_k) * eps, with eps omitted at the final step (t = K-1)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = forward_index(s, t)
    beta = s.betas[k]
    score = m(t, x)
    if not np.all(np.isfinite(score)):
        bad = int(np.count_nonzero(~np.isfinite(score)))
        raise NumericalAbort(
            f"non-finite score values at reverse step {t} (forward {k}): {bad} entries"
        )
    out = (x + beta * score) / np.sqrt(1.0 - beta)
    if t < s.K - 1:
        eps = stream_rng(seed, "ancestral", t).standard_normal(x.shape)
        out = out + np.sqrt(beta) * eps
    return out


def sample_generated(m: ScoreModel, s: NoiseSchedule, n: int, seed: int,
                     record_at: set[int]) -> dict[int, SampleBatch]:
    """Run n chains from N(0, I) through all K reverse steps.

    Snapshots are taken at the requested reverse indices; index t is the
    state after t updates (so 0 is the prior draw itself), and index K is
    the terminal, fully denoised batch.
    """
    record_at = {int(t) for t in record_at}
    if not record_at:
        raise ValueError("record_at must be nonempty")
    if any(t < 0 or t > s.K for t in record_at):
        raise ValueError(f"record_at indices must lie in [0, {s.K}]")
    x = stream_rng(seed, "prior").standard_normal((n, m.d))
    out: dict[int, SampleBatch] = {}
    for t in range(s.K + 1):
        if t in record_at:
            out[t] = SampleBatch(x.copy(), t, "generated", seed)
        if t < s.K:
            x = ancestral_step(m, s, x, t, seed)
    return out
