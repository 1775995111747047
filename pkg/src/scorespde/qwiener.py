"""Trace-class spectral noise on periodic grids.

Increments of an L^2-valued Wiener field are synthesized by truncated
expansion in the real Fourier basis of the periodic box: per vector
component,

    dW(x) = scale * sum_j sqrt(lambda_j) * sqrt(dt) * xi_j * e_j(x),

with eigenvalues lambda_j = (1 + |j|^2)^(-p) indexed by integer wavenumber
vectors j, and xi_j i.i.d. standard normal drawn from the (seed, step,
component) stream.  p > d/2 keeps the covariance trace-class; components
of the vector field are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import stream_rng


@dataclass(frozen=True)
class SpectralNoiseSpec:
    """modes: wavenumber cutoff per dimension; eigen_decay: exponent p
    (None -> d/2 + 1); overall_scale multiplies the whole field;
    d_field: number of vector components."""

    modes: int = 16
    eigen_decay: float | None = None
    overall_scale: float = 1.0
    d_field: int = 1

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if self.overall_scale < 0:
            raise ValueError("overall_scale must be >= 0")
        if self.d_field < 1:
            raise ValueError("d_field must be >= 1")

    def decay_for(self, d: int) -> float:
        p = self.eigen_decay if self.eigen_decay is not None else d / 2.0 + 1.0
        if p <= d / 2.0:
            raise ValueError(
                f"eigen_decay p={p} is not trace-class in d={d}: need p > d/2"
            )
        return p


def _axis_basis(centers: np.ndarray, length: float, modes: int):
    """Real orthonormal Fourier rows on one axis: constant, then
    cos/sin pairs for wavenumbers 1..modes.  Returns (rows, |j| per row)."""
    norm0 = 1.0 / np.sqrt(length)
    normc = np.sqrt(2.0 / length)
    rows = [np.full_like(centers, norm0)]
    wavenumbers = [0]
    for j in range(1, modes + 1):
        arg = 2.0 * np.pi * j * centers / length
        rows.append(normc * np.cos(arg))
        rows.append(normc * np.sin(arg))
        wavenumbers += [j, j]
    return np.array(rows), np.array(wavenumbers, dtype=float)


def sample_increment(spec: SpectralNoiseSpec, grid, dt: float, seed: int,
                     step: int) -> np.ndarray:
    """One increment dW over the grid; shape (d_field, *grid.shape).

    Mean zero with covariance dt * Q; increments at distinct step indices
    are independent.  Stateless: the result is a pure function of
    (spec, grid, dt, seed, step).
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    p = spec.decay_for(grid.d)
    length = 2.0 * grid.half_width
    if spec.overall_scale == 0.0:
        return np.zeros((spec.d_field,) + grid.shape)

    bases = []
    waves = []
    for _ in range(grid.d):
        rows, wn = _axis_basis(grid.centers, length, spec.modes)
        bases.append(rows)
        waves.append(wn)

    if grid.d == 1:
        lam = (1.0 + waves[0] ** 2) ** (-p)
        amp = spec.overall_scale * np.sqrt(lam * dt)
        out = np.empty((spec.d_field, grid.n))
        for c in range(spec.d_field):
            xi = stream_rng(seed, "qwiener", step, c).standard_normal(len(lam))
            out[c] = (amp * xi) @ bases[0]
        return out

    if grid.d == 2:
        j2 = waves[0][:, None] ** 2 + waves[1][None, :] ** 2
        lam = (1.0 + j2) ** (-p)
        amp = spec.overall_scale * np.sqrt(lam * dt)
        out = np.empty((spec.d_field, grid.n, grid.n))
        for c in range(spec.d_field):
            xi = stream_rng(seed, "qwiener", step, c).standard_normal(lam.shape)
            out[c] = bases[0].T @ (amp * xi) @ bases[1]
        return out

    raise ValueError(f"spectral noise supports d in {{1, 2}}, got d={grid.d}")
