"""Per-timestep density-ratio estimation via a binary classifier.

A small perceptron with a logistic head is trained to separate generated
samples (label 1) from target samples noised to the same level (label 0);
the density ratio follows from the odds, ratio(x) = p/(1-p) = exp(logit),
clamped to [0.01, 100].  Weights are re-initialized per timestep so each
step gets an unbiased estimate for its own marginal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._nn import MLP, Adam
from ._util import stream_rng
from .sampler import SampleBatch

CLAMP_LO = 0.01
CLAMP_HI = 100.0


@dataclass(frozen=True)
class RatioConfig:
    hidden: int = 64
    lr: float = 1e-3
    batch: int = 512
    max_epochs: int = 50
    patience: int = 5
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class RatioModel:
    """Trained classifier plus the step it is valid for and diagnostics."""

    net: MLP
    reverse_step: int
    clamp_lo: float = CLAMP_LO
    clamp_hi: float = CLAMP_HI
    val_losses: list[float] = field(default_factory=list)
    epochs_used: int = 0

    def __post_init__(self):
        if not (0 < self.clamp_lo < 1 < self.clamp_hi):
            raise ValueError("clamp bounds must satisfy 0 < low < 1 < high")


def _bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    # log(1 + exp(-|z|)) + max(z, 0) - z*y, numerically stable
    return float(np.mean(np.log1p(np.exp(-np.abs(logits)))
                         + np.maximum(logits, 0.0) - logits * labels))


def train_ratio(gen: SampleBatch, real_noised: SampleBatch,
                config: RatioConfig = RatioConfig()) -> RatioModel:
    """Fit the classifier with log-loss, 80/20 train/validation split,
    early stopping with the configured patience, at most max_epochs."""
    if gen.reverse_step != real_noised.reverse_step:
        raise ValueError(
            f"batches disagree on the reverse step: {gen.reverse_step} vs "
            f"{real_noised.reverse_step}"
        )
    if gen.n < 100 or real_noised.n < 100:
        raise ValueError("need at least 100 samples per class")
    if gen.d != real_noised.d:
        raise ValueError("batches disagree on dimension")
    for name, batch in (("gen", gen), ("real", real_noised)):
        if np.allclose(batch.points.std(axis=0), 0.0):
            raise ValueError(f"degenerate {name} batch: all points identical")

    x = np.concatenate([gen.points, real_noised.points], axis=0)
    y = np.concatenate([np.ones(gen.n), np.zeros(real_noised.n)])[:, None]
    rng = stream_rng(config.seed, "ratio", gen.reverse_step)
    perm = rng.permutation(len(x))
    x, y = x[perm], y[perm]
    n_val = max(1, int(round(config.val_fraction * len(x))))
    x_val, y_val = x[:n_val], y[:n_val]
    x_tr, y_tr = x[n_val:], y[n_val:]

    net = MLP([gen.d, config.hidden, config.hidden, 1], rng)
    opt = Adam(net, lr=config.lr)
    best = net.copy()
    best_loss = _bce_with_logits(net.forward(x_val), y_val)
    val_losses = [best_loss]
    stale = 0
    epochs_used = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x_tr))
        for lo in range(0, len(x_tr), config.batch):
            idx = order[lo:lo + config.batch]
            logits, acts = net.forward_cached(x_tr[idx])
            p = 1.0 / (1.0 + np.exp(-logits))
            net_grads = net.backward(acts, (p - y_tr[idx]) / len(idx))
            opt.step(net, *net_grads)
        epochs_used = epoch + 1
        val = _bce_with_logits(net.forward(x_val), y_val)
        val_losses.append(val)
        if val < best_loss - 1e-6:
            best_loss = val
            best = net.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return RatioModel(net=best, reverse_step=gen.reverse_step,
                      val_losses=val_losses, epochs_used=epochs_used)


def estimate_ratio(m: RatioModel, x) -> np.ndarray | float:
    """Density ratio from the classifier odds, clamped to [clamp_lo, clamp_hi]."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    logits = m.net.forward(np.atleast_2d(x))[:, 0]
    ratio = np.clip(np.exp(np.clip(logits, -50.0, 50.0)), m.clamp_lo, m.clamp_hi)
    return float(ratio[0]) if scalar else ratio
