"""Score fields: exact, corrupted, and trained.

A ScoreModel is an evaluable map (reverse step t, points x) -> score
vectors.  Three realizations:

- exact_score: the analytic score of the diffused mixture (zero-error
  baseline).
- corrupt: adds a deterministic bias pattern plus a frozen smooth random
  field.  The random field is synthesized from random Fourier features and
  is redrawn deterministically per reverse step, so the corrupted model is
  one fixed sample path of "systematic bias + rough stochastic error", not
  a fresh draw per call.
- train_mlp_score: a small perceptron fitted by denoising score matching,
  checkpointed at exponentially spaced step counts to emulate a model that
  improves with training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._nn import MLP
from ._util import stream_rng
from .errors import NumericalAbort
from .schedule import NoiseSchedule, forward_index, transition_coeffs
from .target import GaussianMixture, diffused_marginal, true_score

_RFF_FEATURES = 256
_CKPT_MAGIC = b"SSPD"
_CKPT_VERSION = 1


class ScoreModel:
    """Deterministic score field s(t, x).

    Calling with x of shape (n, d) returns (n, d); a single point (d,)
    returns (d,).  Evaluation is read-only and safe for concurrent use.
    """

    def __init__(self, evaluator, d: int, kind: str, meta: dict | None = None):
        self._evaluator = evaluator
        self.d = d
        self.kind = kind
        self.meta = dict(meta or {})

    def __call__(self, t: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        out = self._evaluator(int(t), np.atleast_2d(x))
        return out[0] if scalar else out

    def __repr__(self):
        return f"ScoreModel(kind={self.kind!r}, d={self.d}, meta={self.meta})"


@dataclass(frozen=True)
class CorruptionSpec:
    """Additive score corruption: bias_amplitude * pattern(t, x) plus
    noise_amplitude * frozen unit-variance random field.

    bias_field is one of "constant" (all-ones direction), "linear" (x),
    "radial" (x / sqrt(1 + |x|^2)).  noise_correlation_length sets the
    spatial smoothness of the random field; the field realization is fixed
    by (seed, reverse step) and never re-drawn per call.
    """

    bias_amplitude: float = 0.0
    bias_field: str = "constant"
    noise_amplitude: float = 0.0
    noise_correlation_length: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.bias_amplitude < 0 or self.noise_amplitude < 0:
            raise ValueError("corruption amplitudes must be >= 0")
        if self.noise_correlation_length <= 0:
            raise ValueError("noise_correlation_length must be > 0")
        if self.bias_field not in _BIAS_PATTERNS:
            raise ValueError(
                f"unknown bias pattern {self.bias_field!r}; "
                f"choose from {sorted(_BIAS_PATTERNS)}"
            )


def _bias_constant(x):
    return np.ones_like(x)


def _bias_linear(x):
    return x


def _bias_radial(x):
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return x / np.sqrt(1.0 + r2)


_BIAS_PATTERNS = {
    "constant": _bias_constant,
    "linear": _bias_linear,
    "radial": _bias_radial,
}


def exact_score(gm: GaussianMixture, s: NoiseSchedule) -> ScoreModel:
    """Analytic score of the diffused target at every reverse step."""

    def evaluator(t, x):
        return true_score(diffused_marginal(gm, s, t), x)

    return ScoreModel(evaluator, gm.d, "exact", {"components": gm.n_components})


class _FrozenField:
    """Unit-variance smooth random field per (seed, reverse step, component).

    f_c(t, x) = sqrt(2/M) * sum_m a_m cos(omega_m . x + phi_m) with
    omega_m ~ N(0, I/ell^2) fixed per component and (a, phi) redrawn
    deterministically per step.  E[f^2] = 1 at every x.
    """

    def __init__(self, d: int, ell: float, seed: int):
        self.d = d
        self.seed = seed
        rng = stream_rng(seed, "rff-freqs")
        self.omega = rng.standard_normal((d, _RFF_FEATURES, d)) / ell
        self._per_step: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _coeffs(self, t: int):
        cached = self._per_step.get(t)
        if cached is None:
            rng = stream_rng(self.seed, "rff-step", t)
            amps = rng.standard_normal((self.d, _RFF_FEATURES))
            phases = rng.uniform(0.0, 2.0 * np.pi, size=(self.d, _RFF_FEATURES))
            cached = (amps, phases)
            self._per_step[t] = cached
        return cached

    def __call__(self, t: int, x: np.ndarray) -> np.ndarray:
        amps, phases = self._coeffs(t)
        out = np.empty_like(x)
        norm = np.sqrt(2.0 / _RFF_FEATURES)
        for c in range(self.d):
            proj = x @ self.omega[c].T + phases[c]
            out[:, c] = norm * (np.cos(proj) @ amps[c])
        return out


def corrupt(base: ScoreModel, spec: CorruptionSpec) -> ScoreModel:
    """base + bias_amplitude * pattern + noise_amplitude * frozen field."""
    pattern = _BIAS_PATTERNS[spec.bias_field]
    field = None
    if spec.noise_amplitude > 0:
        field = _FrozenField(base.d, spec.noise_correlation_length, spec.seed)

    def evaluator(t, x):
        out = base._evaluator(t, x)
        if spec.bias_amplitude > 0:
            out = out + spec.bias_amplitude * pattern(x)
        if field is not None:
            out = out + spec.noise_amplitude * field(t, x)
        return out

    meta = dict(base.meta)
    meta.update(
        bias_amplitude=spec.bias_amplitude,
        bias_field=spec.bias_field,
        noise_amplitude=spec.noise_amplitude,
        noise_correlation_length=spec.noise_correlation_length,
        corruption_seed=spec.seed,
    )
    return ScoreModel(evaluator, base.d, "corrupted", meta)


def _wrap_network(net: MLP, s: NoiseSchedule, steps_trained: int, loss: float) -> ScoreModel:
    """Noise-prediction net -> score: s(t, x) = net(x, k/K) / (-b_k)."""
    K = s.K
    d = net.sizes[0] - 1

    def evaluator(t, x):
        k = forward_index(s, t)
        _, b = transition_coeffs(s, k)
        inp = np.concatenate([x, np.full((len(x), 1), k / K)], axis=1)
        return net.forward(inp) / (-b)

    model = ScoreModel(evaluator, d, "trained",
                       {"steps": steps_trained, "loss": loss,
                        "width": net.sizes[1], "schedule_K": K})
    model.net = net
    return model


def train_mlp_score(data: np.ndarray, s: NoiseSchedule, steps: int,
                    width: int = 128, seed: int = 0, batch: int = 256,
                    lr: float = 1e-3, checkpoint_steps: list[int] | None = None,
                    n_checkpoints: int = 8) -> list[ScoreModel]:
    """Fit a noise-prediction perceptron by denoising score matching.

    Per step: draw a data batch, per-sample forward indices k, noise z,
    form x_k = a_k x_0 + b_k z and regress net(x_k, k/K) onto z with plain
    SGD.  Returns one ScoreModel per checkpoint (default: n_checkpoints
    step counts doubling up to `steps`); checkpoint step 0 is the random
    initialization.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if len(data) == 0:
        raise ValueError("training data must be nonempty")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    d = data.shape[1]
    if checkpoint_steps is None:
        checkpoint_steps = sorted({steps // 2 ** (n_checkpoints - 1 - j)
                                   for j in range(n_checkpoints)})
    checkpoint_steps = sorted(set(int(c) for c in checkpoint_steps))
    if any(c < 0 or c > steps for c in checkpoint_steps):
        raise ValueError(f"checkpoint steps must lie in [0, {steps}]")

    rng = stream_rng(seed, "dsm-train")
    net = MLP([d + 1, width, width, d], rng)
    a = np.sqrt(s.alpha_bar)
    b = np.sqrt(1.0 - s.alpha_bar)

    checkpoints: list[ScoreModel] = []
    recent = float("nan")
    if checkpoint_steps and checkpoint_steps[0] == 0:
        checkpoints.append(_wrap_network(net.copy(), s, 0, recent))
    pending = [c for c in checkpoint_steps if c > 0]

    loss_acc, loss_n = 0.0, 0
    for step in range(1, steps + 1):
        idx = rng.integers(0, len(data), size=batch)
        k = rng.integers(0, s.K, size=batch)
        z = rng.standard_normal((batch, d))
        x0 = data[idx]
        xk = a[k, None] * x0 + b[k, None] * z
        inp = np.concatenate([xk, (k / s.K)[:, None]], axis=1)
        out, acts = net.forward_cached(inp)
        resid = out - z
        with np.errstate(over="ignore"):
            loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise NumericalAbort(f"score training diverged at step {step}: loss={loss}")
        loss_acc += loss
        loss_n += 1
        grads_w, grads_b = net.backward(acts, 2.0 * resid / batch)
        net.sgd_step(grads_w, grads_b, lr)
        if pending and step == pending[0]:
            pending.pop(0)
            recent = loss_acc / loss_n
            loss_acc, loss_n = 0.0, 0
            checkpoints.append(_wrap_network(net.copy(), s, step, recent))
    return checkpoints


def save_score_checkpoint(model: ScoreModel, path: str) -> None:
    """Serialize a trained checkpoint: versioned header + flat float64 weights."""
    if model.kind != "trained" or not hasattr(model, "net"):
        raise ValueError(f"only trained models serialize, got kind={model.kind!r}")
    net: MLP = model.net
    K = model.meta.get("schedule_K", 0)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IIQ", _CKPT_VERSION, len(net.sizes), int(model.meta.get("steps", 0))))
        fh.write(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        fh.write(struct.pack("<I", int(K)))
        for W in net.weights:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
        for b in net.biases:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_score_checkpoint(path: str, s: NoiseSchedule) -> ScoreModel:
    """Inverse of save_score_checkpoint; wraps the weights for schedule `s`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a score checkpoint: bad magic {magic!r}")
        version, n_sizes, steps_trained = struct.unpack("<IIQ", fh.read(16))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = list(struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes)))
        (saved_K,) = struct.unpack("<I", fh.read(4))
        if saved_K and saved_K != s.K:
            raise ValueError(
                f"checkpoint was trained against a {saved_K}-step schedule, got K={s.K}"
            )
        net = object.__new__(MLP)
        net.sizes = sizes
        net.weights = []
        net.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            buf = fh.read(8 * fan_in * fan_out)
            net.weights.append(np.frombuffer(buf, dtype="<f8").reshape(fan_in, fan_out).copy())
        for fan_out in sizes[1:]:
            buf = fh.read(8 * fan_out)
            net.biases.append(np.frombuffer(buf, dtype="<f8").copy())
    return _wrap_network(net, s, int(steps_trained), float("nan"))
