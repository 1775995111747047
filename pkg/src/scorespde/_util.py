"""Shared plumbing: deterministic RNG streams, atomic file writes, CSV helpers."""

from __future__ import annotations

import hashlib
import os
import tempfile

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    if isinstance(tag, str):
        return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")
    raise TypeError(f"rng tag must be int or str, got {type(tag).__name__}")


def stream_rng(seed: int, *tags) -> np.random.Generator:
    """Counter-based generator for the stream keyed by (seed, *tags).

    Streams with distinct keys are statistically independent, and the mapping
    key -> stream is stable across processes and call order, which is what
    makes per-chain / per-step / per-mode draws reproducible regardless of
    execution layout.
    """
    entropy = [_tag_to_int(seed)] + [_tag_to_int(t) for t in tags]
    key = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def atomic_write_text(path: str, text: str) -> None:
    """Write text to `path` via a same-directory temp file and atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x) -> str:
    """Deterministic shortest decimal representation (round-trips exactly)."""
    return repr(float(x))


def write_csv(path: str, header: list[str], rows) -> None:
    """Write rows of mixed scalars as CSV, formatting floats deterministically."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
