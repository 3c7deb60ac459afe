"""Deterministic seeded numerics shared by every module.

All randomness flows through :class:`RngStream`, an immutable (seed, stream)
pair. Each stream maps to a counter-based Philox generator, so a given pair
always reproduces the same draws on every platform, and forked child streams
are independent of their parent and of each other.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from mi_guard.errors import InvalidParameterError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Immutable handle on a reproducible random sequence."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(seq))

    def fork(self, child: int | str) -> "RngStream":
        """Derive the child stream ``child`` of this stream."""
        digest = hashlib.sha256(f"{self.stream}/{child}".encode()).digest()
        return RngStream(self.seed, int.from_bytes(digest[:8], "little"))


def gaussian_sample(rng: RngStream, mean: float, sigma: float, n: int) -> np.ndarray:
    """``n`` i.i.d. draws from N(mean, sigma^2)."""
    if sigma < 0:
        raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
    if n < 0:
        raise InvalidParameterError(f"sample count must be >= 0, got {n}")
    if sigma == 0:
        return np.full(n, float(mean))
    return rng.generator().normal(mean, sigma, size=n)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts a vector or a batch."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def l2_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64).ravel()))


def l2_clip(v: np.ndarray, bound: float) -> np.ndarray:
    """Scale ``v`` by min(1, bound/||v||_2). ``bound`` may be ``math.inf``."""
    if not bound > 0:
        raise InvalidParameterError(f"clip bound must be > 0, got {bound}")
    v = np.asarray(v, dtype=np.float64)
    norm = l2_norm(v)
    if norm <= bound:
        return v.copy()
    return v * (bound / norm)


def l2_clip_rows(m: np.ndarray, bound: float) -> np.ndarray:
    """Clip every row of ``m`` independently."""
    if not bound > 0:
        raise InvalidParameterError(f"clip bound must be > 0, got {bound}")
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        factors = np.minimum(1.0, bound / norms)
    return m * factors


def argmax_tiebreak(v: np.ndarray) -> int:
    """Index of the maximum; ties go to the lowest index."""
    v = np.asarray(v)
    if v.size == 0:
        raise InvalidParameterError("argmax of an empty vector")
    # np.argmax returns the first occurrence of the maximum
    return int(np.argmax(v))


def argmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise :func:`argmax_tiebreak`."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] == 0:
        raise InvalidParameterError(f"expected a non-empty 2-D array, got shape {m.shape}")
    return np.argmax(m, axis=1)
