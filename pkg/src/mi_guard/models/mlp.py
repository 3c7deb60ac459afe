"""Fully connected classifier f(x; theta): parameters, forward pass and backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from mi_guard.errors import InvalidParameterError
from mi_guard.numeric import RngStream, argmax_rows, softmax
from mi_guard.schemas.training import MlpArchitecture


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Per-layer weights (``in x out``) and biases; immutable once built."""

    architecture: MlpArchitecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.architecture.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise InvalidParameterError(
                f"architecture has {len(shapes)} layers, got {len(self.weights)} weight matrices"
            )
        weights, biases = [], []
        for (fan_in, fan_out), w, b in zip(shapes, self.weights, self.biases):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64).reshape(-1)
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise InvalidParameterError(
                    f"layer expects W{(fan_in, fan_out)} b({fan_out},), got W{w.shape} b{b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidParameterError("model parameters must be finite")
            w.flags.writeable = False
            b.flags.writeable = False
            weights.append(w)
            biases.append(b)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))

    # ------------------------------------------------------------------
    # Flat views (clipping and checkpoints work on one long vector)
    # ------------------------------------------------------------------

    def flat(self) -> np.ndarray:
        return flatten(interleave(self.weights, self.biases))

    @classmethod
    def from_flat(cls, architecture: MlpArchitecture, vector: np.ndarray) -> "ModelParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (architecture.num_parameters,):
            raise InvalidParameterError(
                f"expected {architecture.num_parameters} parameters, got {vector.shape}"
            )
        weights, biases, offset = [], [], 0
        for fan_in, fan_out in architecture.layer_shapes:
            weights.append(vector[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            biases.append(vector[offset:offset + fan_out])
            offset += fan_out
        return cls(architecture, tuple(weights), tuple(biases))

    def equals(self, other: "ModelParams") -> bool:
        return self.architecture == other.architecture and np.array_equal(self.flat(), other.flat())


def interleave(weights, biases) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for w, b in zip(weights, biases):
        out.extend((w, b))
    return out


def flatten(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def init_params(architecture: MlpArchitecture, rng: RngStream) -> ModelParams:
    """He-normal weights, zero biases."""
    gen = rng.generator()
    weights = tuple(
        gen.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in architecture.layer_shapes
    )
    biases = tuple(np.zeros(fan_out) for _, fan_out in architecture.layer_shapes)
    return ModelParams(architecture, weights, biases)


def zero_params(architecture: MlpArchitecture) -> ModelParams:
    shapes = architecture.layer_shapes
    return ModelParams(
        architecture,
        tuple(np.zeros(s) for s in shapes),
        tuple(np.zeros(o) for _, o in shapes),
    )


# ============================================================================
# Forward pass
# ============================================================================

def _as_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch = x.reshape(1, -1) if x.ndim == 1 else x
    if batch.ndim != 2 or batch.shape[1] != params.architecture.input_dim:
        raise InvalidParameterError(
            f"model expects inputs of dimension {params.architecture.input_dim}, got {x.shape}"
        )
    return batch


def logits_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logits for a batch (rows); rectifier on hidden layers, none on the last."""
    h = _as_batch(params, x)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def forward_logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logit vector l(x) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidParameterError(f"expected a single feature vector, got shape {x.shape}")
    return logits_batch(params, x)[0]


def posterior(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Pr(y | x): softmax of the logits (vector in, vector out; batch in, batch out)."""
    x = np.asarray(x, dtype=np.float64)
    probs = softmax(logits_batch(params, x))
    return probs[0] if x.ndim == 1 else probs


def predict_label(params: ModelParams, x: np.ndarray) -> int | np.ndarray:
    """Top-1 label, lowest index on ties; batches return an array."""
    x = np.asarray(x, dtype=np.float64)
    labels = argmax_rows(posterior(params, x.reshape(1, -1) if x.ndim == 1 else x))
    return int(labels[0]) if x.ndim == 1 else labels


# ============================================================================
# Loss and gradients
# ============================================================================

def loss_and_gradients(
    params: ModelParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient (W0, b0, W1, b1, ...)."""
    x = _as_batch(params, x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    n = x.shape[0]
    activations = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        if i < last:
            activations.append(h)

    logits = pre[-1]
    rows = np.arange(n)
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[rows, y]))

    delta = softmax(logits)
    delta[rows, y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = [None] * (2 * len(params.weights))
    for i in range(last, -1, -1):
        grads[2 * i] = activations[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0)
    return loss, grads


def per_example_gradients(params: ModelParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One flat gradient row per record, each from its own backward pass."""
    x = _as_batch(params, x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    rows = np.empty((x.shape[0], params.architecture.num_parameters))
    for i in range(x.shape[0]):
        _, grads = loss_and_gradients(params, x[i:i + 1], y[i:i + 1])
        rows[i] = flatten(grads)
    return rows


def cross_entropy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    logits = logits_batch(params, x)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    return float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(len(y)), y]))
