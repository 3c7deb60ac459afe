"""Minibatch training with early stopping for the victim and shadow models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mi_guard.errors import DatasetError, DivergenceError
from mi_guard.models.dataset import Dataset
from mi_guard.models.mlp import (
    ModelParams,
    cross_entropy,
    flatten,
    init_params,
    loss_and_gradients,
    predict_label,
)
from mi_guard.numeric import RngStream
from mi_guard.schemas.training import EpochStats, MlpArchitecture, TrainConfig

logger = logging.getLogger(__name__)

# (params, batch features, batch labels, global step) -> (batch loss, flat gradient)
GradientFn = Callable[[ModelParams, np.ndarray, np.ndarray, int], tuple[float, np.ndarray]]


@dataclass
class TrainResult:
    params: ModelParams
    trace: list[EpochStats]
    best_epoch: int
    steps: int
    dataset_name: str
    fit_size: int


# ============================================================================
# Optimizers (operate on the flat parameter vector)
# ============================================================================

class Sgd:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def update(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.learning_rate * grad


@dataclass
class Adam:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _m: np.ndarray | None = field(default=None, repr=False)
    _v: np.ndarray | None = field(default=None, repr=False)
    _t: int = 0

    def update(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._m is None:
            self._m = np.zeros_like(theta)
            self._v = np.zeros_like(theta)
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad * grad
        m_hat = self._m / (1 - self.beta1 ** self._t)
        v_hat = self._v / (1 - self.beta2 ** self._t)
        return theta - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig):
    return Adam(config.learning_rate) if config.optimizer == "adam" else Sgd(config.learning_rate)


def batch_gradient(params: ModelParams, x: np.ndarray, y: np.ndarray, step: int) -> tuple[float, np.ndarray]:
    loss, grads = loss_and_gradients(params, x, y)
    return loss, flatten(grads)


# ============================================================================
# Training loop
# ============================================================================

def _holdout(n: int, config: TrainConfig, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(round(n * config.validation_fraction))
    if n_val < 1 or n - n_val < 1:
        if config.validation_fraction > 0:
            logger.warning("Training set of %d records too small to hold out; early stopping off", n)
        return np.arange(n), np.array([], dtype=np.int64)
    perm = rng.fork("holdout").generator().permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _accuracy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_label(params, x) == y))


def fit(
    architecture: MlpArchitecture,
    dataset: Dataset,
    config: TrainConfig,
    rng: RngStream,
    gradient_fn: GradientFn = batch_gradient,
) -> TrainResult:
    """The shared minibatch loop; ``gradient_fn`` decides what each step applies.

    A fraction of the training split is held out; training stops once held-out
    accuracy fails to improve for ``patience`` epochs and the best parameters
    are restored.
    """
    if len(dataset) == 0:
        raise DatasetError(f"cannot train on empty dataset '{dataset.name}'")
    if architecture.input_dim != dataset.dim or architecture.num_classes != dataset.num_classes:
        raise DatasetError(
            f"architecture {architecture.input_dim}->{architecture.num_classes} does not match "
            f"dataset D={dataset.dim} C={dataset.num_classes}"
        )
    fit_idx, val_idx = _holdout(len(dataset), config, rng)
    x_fit, y_fit = dataset.features[fit_idx], dataset.labels[fit_idx]
    x_val, y_val = dataset.features[val_idx], dataset.labels[val_idx]

    params = init_params(architecture, rng.fork("init"))
    theta = params.flat()
    optimizer = make_optimizer(config)
    best, best_epoch, best_acc, stale = params, 0, -math.inf, 0
    trace: list[EpochStats] = []
    step = 0

    logger.info(
        "Training %s on '%s' (%d fit / %d held out, %s, lr=%g)",
        architecture.widths, dataset.name, len(fit_idx), len(val_idx),
        config.optimizer, config.learning_rate,
    )
    for epoch in range(1, config.max_epochs + 1):
        order = rng.fork(f"epoch-{epoch}").generator().permutation(len(fit_idx))
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grad = gradient_fn(params, x_fit[batch], y_fit[batch], step)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            theta = optimizer.update(theta, grad)
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(epoch, float("nan"))
            params = ModelParams.from_flat(architecture, theta)
            step += 1

        epoch_loss = cross_entropy(params, x_fit, y_fit)
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        stats = EpochStats(
            epoch=epoch,
            loss=epoch_loss,
            train_accuracy=_accuracy(params, x_fit, y_fit),
            validation_accuracy=_accuracy(params, x_val, y_val) if len(val_idx) else None,
        )
        trace.append(stats)
        logger.debug("epoch %d loss=%.4f acc=%.3f val=%s", epoch, stats.loss,
                     stats.train_accuracy, stats.validation_accuracy)

        if stats.validation_accuracy is None:
            best, best_epoch = params, epoch
            continue
        if stats.validation_accuracy > best_acc:
            best, best_epoch, best_acc, stale = params, epoch, stats.validation_accuracy, 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("Early stop at epoch %d (best epoch %d)", epoch, best_epoch)
                break

    return TrainResult(
        params=best,
        trace=trace,
        best_epoch=best_epoch,
        steps=step,
        dataset_name=dataset.name,
        fit_size=len(fit_idx),
    )


def train(
    architecture: MlpArchitecture,
    dataset: Dataset,
    config: TrainConfig,
    rng: RngStream | None = None,
) -> TrainResult:
    """Non-private training; deterministic in (config, rng)."""
    return fit(architecture, dataset, config, rng or RngStream(config.seed))
