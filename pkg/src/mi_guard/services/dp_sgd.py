"""DP-SGD: per-example clipping plus Gaussian noise, with an RDP accountant."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from dp_accounting import dp_event
from dp_accounting.rdp import rdp_privacy_accountant

from mi_guard.errors import InvalidParameterError
from mi_guard.models.dataset import Dataset
from mi_guard.models.mlp import ModelParams, per_example_gradients, cross_entropy
from mi_guard.numeric import RngStream, gaussian_sample, l2_clip_rows
from mi_guard.schemas.defense import PrivacyBudget, SensitivityBound
from mi_guard.schemas.report import AccountantReport
from mi_guard.schemas.training import DpSgdConfig, MlpArchitecture, TrainConfig
from mi_guard.services.training import TrainResult, batch_gradient, fit

logger = logging.getLogger(__name__)

# Orders below 2 make the subsampled-Gaussian bound fail to converge
RDP_ORDERS: tuple[float, ...] = (
    tuple(1 + x / 10.0 for x in range(10, 100)) + tuple(float(a) for a in range(12, 64)) + (128.0, 256.0, 512.0)
)
ACCOUNTANT_METHOD = "rdp/poisson-subsampled-gaussian (dp-accounting); not the moments accountant"


@dataclass
class DpTrainResult:
    training: TrainResult
    budget: PrivacyBudget
    accountant: AccountantReport
    clipped_norms: list[float]

    @property
    def params(self) -> ModelParams:
        return self.training.params


def sensitivity(cfg: DpSgdConfig) -> SensitivityBound:
    return SensitivityBound(value=cfg.clip_norm, bounds="per-example clipped gradient")


# ============================================================================
# One step
# ============================================================================

def _clip_and_noise(
    per_example: np.ndarray, cfg: DpSgdConfig, rng: RngStream
) -> tuple[np.ndarray, float]:
    grads = np.asarray(per_example, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise InvalidParameterError("DP-SGD step needs a non-empty lot of per-example gradients")
    clipped = l2_clip_rows(grads, cfg.clip_norm)
    max_norm = float(np.linalg.norm(clipped, axis=1).max())
    noise = gaussian_sample(rng, 0.0, cfg.sigma, grads.shape[1])
    return (clipped.sum(axis=0) + noise) / grads.shape[0], max_norm


def dpsgd_step(per_example: np.ndarray, cfg: DpSgdConfig, rng: RngStream) -> np.ndarray:
    """(1/L) * (sum of gradients clipped to C + N(0, (m*C)^2 I))."""
    noisy, _ = _clip_and_noise(per_example, cfg, rng)
    return noisy


# ============================================================================
# Training
# ============================================================================

def train_dpsgd(
    architecture: MlpArchitecture,
    dataset: Dataset,
    train_config: TrainConfig,
    dp_config: DpSgdConfig,
    rng: RngStream | None = None,
) -> DpTrainResult:
    """Train with every update computed by :func:`dpsgd_step`.

    Lots of ``lot_size`` records are drawn from a fresh uniform permutation each
    epoch. The update rule is the one named in ``train_config``. With clipping
    disabled and m = 0 the run is bit-identical to ``train`` under the same rng.
    """
    if not dp_config.clip_norm > 0:
        raise InvalidParameterError(f"clip norm must be > 0, got {dp_config.clip_norm}")
    if dp_config.lot_size > len(dataset):
        raise InvalidParameterError(
            f"lot size {dp_config.lot_size} exceeds training set size {len(dataset)}"
        )
    rng = rng or RngStream(train_config.seed)
    config = train_config.model_copy(update={"batch_size": dp_config.lot_size})
    clipped_norms: list[float] = []
    noise_rng = rng.fork("dp-noise")

    def private_gradient(params: ModelParams, x: np.ndarray, y: np.ndarray, step: int):
        if dp_config.is_degenerate:
            return batch_gradient(params, x, y, step)
        grads = per_example_gradients(params, x, y)
        noisy, max_norm = _clip_and_noise(grads, dp_config, noise_rng.fork(step))
        clipped_norms.append(max_norm)
        return cross_entropy(params, x, y), noisy

    logger.info(
        "DP-SGD on '%s': C=%g m=%g L=%d", dataset.name, dp_config.clip_norm,
        dp_config.noise_multiplier, dp_config.lot_size,
    )
    result = fit(architecture, dataset, config, rng, gradient_fn=private_gradient)
    delta = dp_config.delta or 1.0 / len(dataset)
    budget, report = account(dp_config, result.steps, result.fit_size, delta)
    logger.info("DP-SGD finished after %d steps: epsilon=%s delta=%g", result.steps,
                budget.epsilon, budget.delta)
    return DpTrainResult(result, budget, report, clipped_norms)


# ============================================================================
# Accountant
# ============================================================================

def account(
    cfg: DpSgdConfig, steps: int, dataset_size: int, delta: float | None = None
) -> tuple[PrivacyBudget, AccountantReport]:
    if steps < 0:
        raise InvalidParameterError(f"steps must be >= 0, got {steps}")
    if dataset_size < 1:
        raise InvalidParameterError(f"dataset size must be positive, got {dataset_size}")
    delta = delta or cfg.delta or 1.0 / dataset_size
    rate = min(1.0, cfg.lot_size / dataset_size)

    if steps == 0:
        epsilon = 0.0
    elif cfg.noise_multiplier == 0:
        logger.warning("Noise multiplier 0: DP-SGD gives no finite epsilon")
        epsilon = math.inf
    else:
        accountant = rdp_privacy_accountant.RdpAccountant(list(RDP_ORDERS))
        event = dp_event.PoissonSampledDpEvent(
            sampling_probability=rate,
            event=dp_event.GaussianDpEvent(cfg.noise_multiplier),
        )
        accountant.compose(event, steps)
        epsilon = float(accountant.get_epsilon(delta))

    budget = PrivacyBudget(epsilon=epsilon, delta=delta)
    report = AccountantReport(
        mechanism="dpsgd",
        method=ACCOUNTANT_METHOD,
        noise_multiplier=cfg.noise_multiplier,
        clip_norm=None if math.isinf(cfg.clip_norm) else cfg.clip_norm,
        lot_size=cfg.lot_size,
        steps=steps,
        sampling_rate=rate,
        delta=delta,
        epsilon=budget.epsilon_or_none,
    )
    return budget, report


def account_epsilon(
    cfg: DpSgdConfig, steps: int, dataset_size: int, delta: float | None = None
) -> PrivacyBudget:
    """(epsilon, delta) after ``steps`` subsampled Gaussian steps at rate L/|d|.

    delta defaults to 1/|d|. m = 0 reports an unbounded epsilon.
    """
    budget, _ = account(cfg, steps, dataset_size, delta)
    return budget
