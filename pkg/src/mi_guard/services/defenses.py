"""Prediction-time defenses: DP-Logits, argmax suppression, randomized response."""

from __future__ import annotations

import logging
import math

import numpy as np

from mi_guard.errors import InvalidParameterError
from mi_guard.models.access import QueryBudget, VictimAccess
from mi_guard.models.dataset import Dataset
from mi_guard.models.mlp import ModelParams, logits_batch
from mi_guard.numeric import RngStream, l2_clip, l2_clip_rows
from mi_guard.schemas.defense import (
    DefenseReport,
    DpLogitsConfig,
    PrivacyBudget,
    RrConfig,
    SensitivityBound,
)

logger = logging.getLogger(__name__)

CLIP_PERCENTILE = 60


# ============================================================================
# DP-Logits
# ============================================================================

def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float:
    """Smallest value with at least ``percentile``% of the data at or below it."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise InvalidParameterError("percentile of an empty set")
    rank = max(1, math.ceil(percentile / 100.0 * values.size))
    return float(values[rank - 1])


def choose_S(params: ModelParams, calibration: Dataset | np.ndarray) -> float:  # noqa: N802
    """Clip norm S: nearest-rank 60th percentile of unclipped logit norms."""
    features = calibration.features if isinstance(calibration, Dataset) else np.asarray(calibration)
    if len(features) == 0:
        raise InvalidParameterError("cannot choose S from an empty calibration set")
    norms = np.linalg.norm(logits_batch(params, features), axis=1)
    s = nearest_rank_percentile(norms, CLIP_PERCENTILE)
    logger.info("DP-Logits clip norm S=%.4f from %d calibration records", s, len(features))
    return s


def _require_clip(cfg: DpLogitsConfig) -> float:
    if cfg.clip_norm is None:
        raise InvalidParameterError("DP-Logits needs a clip norm S (see choose_S)")
    return cfg.clip_norm


def dp_logits_perturb(logits: np.ndarray, cfg: DpLogitsConfig, rng: RngStream) -> np.ndarray:
    """Clip to norm S then add i.i.d. N(0, (m*S)^2) per coordinate."""
    s = _require_clip(cfg)
    clipped = l2_clip(logits, s)
    if cfg.noise_multiplier == 0:
        return clipped
    return clipped + rng.generator().normal(0.0, cfg.noise_multiplier * s, size=clipped.shape)


def dp_logits_epsilon(cfg: DpLogitsConfig, dataset_size: int) -> PrivacyBudget:
    """epsilon = (q/m) * sqrt(2 ln(1.25/delta)), delta = 1/|victim train| by default."""
    if dataset_size < 1:
        raise InvalidParameterError(f"dataset size must be positive, got {dataset_size}")
    delta = cfg.delta or 1.0 / dataset_size
    if cfg.noise_multiplier == 0:
        return PrivacyBudget.unbounded_at(delta)
    epsilon = (cfg.query_budget / cfg.noise_multiplier) * math.sqrt(2.0 * math.log(1.25 / delta))
    return PrivacyBudget(epsilon=epsilon, delta=delta)


def dp_logits_sensitivity(cfg: DpLogitsConfig) -> SensitivityBound:
    return SensitivityBound(value=_require_clip(cfg), bounds="clipped logit vector")


def dp_logits_defense(
    params: ModelParams,
    cfg: DpLogitsConfig,
    rng: RngStream,
    *,
    label_only: bool = False,
) -> VictimAccess:
    """Posterior access over noisy clipped logits; noise is fresh on every query.

    The query budget q is enforced by the access (per distinct input or in
    total), so repeated querying cannot average the noise away silently.
    """
    s = _require_clip(cfg)
    gen = rng.generator()
    sigma = cfg.noise_multiplier * s

    def perturb(logits: np.ndarray) -> np.ndarray:
        clipped = l2_clip_rows(logits, s)
        if sigma == 0:
            return clipped
        return clipped + gen.normal(0.0, sigma, size=clipped.shape)

    return VictimAccess(
        params,
        "label_only" if label_only else "posterior",
        logit_transform=perturb,
        budget=QueryBudget(cfg.query_budget, cfg.scope),
        name="dp_logits",
    )


# ============================================================================
# Argmax
# ============================================================================

def argmax_defense(params: ModelParams) -> VictimAccess:
    """Only the top-1 label is reachable; posterior requests fail closed."""
    return VictimAccess(params, "label_only", name="argmax")


# ============================================================================
# Randomized response
# ============================================================================

def _check_rr(cfg: RrConfig) -> None:
    if cfg.num_classes < 2:
        raise InvalidParameterError(f"randomized response needs C >= 2, got {cfg.num_classes}")


def rr_apply_batch(labels: np.ndarray, cfg: RrConfig, gen: np.random.Generator) -> np.ndarray:
    """Keep each label w.p. ``keep_probability``, else a uniform *other* class.

    At keep = 3/4 this is the two-fair-coin protocol: tails reveals the label,
    heads-heads reveals it, heads-tails reveals a uniformly chosen other class.
    """
    _check_rr(cfg)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.num_classes):
        raise InvalidParameterError(f"labels must lie in [0, {cfg.num_classes})")
    keep = gen.random(labels.shape) < cfg.keep_probability
    # uniform over the C-1 other classes: draw in [0, C-1) and skip the true label
    other = gen.integers(0, cfg.num_classes - 1, size=labels.shape)
    other = other + (other >= labels)
    return np.where(keep, labels, other)


def rr_apply(label: int, cfg: RrConfig, rng: RngStream) -> int:
    _check_rr(cfg)
    if not 0 <= label < cfg.num_classes:
        raise InvalidParameterError(f"label {label} outside [0, {cfg.num_classes})")
    return int(rr_apply_batch(np.array([label]), cfg, rng.generator())[0])


def rr_epsilon(cfg: RrConfig) -> PrivacyBudget:
    """epsilon = ln(keep*(C-1)/(1-keep)); ln(3(C-1)) at keep = 3/4, delta = 0."""
    _check_rr(cfg)
    keep = cfg.keep_probability
    ratio = keep * (cfg.num_classes - 1) / (1.0 - keep)
    # below 1 the released label favours the other classes; the bound is symmetric
    return PrivacyBudget(epsilon=abs(math.log(ratio)), delta=0.0)


def rr_expected_accuracy(accuracy: float, num_classes: int, keep_probability: float = 0.75) -> float:
    """keep*acc + (1-keep)/(C-1)*(1-acc)."""
    if num_classes < 2:
        raise InvalidParameterError(f"randomized response needs C >= 2, got {num_classes}")
    if not 0.0 <= accuracy <= 1.0:
        raise InvalidParameterError(f"accuracy must lie in [0, 1], got {accuracy}")
    return keep_probability * accuracy + (1.0 - keep_probability) / (num_classes - 1) * (1.0 - accuracy)


def rr_defense(params: ModelParams, cfg: RrConfig, rng: RngStream | None = None) -> VictimAccess:
    """Argmax access whose released labels go through randomized response."""
    _check_rr(cfg)
    if cfg.num_classes != params.architecture.num_classes:
        raise InvalidParameterError(
            f"RR configured for {cfg.num_classes} classes, model has {params.architecture.num_classes}"
        )
    gen = (rng or RngStream(cfg.seed)).generator()
    return VictimAccess(
        params, "rr_label", label_transform=lambda labels: rr_apply_batch(labels, cfg, gen), name="rr"
    )


# ============================================================================
# Reports
# ============================================================================

def dp_logits_report(cfg: DpLogitsConfig, dataset_size: int, *, query_degraded: bool = False) -> DefenseReport:
    budget = dp_logits_epsilon(cfg, dataset_size)
    if query_degraded:
        logger.warning("DP-Logits epsilon is query-degraded: q=%d label queries per record", cfg.query_budget)
    return DefenseReport(
        name="dp_logits",
        parameters={"S": cfg.clip_norm, "m": cfg.noise_multiplier, "scope": cfg.scope},
        epsilon=budget.epsilon_or_none,
        delta=budget.delta,
        q=cfg.query_budget,
        query_degraded=query_degraded,
    )


def rr_report(cfg: RrConfig) -> DefenseReport:
    budget = rr_epsilon(cfg)
    return DefenseReport(
        name="rr",
        parameters={"C": cfg.num_classes, "keep_probability": cfg.keep_probability},
        epsilon=budget.epsilon,
        delta=0.0,
    )


def argmax_report() -> DefenseReport:
    return DefenseReport(name="argmax", parameters={}, epsilon=None, delta=0.0)
