"""Membership inference adversaries: LRN, LRN-Free and the label-only sampling attack."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from mi_guard.config import settings
from mi_guard.errors import DatasetError, InvalidParameterError
from mi_guard.models.access import VictimAccess
from mi_guard.models.dataset import Dataset, FourWaySplit
from mi_guard.models.mlp import ModelParams, posterior
from mi_guard.numeric import RngStream
from mi_guard.schemas.attack import MembershipScore, PerturbationConfig
from mi_guard.schemas.training import MlpArchitecture, TrainConfig
from mi_guard.services.evaluation import auc
from mi_guard.services.training import TrainResult, train

logger = logging.getLogger(__name__)

ATTACK_HIDDEN = 64


# ============================================================================
# Shadow model + LRN
# ============================================================================

def train_shadow(
    split: FourWaySplit,
    architecture: MlpArchitecture,
    config: TrainConfig,
    rng: RngStream | None = None,
) -> TrainResult:
    """Train the shadow on shadow_train with the victim's architecture and procedure."""
    logger.info("Training shadow model on %d records", len(split.shadow_train))
    return train(architecture, split.shadow_train, config, rng)


@dataclass(frozen=True)
class BinaryAttackModel:
    """One 64-unit hidden layer, sigmoid output over the sorted posterior.

    The sigmoid is realised as the two-logit softmax: Pr(member) =
    sigmoid(l1 - l0), so the network trains with the shared classifier loop.
    """

    params: ModelParams

    @property
    def num_classes(self) -> int:
        return self.params.architecture.input_dim

    def member_probability(self, posteriors: np.ndarray) -> np.ndarray:
        features = sort_posteriors(posteriors)
        if features.shape[1] != self.num_classes:
            raise InvalidParameterError(
                f"attack model expects {self.num_classes}-class posteriors, got {features.shape[1]}"
            )
        return posterior(self.params, features)[:, 1]


def sort_posteriors(posteriors: np.ndarray) -> np.ndarray:
    """Entries of each posterior in descending order (label-permutation invariant)."""
    p = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    return -np.sort(-p, axis=1)


def lrn_train(
    shadow: ModelParams,
    split: FourWaySplit,
    config: TrainConfig,
    rng: RngStream | None = None,
) -> BinaryAttackModel:
    """Fit the binary attack classifier on shadow posteriors (train=1, test=0)."""
    if len(split.shadow_train) == 0 or len(split.shadow_test) == 0:
        raise DatasetError("attack training needs both shadow members and non-members")
    members = posterior(shadow, split.shadow_train.features)
    non_members = posterior(shadow, split.shadow_test.features)
    return fit_attack_model(members, non_members, config, rng)


def fit_attack_model(
    members: np.ndarray,
    non_members: np.ndarray,
    config: TrainConfig,
    rng: RngStream | None = None,
) -> BinaryAttackModel:
    """Train the attack classifier on member / non-member posterior vectors."""
    if len(members) == 0 or len(non_members) == 0:
        raise DatasetError("attack training needs both members and non-members")
    features = np.concatenate([sort_posteriors(members), sort_posteriors(non_members)])
    labels = np.concatenate([np.ones(len(members)), np.zeros(len(non_members))])
    attack_set = Dataset(features, labels, 2, "continuous", name="attack_train")
    arch = MlpArchitecture(input_dim=features.shape[1], widths=(ATTACK_HIDDEN, 2))
    result = train(arch, attack_set, config, (rng or RngStream(config.seed)).fork("attack-model"))
    logger.info("Attack model trained for %d epochs", len(result.trace))
    return BinaryAttackModel(result.params)


def _scores(values: np.ndarray, prefix: str, membership: bool | None) -> list[MembershipScore]:
    return [
        MembershipScore(record_id=f"{prefix}-{i}", score=float(v), is_member=membership)
        for i, v in enumerate(values)
    ]


def lrn_score(
    attack_model: BinaryAttackModel,
    access: VictimAccess,
    records: Dataset,
    *,
    membership: bool | None = None,
) -> list[MembershipScore]:
    """Sigmoid output of the attack model on the victim's (sorted) posteriors."""
    probs = access.posterior(records.features)
    return _scores(attack_model.member_probability(probs), records.name, membership)


def lrnfree_score(
    access: VictimAccess,
    records: Dataset,
    *,
    membership: bool | None = None,
) -> list[MembershipScore]:
    """Maximum posterior entry; thresholds are swept later by the AUC."""
    probs = access.posterior(records.features)
    return _scores(probs.max(axis=1), records.name, membership)


# ============================================================================
# Sampling attack
# ============================================================================

@dataclass(frozen=True)
class PosteriorEstimate:
    """Normalised histogram of the labels returned for N perturbations."""

    histogram: np.ndarray
    n_samples: int


def _perturb_many(x: np.ndarray, cfg: PerturbationConfig, gen: np.random.Generator, n: int) -> np.ndarray:
    copies = np.broadcast_to(x, (n, x.shape[-1]))
    if cfg.scale == 0:
        return copies.copy()
    if cfg.kind == "gaussian":
        return copies + gen.normal(0.0, cfg.scale, size=copies.shape)
    flips = gen.random(copies.shape) < cfg.scale
    return np.where(flips, 1.0 - copies, copies)


def _check_kind(x: np.ndarray, cfg: PerturbationConfig) -> None:
    if cfg.kind == "bitflip" and not np.all((x == 0.0) | (x == 1.0)):
        raise InvalidParameterError("bit-flip perturbation needs binary features")


def perturb(x: np.ndarray, cfg: PerturbationConfig, rng: RngStream) -> np.ndarray:
    """gaussian: x + N(0, p^2) per coordinate; bitflip: each bit flipped w.p. p."""
    x = np.asarray(x, dtype=np.float64)
    _check_kind(x, cfg)
    return _perturb_many(x, cfg, rng.generator(), 1)[0]


def sampling_estimate(
    access: VictimAccess, x: np.ndarray, cfg: PerturbationConfig, rng: RngStream
) -> PosteriorEstimate:
    """Query the label of N fresh perturbations of ``x`` and histogram them."""
    x = np.asarray(x, dtype=np.float64)
    _check_kind(x, cfg)
    labels = access.label(_perturb_many(x, cfg, rng.generator(), cfg.n_samples))
    counts = np.bincount(labels, minlength=access.num_classes)
    return PosteriorEstimate(counts / cfg.n_samples, cfg.n_samples)


def sampling_estimates(
    access: VictimAccess, features: np.ndarray, cfg: PerturbationConfig, rng: RngStream
) -> np.ndarray:
    """Histogram estimates for many records (one row each).

    Record ``i`` draws from ``rng.fork(i)``, so the result is independent of
    how records are batched into queries.
    """
    features = np.asarray(features, dtype=np.float64)
    _check_kind(features, cfg)
    n, c = cfg.n_samples, access.num_classes
    out = np.empty((len(features), c))
    chunk = settings.sampling_chunk
    for start in range(0, len(features), chunk):
        block = features[start:start + chunk]
        queries = np.concatenate([
            _perturb_many(x, cfg, rng.fork(start + j).generator(), n) for j, x in enumerate(block)
        ])
        labels = np.asarray(access.label(queries)).reshape(len(block), n)
        for j, row in enumerate(labels):
            out[start + j] = np.bincount(row, minlength=c) / n
    return out


@dataclass(frozen=True)
class Calibration:
    p_star: float
    table: list[tuple[float, float]]


def calibrate_p(
    shadow: ModelParams,
    split: FourWaySplit,
    p_grid: list[float] | tuple[float, ...],
    template: PerturbationConfig,
    rng: RngStream,
) -> Calibration:
    """Pick the p whose sampling attack on the label-only shadow scores the best AUC.

    Only the shadow is queried; ties go to the smaller p.
    """
    if not len(p_grid):
        raise InvalidParameterError("calibration grid is empty")
    shadow_access = VictimAccess(shadow, "label_only", name="shadow")
    table: list[tuple[float, float]] = []
    for i, p in enumerate(sorted(p_grid)):
        cfg = template.with_scale(p)
        cell = rng.fork(f"calibrate-{i}")
        members = sampling_estimates(shadow_access, split.shadow_train.features, cfg, cell.fork("in"))
        outsiders = sampling_estimates(shadow_access, split.shadow_test.features, cfg, cell.fork("out"))
        scores = _scores(members.max(axis=1), "shadow_train", True) + _scores(
            outsiders.max(axis=1), "shadow_test", False
        )
        table.append((float(p), auc(scores).auc))
        logger.debug("calibration p=%g auc=%.4f", p, table[-1][1])
    p_star, best = table[0]
    for p, value in table[1:]:
        if value > best:
            p_star, best = p, value
    logger.info("Calibrated p*=%g (shadow AUC %.4f, %d shadow queries)", p_star, best,
                shadow_access.queries)
    return Calibration(p_star, table)


def sampling_attack(
    access: VictimAccess,
    split: FourWaySplit,
    p_star: float,
    cfg: PerturbationConfig,
    rng: RngStream,
    *,
    attack_model: BinaryAttackModel | None = None,
) -> list[MembershipScore]:
    """Score victim_train (members) and victim_test through labels only.

    The back-end is LRN-Free (max histogram entry) unless an attack model is
    supplied, in which case the LRN classifier scores the estimates.
    """
    cfg = cfg.with_scale(p_star)
    scored = []
    for part, membership in ((split.victim_train, True), (split.victim_test, False)):
        estimates = sampling_estimates(access, part.features, cfg, rng.fork(part.name))
        values = (
            attack_model.member_probability(estimates) if attack_model else estimates.max(axis=1)
        )
        scored.extend(_scores(values, part.name, membership))
    return scored


# ============================================================================
# Adversary objects (uniform interface for evaluation and sweeps)
# ============================================================================

class Adversary(Protocol):
    name: str

    def score(self, access: VictimAccess, records: Dataset) -> np.ndarray: ...


class LrnFreeAdversary:
    name = "lrn_free"

    def score(self, access: VictimAccess, records: Dataset) -> np.ndarray:
        return access.posterior(records.features).max(axis=1)


class LrnAdversary:
    name = "lrn"

    def __init__(self, attack_model: BinaryAttackModel):
        self.attack_model = attack_model

    def score(self, access: VictimAccess, records: Dataset) -> np.ndarray:
        return self.attack_model.member_probability(access.posterior(records.features))


class SamplingAdversary:
    name = "sampling"

    def __init__(
        self,
        cfg: PerturbationConfig,
        rng: RngStream,
        attack_model: BinaryAttackModel | None = None,
    ):
        self.cfg = cfg
        self.rng = rng
        self.attack_model = attack_model

    def score(self, access: VictimAccess, records: Dataset) -> np.ndarray:
        estimates = sampling_estimates(access, records.features, self.cfg, self.rng.fork(records.name))
        if self.attack_model is not None:
            return self.attack_model.member_probability(estimates)
        return estimates.max(axis=1)


class RandomGuessAdversary:
    name = "random"

    def __init__(self, rng: RngStream):
        self.rng = rng

    def score(self, access: VictimAccess, records: Dataset) -> np.ndarray:
        return self.rng.fork(records.name).generator().random(len(records))
