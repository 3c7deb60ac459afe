"""Threshold-free attack evaluation (AUC) and utility measurement."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Iterable

import numpy as np
from scipy.stats import rankdata

from mi_guard.errors import InvalidParameterError
from mi_guard.models.access import VictimAccess
from mi_guard.models.dataset import Dataset, FourWaySplit
from mi_guard.models.mlp import ModelParams, predict_label
from mi_guard.schemas.attack import MembershipScore
from mi_guard.schemas.report import AucResult, SweepRow

if TYPE_CHECKING:
    from mi_guard.services.attacks import Adversary

logger = logging.getLogger(__name__)


def auc(scores: Iterable[MembershipScore]) -> AucResult:
    """Pr(random member outscores random non-member), ties counting 1/2.

    Computed from average ranks (Mann-Whitney U), O(n log n).
    """
    scores = list(scores)
    if any(s.is_member is None for s in scores):
        raise InvalidParameterError("AUC needs the ground-truth membership of every score")
    values = np.array([s.score for s in scores], dtype=np.float64)
    is_member = np.array([bool(s.is_member) for s in scores])
    n_in, n_out = int(is_member.sum()), int((~is_member).sum())
    if n_in == 0 or n_out == 0:
        raise InvalidParameterError(
            f"AUC needs members and non-members, got {n_in} and {n_out}"
        )
    ranks = rankdata(values, method="average")
    u = ranks[is_member].sum() - n_in * (n_in + 1) / 2.0
    value = min(1.0, max(0.0, float(u / (n_in * n_out))))
    return AucResult(auc=value, members=n_in, non_members=n_out)


def accuracy(target: ModelParams | VictimAccess, dataset: Dataset) -> float:
    """Fraction of records whose released label matches the ground truth."""
    if len(dataset) == 0:
        raise InvalidParameterError("accuracy of an empty dataset")
    if isinstance(target, VictimAccess):
        labels = target.label(dataset.features)
    else:
        labels = predict_label(target, dataset.features)
    return float(np.mean(np.asarray(labels) == dataset.labels))


def score_split(adversary: "Adversary", access: VictimAccess, split: FourWaySplit) -> list[MembershipScore]:
    """Adversary scores on victim_train (members) and victim_test (non-members)."""
    scored: list[MembershipScore] = []
    for part, membership in ((split.victim_train, True), (split.victim_test, False)):
        values = adversary.score(access, part)
        scored.extend(
            MembershipScore(record_id=f"{part.name}-{i}", score=float(v), is_member=membership)
            for i, v in enumerate(values)
        )
    return scored


def evaluate_attack(adversary: "Adversary", access: VictimAccess, split: FourWaySplit) -> AucResult:
    result = auc(score_split(adversary, access, split))
    logger.info("%s against %s: AUC=%.4f (%d queries so far)", adversary.name, access.name,
                result.auc, access.queries)
    return result


def select_optimal_noise(
    rows: list[SweepRow], baseline_accuracy: float, fraction: float = 0.8
) -> SweepRow | None:
    """Largest-noise mean row whose accuracy stays within ``fraction`` of the baseline.

    Rows must come from one sweep and already be ordered by increasing noise.
    """
    candidates = [r for r in rows if r.seed is None and r.accuracy >= fraction * baseline_accuracy]
    return candidates[-1] if candidates else None
