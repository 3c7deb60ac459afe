"""Privacy-utility sweeps: one evaluated cell per (noise parameter, seed)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from mi_guard.errors import InvalidParameterError
from mi_guard.models.access import VictimAccess
from mi_guard.models.dataset import Dataset, FourWaySplit
from mi_guard.models.mlp import ModelParams
from mi_guard.numeric import RngStream
from mi_guard.schemas.defense import DpLogitsConfig, PrivacyBudget, RrConfig
from mi_guard.schemas.experiment import ExperimentAdversary, ExperimentConfig, SweepFamily
from mi_guard.schemas.report import SweepRow
from mi_guard.schemas.training import DpSgdConfig, MlpArchitecture
from mi_guard.services.attacks import (
    Adversary,
    BinaryAttackModel,
    Calibration,
    LrnAdversary,
    LrnFreeAdversary,
    RandomGuessAdversary,
    SamplingAdversary,
    calibrate_p,
    lrn_train,
    train_shadow,
)
from mi_guard.services.datasets import split4
from mi_guard.services.defenses import (
    choose_S,
    dp_logits_defense,
    dp_logits_epsilon,
    rr_defense,
    rr_epsilon,
)
from mi_guard.services.dp_sgd import DpTrainResult, train_dpsgd
from mi_guard.services.evaluation import accuracy, evaluate_attack
from mi_guard.services.training import TrainResult, train

logger = logging.getLogger(__name__)


# ============================================================================
# Per-seed artifacts
# ============================================================================

@dataclass
class SeedContext:
    """Everything one seed of an experiment trains, built lazily and cached.

    All randomness of the seed forks from ``RngStream(seed)``: the split, the
    victim, the shadow, the attack model, calibration and every attack.
    """

    config: ExperimentConfig
    dataset: Dataset
    seed: int
    _dp_victims: dict[float, DpTrainResult] = field(default_factory=dict, repr=False)

    @cached_property
    def rng(self) -> RngStream:
        return RngStream(self.seed)

    @cached_property
    def split(self) -> FourWaySplit:
        return split4(self.dataset, self.rng.fork("split"))

    @cached_property
    def architecture(self) -> MlpArchitecture:
        return MlpArchitecture.for_dataset(self.dataset, self.config.hidden)

    @cached_property
    def victim(self) -> TrainResult:
        logger.info("[seed %d] training victim", self.seed)
        return train(self.architecture, self.split.victim_train, self.config.training,
                     self.rng.fork("victim"))

    @cached_property
    def shadow(self) -> TrainResult:
        return train_shadow(self.split, self.architecture, self.config.training, self.rng.fork("shadow"))

    @cached_property
    def attack_model(self) -> BinaryAttackModel:
        return lrn_train(self.shadow.params, self.split, self.config.training, self.rng.fork("lrn"))

    @cached_property
    def calibration(self) -> Calibration:
        sampling = self.config.sampling
        if sampling.p_star is not None:
            logger.info("[seed %d] using configured p*=%g, calibration skipped", self.seed, sampling.p_star)
            return Calibration(sampling.p_star, [])
        kind = self.dataset.kind
        return calibrate_p(self.shadow.params, self.split, sampling.grid(kind), sampling.template(kind),
                           self.rng.fork("calibrate"))

    @cached_property
    def clip_norm_s(self) -> float:
        """DP-Logits S: configured, or chosen on the victim's training records."""
        configured = self.config.defenses.dp_logits
        if configured is not None and configured.clip_norm is not None:
            return configured.clip_norm
        return choose_S(self.victim.params, self.split.victim_train)

    @cached_property
    def baseline_accuracy(self) -> float:
        return accuracy(self.victim.params, self.split.victim_test)

    def dp_victim(self, dp_config: DpSgdConfig) -> DpTrainResult:
        key = dp_config.noise_multiplier
        if key not in self._dp_victims:
            train_config = self.config.training.model_copy(update={
                "optimizer": dp_config.optimizer,
                "learning_rate": dp_config.learning_rate,
            })
            self._dp_victims[key] = train_dpsgd(
                self.architecture, self.split.victim_train, train_config, dp_config,
                self.rng.fork("victim"),
            )
        return self._dp_victims[key]

    def dp_results(self) -> list[DpTrainResult]:
        """DP-SGD victims trained so far, by increasing noise multiplier."""
        return [self._dp_victims[m] for m in sorted(self._dp_victims)]

    def adversary(
        self,
        name: ExperimentAdversary,
        *,
        scale: float | None = None,
        n_samples: int | None = None,
    ) -> Adversary:
        if name == "lrn_free":
            return LrnFreeAdversary()
        if name == "lrn":
            return LrnAdversary(self.attack_model)
        if name == "random":
            return RandomGuessAdversary(self.rng.fork("random"))
        sampling = self.config.sampling
        cfg = sampling.template(self.dataset.kind).with_scale(
            self.calibration.p_star if scale is None else scale
        )
        if n_samples is not None:
            cfg = cfg.model_copy(update={"n_samples": n_samples})
        attack_model = self.attack_model if sampling.backend == "lrn" else None
        return SamplingAdversary(cfg, self.rng.fork(f"sampling-{cfg.scale}-{cfg.n_samples}"), attack_model)

    def undefended_access(self, params: ModelParams, adversary: ExperimentAdversary) -> VictimAccess:
        """Full posteriors for posterior adversaries, top-1 labels for the sampling attack."""
        mode = "label_only" if adversary == "sampling" else "posterior"
        return VictimAccess(params, mode, name="victim")

    def dp_logits_config(self, noise_multiplier: float, adversary: ExperimentAdversary) -> tuple[DpLogitsConfig, int]:
        """DP-Logits config enforced on the access, and the q its epsilon is charged for.

        LRN-Free queries each record once (q per distinct input, raised to the
        largest number of identical victim records); LRN queries every
        victim record (q in total); the sampling attack needs N label queries
        per record, which degrades epsilon to q = N.
        """
        base = self.config.defenses.dp_logits or DpLogitsConfig(noise_multiplier=noise_multiplier)
        cfg = base.model_copy(update={"noise_multiplier": noise_multiplier, "clip_norm": self.clip_norm_s})
        records = len(self.split.victim_train) + len(self.split.victim_test)
        if adversary == "lrn":
            cfg = cfg.model_copy(update={"query_budget": records, "scope": "total"})
            return cfg, records
        if adversary == "sampling":
            n = self.config.sampling.n_samples
            cfg = cfg.model_copy(update={"query_budget": n * records, "scope": "total"})
            return cfg, n
        # identical records are the same input to the per-record budget
        rows = np.concatenate([self.split.victim_train.features, self.split.victim_test.features])
        repeats = int(np.unique(rows, axis=0, return_counts=True)[1].max())
        q = max(cfg.query_budget, repeats)
        return cfg.model_copy(update={"scope": "per_record", "query_budget": q}), q


def seed_contexts(config: ExperimentConfig, dataset: Dataset, seeds: Iterable[int]) -> dict[int, SeedContext]:
    return {seed: SeedContext(config, dataset, seed) for seed in seeds}


# ============================================================================
# Cells
# ============================================================================

def _row(family: str, value: float, seed: int, acc: float, auc_value: float,
         budget: PrivacyBudget | None, queries: int) -> SweepRow:
    return SweepRow(
        defense=family,
        param=float(value),
        seed=seed,
        accuracy=acc,
        auc=auc_value,
        epsilon=None if budget is None else budget.epsilon_or_none,
        delta=0.0 if budget is None else budget.delta,
        queries=queries,
    )


def evaluate_cell(ctx: SeedContext, family: SweepFamily, value: float,
                  adversary: ExperimentAdversary) -> SweepRow:
    split = ctx.split
    if family == "none":
        access = ctx.undefended_access(ctx.victim.params, adversary)
        result = evaluate_attack(ctx.adversary(adversary), access, split)
        return _row(family, value, ctx.seed, ctx.baseline_accuracy, result.auc, None, access.queries)

    if family == "dpsgd":
        base = ctx.config.defenses.dp_sgd or DpSgdConfig()
        dp_config = DpSgdConfig.model_validate({**base.model_dump(), "noise_multiplier": value})
        trained = ctx.dp_victim(dp_config)
        access = ctx.undefended_access(trained.params, adversary)
        result = evaluate_attack(ctx.adversary(adversary), access, split)
        acc = accuracy(trained.params, split.victim_test)
        return _row(family, value, ctx.seed, acc, result.auc, trained.budget, access.queries)

    if family == "dplogits":
        cfg, q = ctx.dp_logits_config(value, adversary)
        label_only = adversary == "sampling"
        cell_rng = ctx.rng.fork(f"dplogits-{value}")
        access = dp_logits_defense(ctx.victim.params, cfg, cell_rng.fork("attack"), label_only=label_only)
        result = evaluate_attack(ctx.adversary(adversary), access, split)
        utility = dp_logits_defense(ctx.victim.params, cfg, cell_rng.fork("utility"), label_only=True)
        acc = accuracy(utility, split.victim_test)
        budget = dp_logits_epsilon(cfg.model_copy(update={"query_budget": q}), len(split.victim_train))
        return _row(family, value, ctx.seed, acc, result.auc, budget, access.queries)

    if family == "sampling":
        access = ctx.undefended_access(ctx.victim.params, "sampling")
        result = evaluate_attack(ctx.adversary("sampling", scale=value), access, split)
        return _row(family, value, ctx.seed, ctx.baseline_accuracy, result.auc, None, access.queries)

    if family == "samples":
        access = ctx.undefended_access(ctx.victim.params, "sampling")
        result = evaluate_attack(ctx.adversary("sampling", n_samples=int(value)), access, split)
        return _row(family, value, ctx.seed, ctx.baseline_accuracy, result.auc, None, access.queries)

    if family == "rr":
        cfg = RrConfig(num_classes=ctx.dataset.num_classes, keep_probability=value, seed=ctx.seed)
        cell_rng = ctx.rng.fork(f"rr-{value}")
        access = rr_defense(ctx.victim.params, cfg, cell_rng.fork("attack"))
        result = evaluate_attack(ctx.adversary("sampling"), access, split)
        acc = accuracy(rr_defense(ctx.victim.params, cfg, cell_rng.fork("utility")), split.victim_test)
        return _row(family, value, ctx.seed, acc, result.auc, rr_epsilon(cfg), access.queries)

    raise InvalidParameterError(f"unknown sweep family '{family}'")


# ============================================================================
# Sweep
# ============================================================================

def noise_order(family: SweepFamily, grid: Iterable[float]) -> list[float]:
    """Grid values from least to most noise (a smaller keep probability is more noise)."""
    values = sorted(set(float(v) for v in grid))
    return values[::-1] if family == "rr" else values


def mean_row(rows: list[SweepRow]) -> SweepRow:
    if not rows:
        raise InvalidParameterError("cannot average an empty set of rows")
    epsilons = [r.epsilon for r in rows]
    return SweepRow(
        defense=rows[0].defense,
        param=rows[0].param,
        seed=None,
        accuracy=float(np.mean([r.accuracy for r in rows])),
        auc=float(np.mean([r.auc for r in rows])),
        epsilon=None if any(e is None for e in epsilons) else float(np.mean(epsilons)),
        delta=float(np.mean([r.delta for r in rows])),
        queries=int(round(float(np.mean([r.queries for r in rows])))),
    )


def sweep(
    family: SweepFamily,
    grid: Iterable[float],
    seeds: Iterable[int],
    contexts: dict[int, SeedContext],
    *,
    adversary: ExperimentAdversary = "lrn_free",
) -> list[SweepRow]:
    """Per-seed rows for every grid value, each block followed by its mean row.

    Blocks are ordered by increasing noise. ``contexts`` maps each seed to its
    (cached) artifacts, so the victim and shadow are trained once per seed.
    """
    seeds = list(seeds)
    if not seeds:
        raise InvalidParameterError("a sweep needs at least one seed")
    values = noise_order(family, grid)
    if not values:
        raise InvalidParameterError(f"empty grid for the {family} sweep")
    rows: list[SweepRow] = []
    for value in values:
        block = []
        for seed in seeds:
            row = evaluate_cell(contexts[seed], family, value, adversary)
            logger.info("sweep %s=%g seed=%d: acc=%.4f auc=%.4f eps=%s", family, value, seed,
                        row.accuracy, row.auc, row.epsilon)
            block.append(row)
        rows.extend(block)
        rows.append(mean_row(block))
    return rows


def baseline_accuracy(contexts: dict[int, SeedContext]) -> float:
    return float(np.mean([ctx.baseline_accuracy for ctx in contexts.values()]))
