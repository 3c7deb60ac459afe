"""Pipeline stages: each takes the run state and returns a partial update."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from mi_guard.errors import DefenseError
from mi_guard.models.access import VictimAccess
from mi_guard.pipeline.state import RunState
from mi_guard.schemas.defense import DefenseReport, RrConfig
from mi_guard.schemas.experiment import ExperimentAdversary, POSTERIOR_ADVERSARIES
from mi_guard.schemas.report import REPORT_SCHEMA_VERSION
from mi_guard.schemas.training import DpSgdConfig
from mi_guard.services.checkpoints import save_checkpoint
from mi_guard.services.datasets import load_dataset
from mi_guard.services.defenses import (
    argmax_defense,
    argmax_report,
    dp_logits_defense,
    dp_logits_report,
    rr_defense,
    rr_report,
)
from mi_guard.services.evaluation import accuracy, auc, score_split, select_optimal_noise
from mi_guard.services.reports import config_hash, emit_report, write_json, write_scores_csv
from mi_guard.services.sweeps import SeedContext, baseline_accuracy, seed_contexts, sweep

logger = logging.getLogger(__name__)


def _seed_dir(state: RunState, seed: int) -> Path:
    return state["output_dir"] / f"seed-{seed}"


def _artifacts(state: RunState, *paths: Path) -> list[str]:
    return [*state.get("artifacts", []), *(str(p) for p in paths)]


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


# ============================================================================
# PREPARE
# ============================================================================

def prepare_stage(state: RunState) -> dict:
    config = state["config"]
    dataset = load_dataset(config.dataset.source)
    logger.info("Prepared '%s': %d records, seeds %s", config.name, len(dataset), config.seeds)
    return {"dataset": dataset, "contexts": seed_contexts(config, dataset, config.seeds)}


# ============================================================================
# TRAIN
# ============================================================================

def _training_summary(ctx: SeedContext) -> dict[str, Any]:
    summary = {}
    for role, result in (("victim", ctx.victim), ("shadow", ctx.shadow)):
        summary[role] = {
            "dataset": result.dataset_name,
            "best_epoch": result.best_epoch,
            "steps": result.steps,
            "trace": [stats.model_dump(mode="json") for stats in result.trace],
        }
    summary["victim"]["test_accuracy"] = ctx.baseline_accuracy
    return summary


def train_stage(state: RunState) -> dict:
    """Victim and shadow checkpoints plus training traces for every seed."""
    written = []
    for seed, ctx in state["contexts"].items():
        seed_dir = _seed_dir(state, seed)
        written.append(save_checkpoint(ctx.victim.params, seed_dir / "victim.json"))
        written.append(save_checkpoint(ctx.shadow.params, seed_dir / "shadow.json"))
        written.append(write_json(_training_summary(ctx), seed_dir / "training.json"))
        logger.info("[seed %d] victim test accuracy %.4f", seed, ctx.baseline_accuracy)
    return {"artifacts": _artifacts(state, *written)}


# ============================================================================
# ATTACK
# ============================================================================

def attack_stage(state: RunState) -> dict:
    """Every configured adversary against the undefended victim."""
    config = state["config"]
    results, written = [], []
    for seed, ctx in state["contexts"].items():
        for name in config.adversaries:
            access = ctx.undefended_access(ctx.victim.params, name)
            scores = score_split(ctx.adversary(name), access, ctx.split)
            result = auc(scores)
            sampling = name == "sampling"
            written.append(write_scores_csv(
                scores,
                _seed_dir(state, seed) / f"scores-{name}.csv",
                adversary=name,
                p=ctx.calibration.p_star if sampling else None,
                n_samples=config.sampling.n_samples if sampling else None,
            ))
            entry = {"seed": seed, "adversary": name, "auc": result.auc, "queries": access.queries}
            if name == "sampling":
                entry["p_star"] = ctx.calibration.p_star
                entry["calibration"] = [list(cell) for cell in ctx.calibration.table]
            results.append(entry)
            logger.info("[seed %d] %s AUC=%.4f", seed, name, result.auc)

    summary = {
        name: _mean([r["auc"] for r in results if r["adversary"] == name]) for name in config.adversaries
    }
    written.append(write_json(
        {"config_hash": config_hash(config), "results": results, "mean_auc": summary,
         "multi_seed_average": len(config.seeds) > 1},
        state["output_dir"] / "attack.json",
    ))
    return {"attack_results": results, "artifacts": _artifacts(state, *written)}


# ============================================================================
# DEFEND
# ============================================================================

def _defended(ctx: SeedContext, defense: str, adversary: ExperimentAdversary) -> tuple[VictimAccess, VictimAccess, DefenseReport]:
    """(attack access, fresh utility access, report) for one defense."""
    config = ctx.config
    params = ctx.victim.params
    rng = ctx.rng.fork(f"defend-{defense}-{adversary}")

    if defense == "argmax":
        return argmax_defense(params), argmax_defense(params), argmax_report()

    if defense == "rr":
        cfg = RrConfig(
            num_classes=ctx.dataset.num_classes,
            keep_probability=config.defenses.rr.keep_probability,
            seed=ctx.seed,
        )
        return rr_defense(params, cfg, rng.fork("attack")), rr_defense(params, cfg, rng.fork("utility")), rr_report(cfg)

    if defense == "dp_logits":
        cfg, q = ctx.dp_logits_config(config.defenses.dp_logits.noise_multiplier, adversary)
        label_only = adversary == "sampling"
        report = dp_logits_report(cfg.model_copy(update={"query_budget": q}), len(ctx.split.victim_train),
                                  query_degraded=label_only)
        return (
            dp_logits_defense(params, cfg, rng.fork("attack"), label_only=label_only),
            dp_logits_defense(params, cfg, rng.fork("utility"), label_only=True),
            report,
        )

    # dp_sgd: the defense is the training procedure itself
    trained = ctx.dp_victim(config.defenses.dp_sgd or DpSgdConfig())
    report = DefenseReport(
        name="dp_sgd",
        parameters={
            "C": trained.accountant.clip_norm,
            "m": trained.accountant.noise_multiplier,
            "L": trained.accountant.lot_size,
            "steps": trained.accountant.steps,
        },
        epsilon=trained.budget.epsilon_or_none,
        delta=trained.budget.delta,
    )
    access = ctx.undefended_access(trained.params, adversary)
    return access, VictimAccess(trained.params, "label_only", name="dp_sgd"), report


def defend_stage(state: RunState) -> dict:
    """Each enabled defense evaluated on its own against each adversary.

    Posterior adversaries facing a label-only release are recorded as failing
    closed rather than scored.
    """
    config = state["config"]
    results = []
    for seed, ctx in state["contexts"].items():
        for defense in config.defenses.enabled:
            for name in config.adversaries:
                access, utility, report = _defended(ctx, defense, name)
                entry: dict[str, Any] = {
                    "seed": seed,
                    "defense": defense,
                    "adversary": name,
                    "accuracy": accuracy(utility, ctx.split.victim_test),
                    "report": report.model_dump(mode="json"),
                }
                try:
                    scores = score_split(ctx.adversary(name), access, ctx.split)
                except DefenseError as exc:
                    if name not in POSTERIOR_ADVERSARIES:
                        raise
                    logger.info("[seed %d] %s vs %s: failed closed (%s)", seed, name, defense, exc)
                    entry.update(status="fail_closed", auc=None, queries=access.queries)
                else:
                    entry.update(status="ok", auc=auc(scores).auc, queries=access.queries)
                    logger.info("[seed %d] %s vs %s: AUC=%.4f", seed, name, defense, entry["auc"])
                results.append(entry)

    path = write_json(
        {"config_hash": config_hash(config), "results": results,
         "multi_seed_average": len(config.seeds) > 1},
        state["output_dir"] / "defend.json",
    )
    return {"defense_results": results, "artifacts": _artifacts(state, path)}


# ============================================================================
# SWEEP
# ============================================================================

def _accountant_details(contexts: dict[int, SeedContext], family: str) -> list[dict]:
    if family != "dpsgd":
        return []
    details = []
    for seed, ctx in contexts.items():
        for result in ctx.dp_results():
            details.append({"seed": seed, **result.accountant.model_dump(mode="json")})
    return details


def sweep_stage(state: RunState) -> dict:
    """One CSV + JSON report per configured sweep."""
    config = state["config"]
    contexts = state["contexts"]
    reports, written = [], []
    for i, section in enumerate(config.sweeps):
        adversary = section.resolved_adversary
        rows = sweep(section.family, section.grid, config.seeds, contexts, adversary=adversary)
        baseline = baseline_accuracy(contexts)
        optimal = select_optimal_noise(rows, baseline) if section.family in ("dpsgd", "dplogits") else None
        metadata = {
            "config_hash": config_hash(config),
            "seeds": list(config.seeds),
            "family": section.family,
            "adversary": adversary,
            "baseline_accuracy": baseline,
            "optimal": None if optimal is None else optimal.model_dump(mode="json"),
            "accountant": _accountant_details(contexts, section.family),
            "multi_seed_average": len(config.seeds) > 1,
        }
        csv_path, json_path = emit_report(rows, metadata, state["output_dir"] / f"sweep-{i}-{section.family}")
        reports.append(str(json_path))
        written.extend((csv_path, json_path))
    return {"sweep_reports": reports, "artifacts": _artifacts(state, *written)}


# ============================================================================
# REPORT
# ============================================================================

def report_stage(state: RunState) -> dict:
    """Merge the JSON artifacts already in the output directory into report.json."""
    config = state["config"]
    out = state["output_dir"]
    merged: dict[str, Any] = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_hash": config_hash(config),
        "seeds": list(config.seeds),
        "sections": {},
    }
    for name in ("attack", "defend"):
        path = out / f"{name}.json"
        if path.exists():
            merged["sections"][name] = json.loads(path.read_text(encoding="utf-8"))
    sweeps = sorted(out.glob("sweep-*.json"))
    if sweeps:
        merged["sections"]["sweeps"] = {p.stem: json.loads(p.read_text(encoding="utf-8")) for p in sweeps}
    training = {}
    for seed in config.seeds:
        path = out / f"seed-{seed}" / "training.json"
        if path.exists():
            training[str(seed)] = json.loads(path.read_text(encoding="utf-8"))
    if training:
        merged["sections"]["training"] = training
    if not merged["sections"]:
        logger.warning("No stage artifacts found in %s; the report is empty", out)
    path = write_json(merged, out / "report.json")
    return {"artifacts": _artifacts(state, path)}
