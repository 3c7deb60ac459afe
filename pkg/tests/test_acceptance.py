"""End-to-end reproductions on synthetic tasks. Run with ``pytest -m slow``."""

import numpy as np
import pytest

from mi_guard.errors import DefenseError
from mi_guard.models.access import VictimAccess
from mi_guard.numeric import RngStream
from mi_guard.schemas.defense import RrConfig
from mi_guard.schemas.experiment import parse_experiment
from mi_guard.schemas.training import DpSgdConfig
from mi_guard.services.attacks import sampling_estimates
from mi_guard.services.datasets import generate
from mi_guard.services.defenses import argmax_defense, rr_defense, rr_expected_accuracy
from mi_guard.services.dp_sgd import train_dpsgd
from mi_guard.services.evaluation import accuracy, auc, evaluate_attack, score_split
from mi_guard.services.sweeps import seed_contexts, sweep
from mi_guard.services.training import train

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]


def _experiment(per_class: int = 150, **overrides) -> dict:
    return {
        "name": "overfit",
        "dataset": {
            "synthetic": {
                "kind": "binary", "num_classes": 30, "dim": 200, "per_class": per_class,
                "flip_rate": 0.05, "class_spread": 0.05, "seed": 0,
            }
        },
        "training": {"learning_rate": 0.001, "max_epochs": 50, "batch_size": 64, "patience": 5},
        "adversaries": ["lrn", "lrn_free", "sampling"],
        "sampling": {"n_samples": 100},
        "seeds": SEEDS,
        **overrides,
    }


@pytest.fixture(scope="module")
def overfit_contexts():
    config = parse_experiment(_experiment())
    return seed_contexts(config, generate(config.dataset.synthetic), SEEDS)


def _mean_auc(contexts, name: str) -> float:
    values = []
    for ctx in contexts.values():
        access = ctx.undefended_access(ctx.victim.params, name)
        values.append(evaluate_attack(ctx.adversary(name), access, ctx.split).auc)
    return float(np.mean(values))


# ============================================================================
# Attack signal
# ============================================================================

def test_overfit_victim_leaks_membership(overfit_contexts):
    for ctx in overfit_contexts.values():
        assert accuracy(ctx.victim.params, ctx.split.victim_train) >= 0.95
        assert ctx.baseline_accuracy <= 0.75
    assert _mean_auc(overfit_contexts, "lrn") >= 0.70
    assert _mean_auc(overfit_contexts, "lrn_free") >= 0.70


def test_generalizing_victim_leaks_nothing():
    seeds = [0, 1]
    config = parse_experiment(_experiment(per_class=3000, seeds=seeds))
    contexts = seed_contexts(config, generate(config.dataset.synthetic), seeds)
    assert _mean_auc(contexts, "lrn") == pytest.approx(0.5, abs=0.05)
    assert _mean_auc(contexts, "lrn_free") == pytest.approx(0.5, abs=0.05)


# ============================================================================
# Argmax + sampling recovery
# ============================================================================

def test_sampling_recovers_the_posterior_attack(overfit_contexts):
    for ctx in overfit_contexts.values():
        access = argmax_defense(ctx.victim.params)
        for name in ("lrn", "lrn_free"):
            with pytest.raises(DefenseError):
                score_split(ctx.adversary(name), access, ctx.split)

    full = _mean_auc(overfit_contexts, "lrn_free")
    recovered = float(np.mean([
        auc(score_split(ctx.adversary("sampling"), argmax_defense(ctx.victim.params), ctx.split)).auc
        for ctx in overfit_contexts.values()
    ]))
    assert recovered - 0.5 >= 0.8 * (full - 0.5)


# ============================================================================
# Monte Carlo convergence
# ============================================================================

def test_sampling_estimates_converge(overfit_contexts):
    distances = {10: [], 100: [], 1000: []}
    for ctx in overfit_contexts.values():
        access = VictimAccess(ctx.victim.params, "label_only")
        probes = ctx.split.victim_train.features[:50]
        cfg = ctx.config.sampling.template("binary").with_scale(ctx.calibration.p_star)
        oracle = sampling_estimates(
            access, probes, cfg.model_copy(update={"n_samples": 100_000}), RngStream(ctx.seed).fork("oracle")
        )
        for n in distances:
            estimate = sampling_estimates(
                access, probes, cfg.model_copy(update={"n_samples": n}), RngStream(ctx.seed).fork(f"n-{n}")
            )
            distances[n].append(np.abs(estimate - oracle).sum(axis=1).mean())
    means = [np.mean(distances[n]) for n in (10, 100, 1000)]
    assert means[0] > means[1] > means[2]

    contexts = overfit_contexts
    rows = sweep("samples", [10, 100, 1000], SEEDS, contexts, adversary="sampling")
    aucs = [r.auc for r in rows if r.seed is None]
    assert all(b >= a - 0.02 for a, b in zip(aucs, aucs[1:]))


# ============================================================================
# Randomized response
# ============================================================================

def test_randomized_response_weakens_sampling(overfit_contexts):
    undefended = _mean_auc(overfit_contexts, "sampling")
    defended = []
    for ctx in overfit_contexts.values():
        cfg = RrConfig(num_classes=30, keep_probability=0.75, seed=ctx.seed)
        access = rr_defense(ctx.victim.params, cfg, ctx.rng.fork("rr-acceptance"))
        defended.append(auc(score_split(ctx.adversary("sampling"), access, ctx.split)).auc)
    assert undefended - float(np.mean(defended)) >= 0.05


def test_randomized_response_accuracy_at_scale(overfit_contexts):
    ctx = overfit_contexts[0]
    test = ctx.split.victim_test
    repeats = -(-100_000 // len(test))
    features = np.tile(test.features, (repeats, 1))
    labels = np.tile(test.labels, repeats)
    cfg = RrConfig(num_classes=30, keep_probability=0.75)
    released = rr_defense(ctx.victim.params, cfg, RngStream(9)).label(features)
    expected = rr_expected_accuracy(ctx.baseline_accuracy, 30, 0.75)
    assert float(np.mean(released == labels)) == pytest.approx(expected, abs=0.01)


# ============================================================================
# DP-SGD
# ============================================================================

def test_dpsgd_without_noise_or_clipping_matches_plain_training(overfit_contexts):
    ctx = overfit_contexts[0]
    train_config = ctx.config.training.model_copy(update={"optimizer": "sgd", "batch_size": 64})
    plain = train(ctx.architecture, ctx.split.victim_train, train_config, RngStream(4))
    private = train_dpsgd(
        ctx.architecture, ctx.split.victim_train, train_config,
        DpSgdConfig(clip_norm=float("inf"), noise_multiplier=0.0, lot_size=64), RngStream(4),
    )
    assert private.params.equals(plain.params)


def test_dpsgd_noise_closes_the_gap(overfit_contexts):
    rows = sweep("dpsgd", [0.0, 0.01, 0.1, 1.0], SEEDS, overfit_contexts, adversary="lrn_free")
    means = [r for r in rows if r.seed is None]
    assert means[-1].auc == pytest.approx(0.5, abs=0.05)
    epsilons = [np.inf if r.epsilon is None else r.epsilon for r in means]
    assert all(b < a for a, b in zip(epsilons, epsilons[1:]))
    for ctx in overfit_contexts.values():
        for result in ctx.dp_results():
            assert max(result.clipped_norms) <= result.accountant.clip_norm + 1e-9
