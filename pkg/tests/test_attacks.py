import numpy as np
import pytest

from mi_guard.config import settings
from mi_guard.errors import DefenseError, InvalidParameterError
from mi_guard.models.access import VictimAccess
from mi_guard.models.mlp import predict_label
from mi_guard.numeric import RngStream
from mi_guard.schemas.attack import BITFLIP_P_GRID, GAUSSIAN_P_GRID, MembershipScore, PerturbationConfig
from mi_guard.schemas.training import TrainConfig
from mi_guard.services.attacks import (
    LrnAdversary,
    LrnFreeAdversary,
    SamplingAdversary,
    calibrate_p,
    fit_attack_model,
    lrn_score,
    lrn_train,
    lrnfree_score,
    perturb,
    sampling_attack,
    sampling_estimate,
    sampling_estimates,
    sort_posteriors,
    train_shadow,
)
from mi_guard.services.defenses import argmax_defense
from mi_guard.services.evaluation import auc


def test_default_grids_have_21_steps():
    assert len(GAUSSIAN_P_GRID) == len(BITFLIP_P_GRID) == 21
    assert BITFLIP_P_GRID[-1] == pytest.approx(0.1)
    assert GAUSSIAN_P_GRID[-1] == pytest.approx(0.2)


def test_bitflip_scale_is_a_probability():
    with pytest.raises(ValueError):
        PerturbationConfig(kind="bitflip", scale=1.5)


# ============================================================================
# Perturbation
# ============================================================================

def test_bitflip_extremes():
    x = np.array([0.0, 1.0, 1.0, 0.0])
    assert np.array_equal(perturb(x, PerturbationConfig(kind="bitflip", scale=0.0), RngStream(0)), x)
    assert np.array_equal(perturb(x, PerturbationConfig(kind="bitflip", scale=1.0), RngStream(0)), 1.0 - x)


def test_bitflip_rejects_continuous_input():
    with pytest.raises(InvalidParameterError):
        perturb(np.array([0.5, 1.0]), PerturbationConfig(kind="bitflip", scale=0.1), RngStream(0))


def test_gaussian_perturbation_scale():
    x = np.zeros(100_000)
    noisy = perturb(x, PerturbationConfig(kind="gaussian", scale=0.3), RngStream(1))
    assert noisy.std() == pytest.approx(0.3, rel=0.02)


# ============================================================================
# Sampling estimates
# ============================================================================

def test_sampling_estimate_is_a_histogram(victim, small_split):
    access = VictimAccess(victim, "label_only")
    cfg = PerturbationConfig(kind="bitflip", scale=0.2, n_samples=50)
    estimate = sampling_estimate(access, small_split.victim_test.features[0], cfg, RngStream(0))
    assert estimate.histogram.sum() == pytest.approx(1.0)
    assert access.queries == 50


def test_zero_scale_estimate_is_one_hot_at_the_label(victim, small_split):
    x = small_split.victim_test.features[0]
    cfg = PerturbationConfig(kind="bitflip", scale=0.0, n_samples=10)
    estimate = sampling_estimate(VictimAccess(victim, "label_only"), x, cfg, RngStream(0))
    assert estimate.histogram[predict_label(victim, x)] == 1.0


def test_batched_estimates_match_single_record_estimates(victim, small_split):
    access = VictimAccess(victim, "label_only")
    cfg = PerturbationConfig(kind="bitflip", scale=0.1, n_samples=20)
    rng = RngStream(3)
    features = small_split.victim_test.features[:5]
    batched = sampling_estimates(access, features, cfg, rng)
    for i, x in enumerate(features):
        assert np.array_equal(batched[i], sampling_estimate(access, x, cfg, rng.fork(i)).histogram)


def test_estimates_do_not_depend_on_chunking(victim, small_split, monkeypatch):
    access = VictimAccess(victim, "label_only")
    cfg = PerturbationConfig(kind="bitflip", scale=0.1, n_samples=15)
    features = small_split.victim_test.features
    monkeypatch.setattr(settings, "sampling_chunk", 1)
    one = sampling_estimates(access, features, cfg, RngStream(4))
    monkeypatch.setattr(settings, "sampling_chunk", 7)
    seven = sampling_estimates(access, features, cfg, RngStream(4))
    assert np.array_equal(one, seven)


# ============================================================================
# LRN / LRN-Free
# ============================================================================

def test_sort_posteriors_descending():
    assert np.array_equal(sort_posteriors(np.array([[0.1, 0.7, 0.2]])), [[0.7, 0.2, 0.1]])


def test_shadow_trains_on_shadow_data_only(small_split, small_arch, fast_config):
    assert train_shadow(small_split, small_arch, fast_config, RngStream(0)).dataset_name == "shadow_train"


def test_attack_model_learns_peaked_vs_flat_posteriors():
    gen = np.random.default_rng(0)
    members = np.abs(np.array([0.95, 0.03, 0.02]) + gen.normal(0, 0.01, size=(200, 3)))
    non_members = np.abs(np.array([0.4, 0.35, 0.25]) + gen.normal(0, 0.01, size=(200, 3)))
    config = TrainConfig(learning_rate=0.01, max_epochs=30, batch_size=16)
    model = fit_attack_model(members, non_members, config, RngStream(0))
    assert model.member_probability(members).mean() > model.member_probability(non_members).mean()


def test_attack_model_finds_no_signal_in_identical_distributions():
    gen = np.random.default_rng(1)

    def draw(n):
        return gen.dirichlet(np.ones(4), size=n)

    config = TrainConfig(learning_rate=0.01, max_epochs=10, batch_size=64)
    model = fit_attack_model(draw(1000), draw(1000), config, RngStream(2))
    scores = [
        MembershipScore(record_id=f"m-{i}", score=float(v), is_member=True)
        for i, v in enumerate(model.member_probability(draw(1000)))
    ] + [
        MembershipScore(record_id=f"n-{i}", score=float(v), is_member=False)
        for i, v in enumerate(model.member_probability(draw(1000)))
    ]
    assert auc(scores).auc == pytest.approx(0.5, abs=0.05)


def test_lrn_scores_are_probabilities(victim, small_split, small_arch, fast_config):
    shadow = train_shadow(small_split, small_arch, fast_config, RngStream(0)).params
    model = lrn_train(shadow, small_split, fast_config, RngStream(1))
    scores = lrn_score(model, VictimAccess(victim), small_split.victim_train, membership=True)
    assert len(scores) == len(small_split.victim_train)
    assert all(0.0 <= s.score <= 1.0 and s.is_member for s in scores)
    assert np.allclose(
        [s.score for s in scores],
        LrnAdversary(model).score(VictimAccess(victim), small_split.victim_train),
    )


def test_lrnfree_score_is_max_posterior(victim, small_split):
    scores = lrnfree_score(VictimAccess(victim), small_split.victim_test)
    expected = LrnFreeAdversary().score(VictimAccess(victim), small_split.victim_test)
    assert np.allclose([s.score for s in scores], expected)
    assert all(s.is_member is None for s in scores)


def test_posterior_adversaries_fail_closed_under_argmax(victim, small_split):
    with pytest.raises(DefenseError):
        LrnFreeAdversary().score(argmax_defense(victim), small_split.victim_test)


# ============================================================================
# Calibration and the full sampling attack
# ============================================================================

def test_calibration_picks_a_grid_value(victim, small_split):
    template = PerturbationConfig(kind="bitflip", n_samples=5)
    grid = [0.1, 0.0, 0.05]
    calibration = calibrate_p(victim, small_split, grid, template, RngStream(0))
    assert calibration.p_star in grid
    assert [p for p, _ in calibration.table] == sorted(grid)
    best = max(value for _, value in calibration.table)
    first_best = next(p for p, value in calibration.table if value == best)
    assert calibration.p_star == first_best


def test_calibration_rejects_empty_grid(victim, small_split):
    with pytest.raises(InvalidParameterError):
        calibrate_p(victim, small_split, [], PerturbationConfig(), RngStream(0))


def test_sampling_attack_uses_labels_only(victim, small_split):
    access = argmax_defense(victim)
    cfg = PerturbationConfig(kind="bitflip", n_samples=4)
    scores = sampling_attack(access, small_split, 0.05, cfg, RngStream(0))
    n = len(small_split.victim_train) + len(small_split.victim_test)
    assert len(scores) == n
    assert access.queries == 4 * n
    assert sum(s.is_member for s in scores) == len(small_split.victim_train)


def test_sampling_adversary_matches_sampling_attack(victim, small_split):
    cfg = PerturbationConfig(kind="bitflip", scale=0.05, n_samples=4)
    adversary = SamplingAdversary(cfg, RngStream(2))
    direct = sampling_attack(argmax_defense(victim), small_split, 0.05, cfg, RngStream(2))
    via_adversary = adversary.score(argmax_defense(victim), small_split.victim_train)
    assert np.array_equal([s.score for s in direct[: len(via_adversary)]], via_adversary)
