"""Shared fixtures: a tiny binary task, its split and a quickly trained victim."""

import json

import pytest

from mi_guard.models.dataset import FourWaySplit
from mi_guard.models.mlp import ModelParams
from mi_guard.numeric import RngStream
from mi_guard.schemas.data import SyntheticSpec
from mi_guard.schemas.training import MlpArchitecture, TrainConfig
from mi_guard.services.datasets import generate, split4
from mi_guard.services.training import train


@pytest.fixture(scope="session")
def binary_spec() -> SyntheticSpec:
    return SyntheticSpec(kind="binary", num_classes=4, dim=16, per_class=20, class_spread=0.2, seed=3)


@pytest.fixture(scope="session")
def small_split(binary_spec) -> FourWaySplit:
    return split4(generate(binary_spec), RngStream(0))


@pytest.fixture(scope="session")
def fast_config() -> TrainConfig:
    return TrainConfig(learning_rate=0.01, max_epochs=5, batch_size=8, patience=2)


@pytest.fixture(scope="session")
def small_arch(small_split) -> MlpArchitecture:
    return MlpArchitecture.for_dataset(small_split.victim_train, (16,))


@pytest.fixture(scope="session")
def victim(small_split, small_arch, fast_config) -> ModelParams:
    return train(small_arch, small_split.victim_train, fast_config, RngStream(1)).params


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment document and return its path."""

    def _write(document: dict, name: str = "experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def tiny_experiment() -> dict:
    return {
        "name": "tiny",
        "dataset": {
            "synthetic": {"kind": "binary", "num_classes": 3, "dim": 12, "per_class": 16, "class_spread": 0.2}
        },
        "architecture": {"hidden": [8]},
        "training": {"learning_rate": 0.01, "max_epochs": 3, "batch_size": 8, "patience": 2},
        "adversaries": ["lrn_free"],
        "sampling": {"n_samples": 5, "p_star": 0.05},
        "seeds": [0],
    }
