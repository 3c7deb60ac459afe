"""Labeled datasets and the four-way victim/shadow partition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from mi_guard.errors import DatasetError
from mi_guard.schemas.data import FeatureKind


@dataclass(frozen=True)
class Record:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of records with uniform dimension.

    Features are stored row-wise as float64 (``n x D``), labels as int64.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    kind: FeatureKind
    name: str = "dataset"

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise DatasetError(f"features must be 2-D (n x D), got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DatasetError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if features.shape[1] < 1:
            raise DatasetError("feature dimension must be positive")
        if self.num_classes < 2:
            raise DatasetError(f"need at least 2 classes, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features must be finite")
        if self.kind == "binary" and not np.all((features == 0.0) | (features == 1.0)):
            raise DatasetError("binary datasets only hold features in {0, 1}")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[Record]:
        for x, y in zip(self.features, self.labels):
            yield Record(features=x, label=int(y))

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            kind=self.kind,
            name=name or self.name,
        )

    def same_content(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.kind == other.kind
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class FourWaySplit:
    """Disjoint victim-train / victim-test / shadow-train / shadow-test quarters."""

    victim_train: Dataset
    victim_test: Dataset
    shadow_train: Dataset
    shadow_test: Dataset

    @property
    def parts(self) -> tuple[Dataset, Dataset, Dataset, Dataset]:
        return (self.victim_train, self.victim_test, self.shadow_train, self.shadow_test)
