"""Pydantic schemas for model architecture and (DP) training configuration."""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Optimizer = Literal["adam", "sgd"]

# Desk-scale default hidden widths and the layout used for binary benchmark data
DESK_HIDDEN: tuple[int, ...] = (64, 32)
BINARY_BENCHMARK_HIDDEN: tuple[int, ...] = (512, 256, 128)


class MlpArchitecture(BaseModel):
    """Fully connected layout: input dimension then layer widths ending in C."""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(..., ge=1)
    widths: tuple[int, ...]
    activation: Literal["relu"] = "relu"

    @field_validator("widths")
    @classmethod
    def _at_least_one_hidden(cls, widths: tuple[int, ...]) -> tuple[int, ...]:
        if len(widths) < 2:
            raise ValueError("an MLP needs at least one hidden layer plus the output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        return widths

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.widths)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_parameters(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)

    @classmethod
    def for_task(cls, input_dim: int, num_classes: int, hidden: tuple[int, ...]) -> "MlpArchitecture":
        return cls(input_dim=input_dim, widths=(*hidden, num_classes))

    @classmethod
    def for_dataset(cls, dataset, hidden: tuple[int, ...] = DESK_HIDDEN) -> "MlpArchitecture":
        """Input dimension and class count taken from ``dataset`` (anything with dim / num_classes)."""
        return cls.for_task(dataset.dim, dataset.num_classes, hidden)


class TrainConfig(BaseModel):
    """Non-private training with early stopping."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.001, ge=0.0)
    max_epochs: int = Field(50, ge=1)
    batch_size: int = Field(64, ge=1)
    patience: int = Field(5, ge=1)
    validation_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    optimizer: Optimizer = "adam"
    seed: int = 0


class DpSgdConfig(BaseModel):
    """DP-SGD: per-example clipping to ``clip_norm`` plus Gaussian noise m*C."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_norm: float = Field(1.0, description="C; math.inf disables clipping")
    noise_multiplier: float = Field(1.0, ge=0.0, description="m = sigma / C")
    lot_size: int = Field(64, ge=1)
    learning_rate: float = Field(
        0.1, gt=0.0, description="step size of the DP run; replaces training.learning_rate"
    )
    delta: float | None = Field(
        None, gt=0.0, lt=1.0, description="defaults to 1/|victim train set|"
    )
    optimizer: Optimizer = "sgd"
    seed: int = 0

    @field_validator("clip_norm")
    @classmethod
    def _positive_clip(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"clip norm must be > 0, got {value}")
        return value

    @model_validator(mode="after")
    def _finite_noise_needs_finite_clip(self) -> "DpSgdConfig":
        if math.isinf(self.clip_norm) and self.noise_multiplier > 0:
            raise ValueError("noise multiplier > 0 requires a finite clip norm")
        return self

    @property
    def sigma(self) -> float:
        return 0.0 if self.noise_multiplier == 0 else self.noise_multiplier * self.clip_norm

    @property
    def is_degenerate(self) -> bool:
        """No clipping and no noise: the step is the plain mean gradient."""
        return math.isinf(self.clip_norm) and self.noise_multiplier == 0


class EpochStats(BaseModel):
    """One line of the per-epoch training trace."""

    epoch: int
    loss: float
    train_accuracy: float
    validation_accuracy: float | None = None
