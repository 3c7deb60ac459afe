"""Pydantic schemas describing datasets to generate or load."""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

FeatureKind = Literal["continuous", "binary"]


class SyntheticSpec(BaseModel):
    """Desk-scale synthetic classification task."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: FeatureKind = "binary"
    num_classes: int = Field(..., ge=2)
    dim: int = Field(..., ge=1)
    per_class: int = Field(..., ge=1, description="records generated per class")
    separation: float = Field(
        3.0, ge=0.0, description="continuous: scale of the per-class mean vectors"
    )
    flip_rate: float = Field(
        0.05, ge=0.0, le=1.0, description="binary: per-bit flip probability around the template"
    )
    class_spread: float = Field(
        0.5,
        ge=0.0,
        le=0.5,
        description="binary: fraction of bits each class template deviates from a shared base",
    )
    seed: int = 0


class CsvSource(BaseModel):
    """A CSV file on disk: header row, features, integer label last."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    path: Path
    kind: FeatureKind = "continuous"
    num_classes: int = Field(..., ge=2)
