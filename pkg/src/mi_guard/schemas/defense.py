"""Pydantic schemas for defenses and the privacy budgets they report."""

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class PrivacyBudget(BaseModel):
    """An (epsilon, delta) guarantee; ``epsilon = inf`` marks it unbounded."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(..., ge=0.0)
    delta: float = Field(..., ge=0.0, lt=1.0)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.epsilon)

    @property
    def epsilon_or_none(self) -> float | None:
        """JSON-friendly epsilon: ``None`` when unbounded."""
        return None if self.unbounded else self.epsilon

    @classmethod
    def unbounded_at(cls, delta: float) -> "PrivacyBudget":
        return cls(epsilon=math.inf, delta=delta)


class SensitivityBound(BaseModel):
    """The l2-sensitivity of a clipped quantity."""

    model_config = ConfigDict(frozen=True)

    value: float = Field(..., ge=0.0)
    bounds: str = Field(..., description="name of the function whose sensitivity this is")


class DpLogitsConfig(BaseModel):
    """Prediction-time clipping of logits to ``clip_norm`` (S) plus noise m*S."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_norm: float | None = Field(
        None, gt=0.0, description="S; None selects the 60th percentile of logit norms"
    )
    noise_multiplier: float = Field(..., ge=0.0, description="m = sigma / S")
    query_budget: int = Field(1, ge=1, description="q")
    scope: Literal["per_record", "total"] = "per_record"
    delta: float | None = Field(None, gt=0.0, lt=1.0)

    def with_clip_norm(self, clip_norm: float) -> "DpLogitsConfig":
        return self.model_copy(update={"clip_norm": clip_norm})


class RrConfig(BaseModel):
    """k-ary randomized response applied to released labels."""

    model_config = ConfigDict(frozen=True)

    num_classes: int = Field(..., ge=2)
    keep_probability: float = Field(
        0.75, gt=0.0, lt=1.0, description="probability of revealing the true label"
    )
    seed: int = 0


class DefenseReport(BaseModel):
    """What each defense writes into the run report."""

    name: str
    parameters: dict[str, float | int | str | None]
    epsilon: float | None
    delta: float
    q: int | None = None
    query_degraded: bool = False
