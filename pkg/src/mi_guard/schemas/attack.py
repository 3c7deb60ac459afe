"""Pydantic schemas for adversaries and their outputs."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

PerturbationKind = Literal["gaussian", "bitflip"]
AdversaryName = Literal["lrn", "lrn_free", "sampling"]

# Perturbation grids: 21 steps of 0.01 (gaussian) or 0.005 (bitflip) from zero
GAUSSIAN_P_GRID: tuple[float, ...] = tuple(round(i * 0.01, 10) for i in range(21))
BITFLIP_P_GRID: tuple[float, ...] = tuple(round(i * 0.005, 10) for i in range(21))

DEFAULT_SAMPLES = 100


class PerturbationConfig(BaseModel):
    """How the sampling attack perturbs a record: kind, scale p, count N."""

    model_config = ConfigDict(frozen=True)

    kind: PerturbationKind = "bitflip"
    scale: float = Field(0.0, ge=0.0, description="gaussian std or bit-flip probability")
    n_samples: int = Field(DEFAULT_SAMPLES, ge=1)

    @model_validator(mode="after")
    def _bitflip_is_a_probability(self) -> "PerturbationConfig":
        if self.kind == "bitflip" and self.scale > 1.0:
            raise ValueError(f"bit-flip probability must be in [0, 1], got {self.scale}")
        return self

    def with_scale(self, scale: float) -> "PerturbationConfig":
        return PerturbationConfig(kind=self.kind, scale=scale, n_samples=self.n_samples)

    @staticmethod
    def default_grid(kind: PerturbationKind) -> tuple[float, ...]:
        return GAUSSIAN_P_GRID if kind == "gaussian" else BITFLIP_P_GRID


class MembershipScore(BaseModel):
    """One adversary verdict; higher scores are more member-like."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    record_id: str
    score: float
    is_member: bool | None = None
