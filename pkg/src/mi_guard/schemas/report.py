"""Pydantic schemas for evaluation results and sweep reports."""

from pydantic import BaseModel, ConfigDict, Field

REPORT_SCHEMA_VERSION = 1

SWEEP_CSV_COLUMNS = ("defense", "param", "seed", "accuracy", "auc", "epsilon", "delta", "queries")


class AucResult(BaseModel):
    """Threshold-free attack performance."""

    model_config = ConfigDict(frozen=True)

    auc: float = Field(..., ge=0.0, le=1.0)
    members: int = Field(..., gt=0)
    non_members: int = Field(..., gt=0)


class SweepRow(BaseModel):
    """One privacy-utility point.

    ``seed`` is ``None`` on the per-parameter mean row; ``epsilon`` is ``None``
    when the defense gives no finite guarantee.
    """

    model_config = ConfigDict(frozen=True)

    defense: str
    param: float
    seed: int | None
    accuracy: float
    auc: float
    epsilon: float | None
    delta: float
    queries: int = 0


class AccountantReport(BaseModel):
    """Accountant details embedded in the run report."""

    mechanism: str
    method: str
    noise_multiplier: float
    clip_norm: float | None
    lot_size: int
    steps: int
    sampling_rate: float
    delta: float
    epsilon: float | None
