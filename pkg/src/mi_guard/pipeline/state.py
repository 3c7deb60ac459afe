"""Run state passed from stage to stage."""

from pathlib import Path
from typing import Any, Optional

from typing_extensions import TypedDict

from mi_guard.models.dataset import Dataset
from mi_guard.schemas.experiment import ExperimentConfig
from mi_guard.services.sweeps import SeedContext


class RunState(TypedDict, total=False):
    """
    State that flows through the stages of one CLI invocation.

    Each stage returns a partial update that the workflow merges in.
    """

    # ========================================================================
    # Input
    # ========================================================================
    config: ExperimentConfig
    subcommand: str
    output_dir: Path

    # ========================================================================
    # Data and per-seed artifacts (trained lazily, cached per seed)
    # ========================================================================
    dataset: Optional[Dataset]
    contexts: dict[int, SeedContext]

    # ========================================================================
    # Results
    # ========================================================================
    attack_results: list[dict[str, Any]]
    defense_results: list[dict[str, Any]]
    sweep_reports: list[str]

    # Paths of every file written, in write order
    artifacts: list[str]
