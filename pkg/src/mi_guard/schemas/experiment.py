"""The JSON experiment document driving the CLI, and its validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mi_guard.errors import ConfigValidationError
from mi_guard.schemas.attack import DEFAULT_SAMPLES, PerturbationConfig, PerturbationKind
from mi_guard.schemas.data import CsvSource, FeatureKind, SyntheticSpec
from mi_guard.schemas.defense import DpLogitsConfig
from mi_guard.schemas.training import (
    BINARY_BENCHMARK_HIDDEN,
    DESK_HIDDEN,
    DpSgdConfig,
    TrainConfig,
)

ExperimentAdversary = Literal["lrn", "lrn_free", "sampling", "random"]
SweepFamily = Literal["none", "dpsgd", "dplogits", "sampling", "samples", "rr"]

POSTERIOR_ADVERSARIES = ("lrn", "lrn_free")
# Families whose sweep parameter changes the sampling attack or a label-only release
LABEL_FAMILIES = ("sampling", "samples", "rr")


# ============================================================================
# Sections
# ============================================================================

class DatasetSection(BaseModel):
    """Exactly one of ``synthetic`` or ``csv``."""

    model_config = ConfigDict(extra="forbid")

    synthetic: SyntheticSpec | None = None
    csv: CsvSource | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "DatasetSection":
        if (self.synthetic is None) == (self.csv is None):
            raise ValueError("give exactly one of 'synthetic' or 'csv'")
        return self

    @property
    def source(self) -> SyntheticSpec | CsvSource:
        return self.synthetic if self.synthetic is not None else self.csv

    @property
    def kind(self) -> FeatureKind:
        return self.source.kind

    @property
    def num_classes(self) -> int:
        return self.source.num_classes

    @property
    def known_size(self) -> int | None:
        """Record count when it is known without reading any file."""
        if self.synthetic is None:
            return None
        return self.synthetic.per_class * self.synthetic.num_classes


class ArchitectureSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: tuple[int, ...] | None = Field(
        None, description="hidden widths; defaults to (64, 32), or (512, 256, 128) for CSV binary data"
    )

    @field_validator("hidden")
    @classmethod
    def _non_empty(cls, hidden: tuple[int, ...] | None) -> tuple[int, ...] | None:
        if hidden is not None and (not hidden or any(w < 1 for w in hidden)):
            raise ValueError("hidden widths must be a non-empty list of positive integers")
        return hidden


class SamplingSection(BaseModel):
    """Sampling attack settings; ``p_star`` skips shadow calibration."""

    model_config = ConfigDict(extra="forbid")

    kind: PerturbationKind | None = Field(None, description="defaults from the dataset kind")
    n_samples: int = Field(DEFAULT_SAMPLES, ge=1)
    p_grid: list[float] | None = Field(None, description="calibration grid; defaults to 21 steps")
    backend: Literal["lrn_free", "lrn"] = "lrn_free"
    p_star: float | None = Field(None, ge=0.0)

    @field_validator("p_grid")
    @classmethod
    def _grid_values(cls, grid: list[float] | None) -> list[float] | None:
        if grid is not None and (not grid or any(p < 0 for p in grid)):
            raise ValueError("p_grid must be a non-empty list of non-negative scales")
        return grid

    def perturbation_kind(self, dataset_kind: FeatureKind) -> PerturbationKind:
        if self.kind is not None:
            return self.kind
        return "bitflip" if dataset_kind == "binary" else "gaussian"

    def template(self, dataset_kind: FeatureKind) -> PerturbationConfig:
        return PerturbationConfig(kind=self.perturbation_kind(dataset_kind), n_samples=self.n_samples)

    def grid(self, dataset_kind: FeatureKind) -> tuple[float, ...]:
        if self.p_grid is not None:
            return tuple(self.p_grid)
        return PerturbationConfig.default_grid(self.perturbation_kind(dataset_kind))


class RrSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    keep_probability: float = Field(0.75, gt=0.0, lt=1.0)


class DefenseSection(BaseModel):
    """Defenses evaluated one at a time by the ``defend`` stage."""

    model_config = ConfigDict(extra="forbid")

    argmax: bool = False
    rr: RrSection | None = None
    dp_logits: DpLogitsConfig | None = None
    dp_sgd: DpSgdConfig | None = None

    @property
    def label_only(self) -> list[str]:
        names = []
        if self.argmax:
            names.append("argmax")
        if self.rr is not None:
            names.append("rr")
        return names

    @property
    def enabled(self) -> list[str]:
        names = self.label_only
        if self.dp_logits is not None:
            names.append("dp_logits")
        if self.dp_sgd is not None:
            names.append("dp_sgd")
        return names


class SweepSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: SweepFamily
    grid: list[float] = Field(..., min_length=1)
    adversary: ExperimentAdversary | None = Field(
        None, description="defaults to lrn_free, or sampling for label-only families"
    )

    @model_validator(mode="after")
    def _grid_fits_family(self) -> "SweepSection":
        if self.family in ("dpsgd", "dplogits", "sampling") and any(v < 0 for v in self.grid):
            raise ValueError(f"{self.family} grid values must be >= 0")
        if self.family == "samples" and any(v < 1 or v != int(v) for v in self.grid):
            raise ValueError("samples grid values must be positive integers")
        if self.family == "rr" and any(not 0.0 < v < 1.0 for v in self.grid):
            raise ValueError("rr grid values are keep probabilities in (0, 1)")
        return self

    @property
    def resolved_adversary(self) -> ExperimentAdversary:
        if self.adversary is not None:
            return self.adversary
        return "sampling" if self.family in LABEL_FAMILIES else "lrn_free"


# ============================================================================
# Experiment
# ============================================================================

class ExperimentConfig(BaseModel):
    """One reproducible audit: data, victim, adversaries, defenses and sweeps."""

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    dataset: DatasetSection
    architecture: ArchitectureSection = Field(default_factory=ArchitectureSection)
    training: TrainConfig = Field(default_factory=TrainConfig)
    adversaries: list[ExperimentAdversary] = Field(default_factory=lambda: ["lrn_free"], min_length=1)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    defenses: DefenseSection = Field(default_factory=DefenseSection)
    sweeps: list[SweepSection] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Path | None = None

    @field_validator("seeds")
    @classmethod
    def _distinct_seeds(cls, seeds: list[int]) -> list[int]:
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
        return seeds

    @property
    def hidden(self) -> tuple[int, ...]:
        if self.architecture.hidden is not None:
            return self.architecture.hidden
        if self.dataset.csv is not None and self.dataset.kind == "binary":
            return BINARY_BENCHMARK_HIDDEN
        return DESK_HIDDEN

    @property
    def needs_sampling(self) -> bool:
        return "sampling" in self.adversaries or any(
            s.resolved_adversary == "sampling" for s in self.sweeps
        )

    def with_overrides(
        self, *, output_dir: Path | None = None, seeds: list[int] | None = None
    ) -> "ExperimentConfig":
        update: dict = {}
        if output_dir is not None:
            update["output_dir"] = output_dir
        if seeds is not None:
            update["seeds"] = seeds
        return parse_experiment({**self.model_dump(), **update}) if update else self


def compatibility_violations(config: ExperimentConfig) -> list[str]:
    """Cross-field problems that individual field validators cannot see."""
    violations: list[str] = []
    dataset_kind = config.dataset.kind
    perturbation = config.sampling.perturbation_kind(dataset_kind)

    label_only = config.defenses.label_only
    if label_only and "sampling" not in config.adversaries:
        for adversary in config.adversaries:
            if adversary in POSTERIOR_ADVERSARIES:
                violations.append(
                    f"adversaries: '{adversary}' needs posterior access but defense "
                    f"'{label_only[0]}' publishes labels only; add the 'sampling' adversary"
                )

    if config.needs_sampling and perturbation == "bitflip" and dataset_kind != "binary":
        violations.append("sampling.kind: bit-flip perturbation needs a binary dataset")
    if perturbation == "bitflip":
        scales = list(config.sampling.p_grid or [])
        if config.sampling.p_star is not None:
            scales.append(config.sampling.p_star)
        if any(p > 1.0 for p in scales):
            violations.append("sampling: bit-flip probabilities must lie in [0, 1]")

    size = config.dataset.known_size
    if size is not None and size < 4:
        violations.append(f"dataset: {size} records cannot be split four ways")
    dp_sgd = config.defenses.dp_sgd
    if dp_sgd is None and any(s.family == "dpsgd" for s in config.sweeps):
        dp_sgd = DpSgdConfig()
    if dp_sgd is not None and size is not None and dp_sgd.lot_size > size // 4:
        violations.append(
            f"defenses.dp_sgd.lot_size: {dp_sgd.lot_size} exceeds the victim training set ({size // 4})"
        )

    for i, sweep in enumerate(config.sweeps):
        where = f"sweeps[{i}]"
        adversary = sweep.resolved_adversary
        if sweep.family in LABEL_FAMILIES and adversary != "sampling":
            violations.append(f"{where}: the {sweep.family} family needs the sampling adversary")
        if sweep.family == "sampling" and perturbation == "bitflip" and any(v > 1 for v in sweep.grid):
            violations.append(f"{where}: bit-flip probabilities must lie in [0, 1]")
    return violations


def _format_error(error: dict) -> str:
    loc = ".".join(str(part) for part in error.get("loc", ())) or "<root>"
    return f"{loc}: {error.get('msg', 'invalid')}"


def parse_experiment(document: dict) -> ExperimentConfig:
    """Validate ``document``; every violation found is reported at once."""
    try:
        config = ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigValidationError([_format_error(e) for e in exc.errors()]) from exc
    violations = compatibility_violations(config)
    if violations:
        raise ConfigValidationError(violations)
    return config


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigValidationError([f"{path}: cannot read ({exc.strerror})"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(document, dict):
        raise ConfigValidationError([f"{path}: the experiment must be a JSON object"])
    return parse_experiment(document)


def experiment_json_schema() -> dict:
    return ExperimentConfig.model_json_schema()
