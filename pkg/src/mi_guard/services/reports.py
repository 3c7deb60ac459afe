"""Deterministic report artifacts: sweep CSV/JSON, attack scores and run manifests.

Identical inputs give byte-identical files: keys are sorted, floats are written
with ``repr`` and nothing time- or host-dependent is recorded.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import threading
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pydantic
import scipy

import mi_guard
from mi_guard.errors import DatasetParseError
from mi_guard.schemas.attack import MembershipScore
from mi_guard.schemas.experiment import ExperimentConfig
from mi_guard.schemas.report import REPORT_SCHEMA_VERSION, SWEEP_CSV_COLUMNS, SweepRow

logger = logging.getLogger(__name__)

SCORE_CSV_COLUMNS = ("record_id", "score", "is_member", "adversary", "p", "N")

# Every artifact goes through one writer
_write_lock = threading.Lock()


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    with _write_lock:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    logger.debug("wrote %s (%d bytes)", path, len(text))
    return path


def dump_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(document: Any, path: str | Path) -> Path:
    return _write_text(Path(path), dump_json(document))


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical config JSON; the output directory is not part of it."""
    canonical = json.dumps(config.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ============================================================================
# Sweep rows
# ============================================================================

def _fmt_float(value: float | None) -> str:
    if value is None or math.isinf(value):
        return "inf"
    return repr(float(value))


def sweep_csv_text(rows: Iterable[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            row.defense,
            repr(row.param),
            "mean" if row.seed is None else str(row.seed),
            repr(row.accuracy),
            repr(row.auc),
            _fmt_float(row.epsilon),
            repr(row.delta),
            str(row.queries),
        ])
    return buffer.getvalue()


def read_sweep_csv(path: str | Path) -> list[SweepRow]:
    """Parse a sweep CSV written by :func:`emit_report`."""
    path = Path(path)
    rows: list[SweepRow] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SWEEP_CSV_COLUMNS:
            raise DatasetParseError(1, f"expected header {','.join(SWEEP_CSV_COLUMNS)}")
        for line, fields in enumerate(reader, start=2):
            if len(fields) != len(SWEEP_CSV_COLUMNS):
                raise DatasetParseError(line, f"expected {len(SWEEP_CSV_COLUMNS)} fields, got {len(fields)}")
            defense, param, seed, acc, auc_value, epsilon, delta, queries = fields
            try:
                rows.append(SweepRow(
                    defense=defense,
                    param=float(param),
                    seed=None if seed == "mean" else int(seed),
                    accuracy=float(acc),
                    auc=float(auc_value),
                    epsilon=None if epsilon == "inf" else float(epsilon),
                    delta=float(delta),
                    queries=int(queries),
                ))
            except (ValueError, pydantic.ValidationError) as exc:
                raise DatasetParseError(line, str(exc)) from exc
    return rows


def emit_report(rows: list[SweepRow], metadata: dict[str, Any], path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (one row per line) and ``<path>.json`` (rows + metadata)."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    json_path = path.with_suffix(".json")
    _write_text(csv_path, sweep_csv_text(rows))
    document = {
        "schema_version": REPORT_SCHEMA_VERSION,
        **metadata,
        "rows": [row.model_dump(mode="json") for row in rows],
    }
    write_json(document, json_path)
    logger.info("Report written: %s, %s (%d rows)", csv_path, json_path, len(rows))
    return csv_path, json_path


# ============================================================================
# Attack scores
# ============================================================================

def write_scores_csv(
    scores: Iterable[MembershipScore],
    path: str | Path,
    *,
    adversary: str,
    p: float | None = None,
    n_samples: int | None = None,
) -> Path:
    """One row per scored record; p and N are left empty for posterior adversaries."""
    p_cell = "" if p is None else repr(float(p))
    n_cell = "" if n_samples is None else str(n_samples)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SCORE_CSV_COLUMNS)
    for s in scores:
        member = "" if s.is_member is None else str(int(s.is_member))
        writer.writerow([s.record_id, repr(s.score), member, adversary, p_cell, n_cell])
    return _write_text(Path(path), buffer.getvalue())


# ============================================================================
# Manifest
# ============================================================================

def package_versions() -> dict[str, str]:
    return {
        "mi_guard": mi_guard.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "dp_accounting": metadata.version("dp-accounting"),
        "langgraph": metadata.version("langgraph"),
    }


def write_manifest(config: ExperimentConfig, subcommand: str, output_dir: str | Path) -> Path:
    """Everything needed to rerun this invocation exactly."""
    manifest = {
        "config": config.model_dump(mode="json", exclude={"output_dir"}),
        "config_hash": config_hash(config),
        "seeds": list(config.seeds),
        "subcommand": subcommand,
        "versions": package_versions(),
    }
    return write_json(manifest, Path(output_dir) / "manifest.json")
