"""Synthetic dataset generation, CSV ingestion and the four-way split."""

import csv
import logging
from pathlib import Path

import numpy as np

from mi_guard.errors import DatasetError, DatasetParseError, LabelRangeError
from mi_guard.models.dataset import Dataset, FourWaySplit
from mi_guard.numeric import RngStream
from mi_guard.schemas.data import CsvSource, FeatureKind, SyntheticSpec

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("victim_train", "victim_test", "shadow_train", "shadow_test")


# ============================================================================
# Synthetic generators
# ============================================================================

def gen_continuous(spec: SyntheticSpec) -> Dataset:
    """Gaussian clusters: mean_c = separation * N(0, I), x = mean_c + N(0, I)."""
    gen = RngStream(spec.seed).fork("continuous").generator()
    means = spec.separation * gen.standard_normal((spec.num_classes, spec.dim))
    features = np.concatenate(
        [means[c] + gen.standard_normal((spec.per_class, spec.dim)) for c in range(spec.num_classes)]
    )
    labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
    logger.debug("Generated continuous task C=%d D=%d n=%d", spec.num_classes, spec.dim, len(labels))
    return Dataset(features, labels, spec.num_classes, "continuous", name="synthetic")


def gen_binary(spec: SyntheticSpec) -> Dataset:
    """Bernoulli templates in {0,1}^D with every bit flipped w.p. ``flip_rate``.

    Class templates are a shared base template with each bit toggled w.p.
    ``class_spread``; at 0.5 the templates are independent uniform vectors.
    """
    gen = RngStream(spec.seed).fork("binary").generator()
    base = gen.integers(0, 2, size=spec.dim)
    toggles = gen.random((spec.num_classes, spec.dim)) < spec.class_spread
    templates = np.bitwise_xor(base, toggles.astype(np.int64))
    rows = []
    for c in range(spec.num_classes):
        flips = (gen.random((spec.per_class, spec.dim)) < spec.flip_rate).astype(np.int64)
        rows.append(np.bitwise_xor(templates[c], flips))
    features = np.concatenate(rows).astype(np.float64)
    labels = np.repeat(np.arange(spec.num_classes), spec.per_class)
    logger.debug("Generated binary task C=%d D=%d n=%d", spec.num_classes, spec.dim, len(labels))
    return Dataset(features, labels, spec.num_classes, "binary", name="synthetic")


def generate(spec: SyntheticSpec) -> Dataset:
    return gen_binary(spec) if spec.kind == "binary" else gen_continuous(spec)


# ============================================================================
# Split
# ============================================================================

def split4(ds: Dataset, rng: RngStream) -> FourWaySplit:
    """Random permutation cut into contiguous quarters.

    When ``len(ds)`` is not a multiple of four the earlier parts take one
    extra record each. Splits are not stratified by class.
    """
    n = len(ds)
    if n < 4:
        raise DatasetError(f"need at least 4 records to split four ways, got {n}")
    perm = rng.generator().permutation(n)
    base, extra = divmod(n, 4)
    sizes = [base + (1 if i < extra else 0) for i in range(4)]
    bounds = np.cumsum([0, *sizes])
    parts = [
        ds.subset(perm[bounds[i]:bounds[i + 1]], name=SPLIT_NAMES[i]) for i in range(4)
    ]
    return FourWaySplit(*parts)


# ============================================================================
# CSV
# ============================================================================

def load_csv(path: str | Path, kind: FeatureKind, num_classes: int) -> Dataset:
    """Read a UTF-8 CSV: one header row, features, base-10 integer label last.

    Row numbers in errors are file line numbers (the header is row 1).
    """
    path = Path(path)
    features: list[list[float]] = []
    labels: list[int] = []
    width: int | None = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            next(reader)
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        for row_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DatasetParseError(row_number, "expected at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetParseError(row_number, f"expected {width} columns, got {len(row)}")
            try:
                values = [float(cell) for cell in row[:-1]]
                label = int(row[-1].strip(), 10)
            except ValueError as exc:
                raise DatasetParseError(row_number, str(exc)) from None
            if not all(np.isfinite(values)):
                raise DatasetParseError(row_number, "non-finite feature value")
            if kind == "binary" and any(v not in (0.0, 1.0) for v in values):
                raise DatasetParseError(row_number, "binary features must be 0 or 1")
            if not 0 <= label < num_classes:
                raise LabelRangeError(row_number, label, num_classes)
            features.append(values)
            labels.append(label)
    if not labels:
        raise DatasetError(f"{path} holds no records")
    logger.info("Loaded %d records (D=%d) from %s", len(labels), width - 1, path)
    return Dataset(np.array(features), np.array(labels), num_classes, kind, name=path.stem)


def write_csv(ds: Dataset, path: str | Path) -> Path:
    """Emit ``ds`` in the format :func:`load_csv` reads; round trips losslessly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"f{i}" for i in range(ds.dim)] + ["label"]
    fmt = (lambda v: str(int(v))) if ds.kind == "binary" else repr
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([fmt(float(v)) for v in x] + [str(int(y))])
    return path


def load_dataset(source: SyntheticSpec | CsvSource) -> Dataset:
    """Generate a synthetic task or read a CSV file, whichever ``source`` describes."""
    if isinstance(source, CsvSource):
        return load_csv(source.path, source.kind, source.num_classes)
    ds = generate(source)
    logger.info("Generated %s task: %d records, D=%d, C=%d", source.kind, len(ds), ds.dim,
                ds.num_classes)
    return ds
