"""Tabular data loading, discretization, and deterministic splitting.

CSV files are expected UTF-8, comma-separated, with a header row and '.'
decimal points. The target column is label-encoded in first-appearance
order; all other columns must parse as numbers. Continuous features are
discretized to small-integer codes so the plug-in entropy estimators in
:mod:`spfp.infometrics` apply.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .seeding import SPLIT_STREAM, substream

__all__ = ["Dataset", "CodedMatrix", "SplitSpec", "load_csv", "discretize", "split"]

_MISSING_TOKENS = {"", "na", "n/a", "nan", "null"}
_STRATEGIES = ("equal_frequency", "equal_width", "passthrough_if_integral")


@dataclass
class Dataset:
    """In-memory tabular dataset with an encoded categorical target."""

    features: np.ndarray
    feature_names: tuple[str, ...]
    target: np.ndarray
    class_names: tuple[str, ...]
    n_rejected_rows: int = 0
    n_imputed_cells: int = 0

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Dataset restricted to the given row indices (load counters reset)."""
        return Dataset(
            features=self.features[rows],
            feature_names=self.feature_names,
            target=self.target[rows],
            class_names=self.class_names,
        )


@dataclass
class CodedMatrix:
    """Per-column small-integer codes with cardinalities and cut points.

    ``bin_edges[j]`` holds the interior cut points used for column j, empty
    for passthrough columns. Codes are dense: every value 0..card-1 occurs.
    """

    codes: np.ndarray
    cardinalities: np.ndarray
    bin_edges: tuple[np.ndarray, ...]

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_columns(self) -> int:
        return self.codes.shape[1]


@dataclass
class SplitSpec:
    """Deterministic train/test split parameters."""

    test_fraction: float
    seed: int
    stratified: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0,1), got {self.test_fraction}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def _parse_cell(text: str, row: int, column: str) -> float:
    """Parse one numeric cell; missing tokens map to NaN."""
    stripped = text.strip()
    if stripped.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(stripped)
    except ValueError:
        raise DataError(
            f"unparseable cell at row {row}, column '{column}': {text!r}"
        ) from None


def load_csv(path, target_column, missing_policy: str = "error") -> Dataset:
    """Load a CSV into a Dataset, encoding the target by first appearance.

    `target_column` is a header name or 0-based column index.
    `missing_policy` decides what happens to rows with missing cells:
    ``error`` (default) rejects the file naming the first offending cell,
    ``drop`` discards offending rows, ``median`` imputes missing feature
    cells with the column median (rows missing the target are dropped).
    """
    if missing_policy not in ("error", "drop", "median"):
        raise ConfigError(f"unknown missing_policy {missing_policy!r}")
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if isinstance(target_column, int):
            if not 0 <= target_column < len(header):
                raise DataError(f"target column index {target_column} out of range")
            target_idx = target_column
        else:
            try:
                target_idx = header.index(str(target_column))
            except ValueError:
                raise DataError(f"target column {target_column!r} not found") from None
        feature_names = tuple(h for i, h in enumerate(header) if i != target_idx)

        rows: list[list[float]] = []
        labels: list[str] = []
        n_rejected = 0
        for row_no, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(
                    f"row {row_no}: expected {len(header)} fields, got {len(record)}"
                )
            label = record[target_idx].strip()
            if label.lower() in _MISSING_TOKENS:
                if missing_policy == "error":
                    raise DataError(
                        f"missing value at row {row_no}, column '{header[target_idx]}'"
                    )
                n_rejected += 1
                continue
            values = []
            missing_at = None
            for i, cell in enumerate(record):
                if i == target_idx:
                    continue
                value = _parse_cell(cell, row_no, header[i])
                if math.isnan(value) and missing_at is None:
                    missing_at = header[i]
                values.append(value)
            if missing_at is not None and missing_policy == "error":
                raise DataError(f"missing value at row {row_no}, column '{missing_at}'")
            if missing_at is not None and missing_policy == "drop":
                n_rejected += 1
                continue
            rows.append(values)
            labels.append(label)

    if not rows:
        raise DataError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)

    n_imputed = 0
    if missing_policy == "median":
        for j in range(features.shape[1]):
            mask = np.isnan(features[:, j])
            if mask.any():
                valid = features[~mask, j]
                if valid.size == 0:
                    raise DataError(f"column '{feature_names[j]}' has no usable values")
                features[mask, j] = np.median(valid)
                n_imputed += int(mask.sum())

    class_names: list[str] = []
    class_index: dict[str, int] = {}
    target = np.empty(len(labels), dtype=np.intp)
    for i, label in enumerate(labels):
        if label not in class_index:
            class_index[label] = len(class_names)
            class_names.append(label)
        target[i] = class_index[label]
    if len(class_names) < 2:
        raise DataError(f"fewer than 2 classes in target column (found {len(class_names)})")

    return Dataset(
        features=features,
        feature_names=feature_names,
        target=target,
        class_names=tuple(class_names),
        n_rejected_rows=n_rejected,
        n_imputed_cells=n_imputed,
    )


def _dense_recode(raw: np.ndarray) -> np.ndarray:
    """Map codes onto 0..k-1 preserving order, so every code occurs."""
    occupied = np.flatnonzero(np.bincount(raw))
    remap = np.empty(occupied[-1] + 1, dtype=np.intp)
    remap[occupied] = np.arange(occupied.shape[0])
    return remap[raw]


def _is_integral(col: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(col)) and np.all(col == np.floor(col)))


def discretize(d: Dataset, bins: int = 10, strategy: str = "equal_frequency") -> CodedMatrix:
    """Discretize every feature column to dense small-integer codes.

    Integral columns with at most `bins` distinct values pass through as
    dense codes regardless of strategy. Remaining columns are cut at
    column quantiles (equal_frequency, also the rule behind
    passthrough_if_integral) or at uniform intervals (equal_width);
    duplicate cut points are merged, so cardinality may come out below
    `bins`. Constant columns get cardinality 1. Coding is order-preserving
    per column.
    """
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    if strategy not in _STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}, expected one of {_STRATEGIES}")

    n_cols = d.n_features
    codes = np.empty((d.n_rows, n_cols), dtype=np.intp)
    cards = np.empty(n_cols, dtype=np.intp)
    edges_out: list[np.ndarray] = []
    for j in range(n_cols):
        col = d.features[:, j]
        uniques = np.unique(col)
        if _is_integral(col) and uniques.shape[0] <= bins:
            coded = np.searchsorted(uniques, col)
            edges = np.empty(0, dtype=np.float64)
        elif uniques.shape[0] == 1:
            coded = np.zeros(d.n_rows, dtype=np.intp)
            edges = np.empty(0, dtype=np.float64)
        else:
            if strategy == "equal_width":
                edges = np.linspace(col.min(), col.max(), bins + 1)[1:-1]
            else:
                qs = np.arange(1, bins) / bins
                edges = np.quantile(col, qs)
            edges = np.unique(edges)
            coded = np.searchsorted(edges, col, side="left")
            coded = _dense_recode(coded)
        codes[:, j] = coded
        cards[j] = int(coded.max()) + 1
        edges_out.append(edges)
    return CodedMatrix(codes=codes, cardinalities=cards, bin_edges=tuple(edges_out))


def _stratified_test_counts(class_sizes: np.ndarray, test_fraction: float) -> np.ndarray:
    """Per-class test-row quotas: floor + largest remainder, >=1 per side."""
    quotas = test_fraction * class_sizes
    counts = np.floor(quotas).astype(np.intp)
    total_target = int(math.floor(test_fraction * class_sizes.sum() + 0.5))
    shortfall = total_target - int(counts.sum())
    if shortfall > 0:
        remainders = quotas - counts
        order = np.lexsort((np.arange(len(counts)), -remainders))
        for c in order[:shortfall]:
            counts[c] += 1
    counts = np.clip(counts, 1, class_sizes - 1)
    return counts


def split(d: Dataset, spec: SplitSpec, stream: int = SPLIT_STREAM) -> tuple[Dataset, Dataset]:
    """Deterministic train/test split; stratified keeps every class on both sides.

    `stream` names the RNG substream, so one seed can drive several
    independent splits (outer train/test vs inner holdout)."""
    rng = substream(spec.seed, stream)
    n = d.n_rows
    if spec.stratified:
        class_sizes = np.bincount(d.target, minlength=d.n_classes)
        if class_sizes.min() < 2:
            tiny = d.class_names[int(class_sizes.argmin())]
            raise DataError(
                f"class '{tiny}' has fewer than 2 rows; cannot appear in both sides"
            )
        counts = _stratified_test_counts(class_sizes, spec.test_fraction)
        test_rows: list[np.ndarray] = []
        for c in range(d.n_classes):
            members = np.flatnonzero(d.target == c)
            picked = rng.permutation(members.shape[0])[: counts[c]]
            test_rows.append(members[picked])
        test_idx = np.sort(np.concatenate(test_rows))
    else:
        n_test = min(max(int(math.floor(spec.test_fraction * n + 0.5)), 1), n - 1)
        test_idx = np.sort(rng.permutation(n)[:n_test])
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train_idx = np.flatnonzero(~mask)
    return d.subset(train_idx), d.subset(test_idx)
