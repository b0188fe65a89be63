"""Discrete information-theoretic estimators over small-integer coded columns.

All quantities are maximum-likelihood plug-in estimates from empirical
frequencies, reported in bits (base-2 logarithms). Columns are expected as
dense non-negative integer codes, e.g. the output of
:func:`spfp.dataset.discretize`.

The joint-entropy workhorse is :class:`RowPartition`: a grouping of rows by
their joint value over a set of columns that can be refined one column at a
time, so growing feature subsets never recount from scratch.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrequencyTable",
    "RowPartition",
    "PairCache",
    "entropy",
    "joint_entropy",
    "conditional_entropy",
    "mutual_information",
    "conditional_mutual_information",
    "interaction_gain",
    "pearson_abs",
]


def _as_codes(column, name: str = "column") -> np.ndarray:
    codes = np.asarray(column)
    if codes.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if codes.size == 0:
        raise ValueError(f"{name} is empty")
    codes = codes.astype(np.intp, copy=False)
    if codes.min() < 0:
        raise ValueError(f"{name} contains negative codes")
    return codes


def _check_same_length(*columns: np.ndarray) -> int:
    lengths = {c.shape[0] for c in columns}
    if len(lengths) != 1:
        raise ValueError(f"length mismatch: {sorted(lengths)}")
    return columns[0].shape[0]


def _entropy_from_counts(counts: np.ndarray) -> float:
    """Shannon entropy in bits of a count vector (zeros ignored).

    Counts are sorted before summation so the result depends only on the
    count multiset, never on grouping order; this is what makes entropy
    paths (refinement vs direct counting) and symmetric quantities
    (I(X;Y) vs I(Y;X)) agree bit-for-bit.
    """
    counts = np.sort(counts[counts > 0])
    total = counts.sum()
    p = counts / total
    return float(-(p * np.log2(p)).sum())


def _combine(a: np.ndarray, b: np.ndarray, card_b: int) -> np.ndarray:
    """Joint key of two code columns; not dense, bounded by card(a)*card(b)."""
    return a * card_b + b


@dataclass
class FrequencyTable:
    """Occurrence counts of joint values over one or more coded columns.

    `counts` maps the joint-value key (a single code, or a tuple for multiple
    columns) to its number of occurrences; `total` is the number of rows used
    to build the table.
    """

    counts: dict
    total: int

    @classmethod
    def from_codes(cls, *columns) -> "FrequencyTable":
        cols = [_as_codes(c) for c in columns]
        n = _check_same_length(*cols)
        if len(cols) == 1:
            values, cnt = np.unique(cols[0], return_counts=True)
            counts = {int(v): int(c) for v, c in zip(values, cnt)}
        else:
            stacked = np.stack(cols, axis=1)
            values, cnt = np.unique(stacked, axis=0, return_counts=True)
            counts = {tuple(int(v) for v in row): int(c) for row, c in zip(values, cnt)}
        return cls(counts=counts, total=n)

    def entropy(self) -> float:
        return _entropy_from_counts(np.fromiter(self.counts.values(), dtype=np.intp))


@dataclass
class RowPartition:
    """Rows grouped by joint value over a set of columns.

    Group indices are dense (0..n_groups-1) and re-densified after every
    refinement, which keeps joint keys bounded regardless of how many columns
    have been folded in. The entropy of the group sizes equals the plug-in
    joint entropy of the refined columns.
    """

    group_id: np.ndarray
    n_groups: int
    group_sizes: np.ndarray

    @classmethod
    def trivial(cls, n_rows: int) -> "RowPartition":
        """Single-group partition: the joint state of an empty column set."""
        if n_rows <= 0:
            raise ValueError("n_rows must be positive")
        return cls(
            group_id=np.zeros(n_rows, dtype=np.intp),
            n_groups=1,
            group_sizes=np.array([n_rows], dtype=np.intp),
        )

    @classmethod
    def from_columns(cls, columns) -> "RowPartition":
        part = None
        for col in columns:
            codes = _as_codes(col)
            part = cls.trivial(codes.shape[0]) if part is None else part
            part = part.refine(codes)
        if part is None:
            raise ValueError("at least one column required")
        return part

    def refine(self, column) -> "RowPartition":
        """Intersect every group with the value classes of `column`."""
        codes = _as_codes(column)
        if codes.shape[0] != self.group_id.shape[0]:
            raise ValueError("length mismatch between partition and column")
        card = int(codes.max()) + 1
        key = _combine(self.group_id, codes, card)
        # Dense recode: occupied keys -> 0..n_groups-1, preserving key order.
        counts = np.bincount(key, minlength=self.n_groups * card)
        occupied = np.flatnonzero(counts)
        remap = np.empty(self.n_groups * card, dtype=np.intp)
        remap[occupied] = np.arange(occupied.shape[0])
        return RowPartition(
            group_id=remap[key],
            n_groups=int(occupied.shape[0]),
            group_sizes=counts[occupied].astype(np.intp),
        )

    def entropy(self) -> float:
        return _entropy_from_counts(self.group_sizes)


def entropy(column) -> float:
    """Shannon entropy H of one coded column, in bits."""
    codes = _as_codes(column)
    return _entropy_from_counts(np.bincount(codes))


def joint_entropy(columns) -> float:
    """Entropy of the row tuples over one or more coded columns, in bits."""
    cols = [_as_codes(c) for c in columns]
    if not cols:
        raise ValueError("at least one column required")
    _check_same_length(*cols)
    return RowPartition.from_columns(cols).entropy()


def conditional_entropy(x, given) -> float:
    """H(X|Y) = H(X,Y) - H(Y), in bits."""
    xc, yc = _as_codes(x, "x"), _as_codes(given, "given")
    _check_same_length(xc, yc)
    return joint_entropy([xc, yc]) - entropy(yc)


def mutual_information(x, y) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y), in bits; small negatives clamped to 0."""
    xc, yc = _as_codes(x, "x"), _as_codes(y, "y")
    _check_same_length(xc, yc)
    value = entropy(xc) + entropy(yc) - joint_entropy([xc, yc])
    return max(0.0, value)


def conditional_mutual_information(x, y, given) -> float:
    """I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z), in bits; clamped at 0."""
    xc = _as_codes(x, "x")
    yc = _as_codes(y, "y")
    zc = _as_codes(given, "given")
    _check_same_length(xc, yc, zc)
    value = (
        joint_entropy([xc, zc])
        + joint_entropy([yc, zc])
        - joint_entropy([xc, yc, zc])
        - entropy(zc)
    )
    return max(0.0, value)


def interaction_gain(x, y, target) -> float:
    """I(X;Y) - I(X;Y|target), applied exactly as written: complementary
    pairs (XOR against their parity) come out negative, redundant pairs
    positive. No sign flip is applied on top of the difference."""
    xc = _as_codes(x, "x")
    yc = _as_codes(y, "y")
    tc = _as_codes(target, "target")
    _check_same_length(xc, yc, tc)
    return mutual_information(xc, yc) - conditional_mutual_information(xc, yc, tc)


def pearson_abs(x, y) -> float:
    """Absolute sample Pearson correlation; 0 when either input has zero variance."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape:
        raise ValueError(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    if xv.shape[0] < 2:
        raise ValueError("at least two observations required")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0
    return min(1.0, float(abs((xc * yc).sum() / denom)))


class PairCache:
    """Fill-on-demand cache of pairwise MI and CMI-given-target, in bits.

    Both statistics for a pair are computed in one joint-counting pass and
    memoised under the unordered pair key. Fills are idempotent (pure
    recomputation), so concurrent fills of the same cell converge to the
    same value and last-write-wins is harmless.
    """

    def __init__(self, codes: np.ndarray, cardinalities, target) -> None:
        self._codes = np.ascontiguousarray(codes, dtype=np.intp)
        self._cards = np.asarray(cardinalities, dtype=np.intp)
        self._target = _as_codes(target, "target")
        if self._codes.shape[0] != self._target.shape[0]:
            raise ValueError("length mismatch between codes and target")
        self._n = self._codes.shape[0]
        self._t_card = int(self._target.max()) + 1
        self._h_target = entropy(self._target)
        self._pair: dict[tuple[int, int], tuple[float, float]] = {}
        self._h_feat: dict[int, float] = {}
        self._h_feat_t: dict[int, float] = {}
        self._lock = threading.Lock()

    @property
    def target_entropy(self) -> float:
        return self._h_target

    def feature_entropy(self, i: int) -> float:
        h = self._h_feat.get(i)
        if h is None:
            h = _entropy_from_counts(np.bincount(self._codes[:, i]))
            self._h_feat[i] = h
        return h

    def feature_target_entropy(self, i: int) -> float:
        """H(f_i, Y)."""
        h = self._h_feat_t.get(i)
        if h is None:
            key = _combine(self._codes[:, i], self._target, self._t_card)
            h = _entropy_from_counts(np.bincount(key))
            self._h_feat_t[i] = h
        return h

    def mi_with_target(self, i: int) -> float:
        """I(f_i; Y)."""
        value = self.feature_entropy(i) + self._h_target - self.feature_target_entropy(i)
        return max(0.0, value)

    def pair_stats(self, i: int, j: int) -> tuple[float, float]:
        """(I(f_i;f_j), I(f_i;f_j|Y)) for an unordered feature pair."""
        key = (i, j) if i <= j else (j, i)
        hit = self._pair.get(key)
        if hit is not None:
            return hit
        a, b = key
        joint = _combine(self._codes[:, a], self._codes[:, b], int(self._cards[b]))
        h_ab = _entropy_from_counts(np.bincount(joint))
        h_abt = _entropy_from_counts(
            np.bincount(_combine(joint, self._target, self._t_card))
        )
        mi = max(0.0, self.feature_entropy(a) + self.feature_entropy(b) - h_ab)
        cmi = max(
            0.0,
            self.feature_target_entropy(a)
            + self.feature_target_entropy(b)
            - h_abt
            - self._h_target,
        )
        with self._lock:
            self._pair[key] = (mi, cmi)
        return (mi, cmi)

    def mi(self, i: int, j: int) -> float:
        return self.pair_stats(i, j)[0]

    def cmi(self, i: int, j: int) -> float:
        return self.pair_stats(i, j)[1]

    def __len__(self) -> int:
        return len(self._pair)
