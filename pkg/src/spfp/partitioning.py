"""Greedy construction of feature views whose joint information content
matches the full feature set.

Each view is grown one feature at a time by maximizing

    J(f_c) = |R(f_c,Y)| + I(f_c;Y)
             - (1/|S|) * sum_{f_s in S} I(f_s;f_c)
             + (1/|S|) * sum_{f_s in S} I(f_s;f_c|Y)

over the remaining pool (empty sums contribute 0), until the view meets all
three stopping criteria: a minimum size, joint entropy matching H(F), and
joint entropy with the target matching H(F,Y). After each view a configured
fraction of its features is removed from the master feature space, which
drives diversity across views.

|R| is the absolute Pearson correlation of the raw feature values against
the encoded target; the information terms are plug-in estimates over the
discretized codes.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import CodedMatrix, Dataset, discretize
from .errors import ConfigError, DataError
from .infometrics import PairCache, RowPartition, pearson_abs
from .seeding import REMOVAL_STREAM, substream

__all__ = [
    "SpfpConfig",
    "View",
    "ViewSet",
    "PoolDepletedError",
    "score_candidate",
    "criteria_met",
    "build_view",
    "partition",
    "view_stats",
    "conditional_independence_report",
]

_PARALLEL_THRESHOLD = 64


@dataclass
class SpfpConfig:
    """Parameters of the partitioning run.

    `min_features` is an absolute count when >= 1, a fraction of the total
    feature count when in (0,1). `relevance_correlation` picks how the
    Pearson term treats a multi-class target: ``codes`` correlates against
    the integer class codes, ``max_ovr`` takes the maximum over one-vs-rest
    class indicators.
    """

    n_views: int = 5
    min_features: float = 0.1
    remove_fraction: float = 0.6
    entropy_tolerance: float = 1e-9
    seed: int = 0
    bins: int = 10
    discretizer: str = "equal_frequency"
    relevance_correlation: str = "codes"
    workers: int = 0

    def __post_init__(self) -> None:
        if self.n_views < 1:
            raise ConfigError(f"n_views must be >= 1, got {self.n_views}")
        if self.min_features <= 0:
            raise ConfigError(f"min_features must be positive, got {self.min_features}")
        if not 0.0 <= self.remove_fraction <= 1.0:
            raise ConfigError(
                f"remove_fraction must be in [0,1], got {self.remove_fraction}"
            )
        if self.entropy_tolerance <= 0:
            raise ConfigError("entropy_tolerance must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.relevance_correlation not in ("codes", "max_ovr"):
            raise ConfigError(
                f"unknown relevance_correlation {self.relevance_correlation!r}"
            )

    def resolve_min_features(self, n_features: int) -> int:
        if 0 < self.min_features < 1:
            return max(1, math.ceil(self.min_features * n_features))
        return int(self.min_features)


@dataclass
class StepRecord:
    """One greedy step: pool size scored, chosen feature, criteria after it."""

    candidates: int
    winner: int
    criteria: tuple[bool, bool, bool]


@dataclass
class View:
    feature_ids: list[int]
    scores: list[float]
    h_s: float
    h_sy: float
    termination: str  # "criteria_met" | "pool_exhausted"
    step_trace: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.feature_ids)


@dataclass
class ViewSet:
    views: list[View]
    removed_log: list[list[int]]
    elapsed: list[float]
    h_f: float
    h_fy: float
    n_features: int
    config: SpfpConfig

    @property
    def union_ids(self) -> list[int]:
        out: set[int] = set()
        for v in self.views:
            out.update(v.feature_ids)
        return sorted(out)

    @property
    def intersection_ids(self) -> list[int]:
        if not self.views:
            return []
        out = set(self.views[0].feature_ids)
        for v in self.views[1:]:
            out &= set(v.feature_ids)
        return sorted(out)

    @property
    def union_size(self) -> int:
        return len(self.union_ids)

    @property
    def intersection_size(self) -> int:
        return len(self.intersection_ids)

    @property
    def ratios(self) -> list[float]:
        return [len(v) / self.n_features for v in self.views]


class PoolDepletedError(DataError):
    """Master feature space ran out before the requested number of views."""

    def __init__(self, message: str, views: list[View], removed_log: list[list[int]]):
        super().__init__(message)
        self.views = views
        self.removed_log = removed_log


def relevance_vector(
    features: np.ndarray, target: np.ndarray, n_classes: int, mode: str = "codes"
) -> np.ndarray:
    """|Pearson r| of every raw feature column against the encoded target."""
    if mode == "codes":
        ys = [target.astype(np.float64)]
    elif mode == "max_ovr":
        ys = [(target == c).astype(np.float64) for c in range(n_classes)]
    else:
        raise ConfigError(f"unknown relevance_correlation {mode!r}")
    xc = features - features.mean(axis=0)
    xnorm = np.sqrt((xc * xc).sum(axis=0))
    best = np.zeros(features.shape[1])
    for y in ys:
        yc = y - y.mean()
        ynorm = math.sqrt(float((yc * yc).sum()))
        denom = xnorm * ynorm
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.abs(xc.T @ yc) / denom
        r[denom == 0.0] = 0.0
        best = np.maximum(best, np.minimum(r, 1.0))
    return best


def criteria_met(
    n_selected: int,
    h_s: float,
    h_sy: float,
    h_f: float,
    h_fy: float,
    n_f: int,
    tol: float,
) -> tuple[bool, bool, bool]:
    """The three stopping predicates for the current selection state.

    Equality of entropies is tested as >= a relative-tolerance threshold;
    the subset entropies can never exceed the full-set ones, so this is the
    float-safe reading of the equality criteria.
    """
    c1 = n_selected >= n_f
    c2 = h_s >= h_f * (1.0 - tol)
    c3 = h_sy >= h_fy * (1.0 - tol)
    return (c1, c2, c3)


def score_candidate(
    f_c: int,
    selected,
    cache: PairCache,
    raw_features: np.ndarray,
    target: np.ndarray,
    relevance_correlation: str = "codes",
) -> float:
    """Objective value of one candidate against the current selection.

    Reference path used by tests and one-off scoring; `build_view` keeps
    incremental per-candidate sums instead of re-walking `selected`.
    """
    if f_c < 0 or f_c >= raw_features.shape[1]:
        raise ConfigError(f"candidate index {f_c} out of range")
    if relevance_correlation == "codes":
        rel = pearson_abs(raw_features[:, f_c], target.astype(np.float64))
    else:
        n_classes = int(target.max()) + 1
        rel = max(
            pearson_abs(raw_features[:, f_c], (target == c).astype(np.float64))
            for c in range(n_classes)
        )
    j = rel + cache.mi_with_target(f_c)
    if len(selected) > 0:
        mi_sum = 0.0
        cmi_sum = 0.0
        for f_s in selected:
            mi, cmi = cache.pair_stats(f_s, f_c)
            mi_sum += mi
            cmi_sum += cmi
        j += (cmi_sum - mi_sum) / len(selected)
    return j


@dataclass
class _Context:
    """Shared read-only state for building all views of one run."""

    coded: CodedMatrix
    target: np.ndarray
    cache: PairCache
    relevance: np.ndarray
    mi_y: np.ndarray
    h_f: float
    h_fy: float
    n_f: int
    tol: float
    workers: int


def _build_context(d: Dataset, coded: CodedMatrix, config: SpfpConfig) -> _Context:
    cache = PairCache(coded.codes, coded.cardinalities, d.target)
    n_feat = coded.n_columns
    relevance = relevance_vector(
        d.features, d.target, d.n_classes, config.relevance_correlation
    )
    mi_y = np.array([cache.mi_with_target(i) for i in range(n_feat)])
    full = RowPartition.from_columns(coded.codes.T)
    h_f = full.entropy()
    h_fy = full.refine(d.target).entropy()
    workers = config.workers if config.workers > 0 else min(4, _cpu_count())
    return _Context(
        coded=coded,
        target=d.target,
        cache=cache,
        relevance=relevance,
        mi_y=mi_y,
        h_f=h_f,
        h_fy=h_fy,
        n_f=config.resolve_min_features(n_feat),
        tol=config.entropy_tolerance,
        workers=workers,
    )


def _cpu_count() -> int:
    import os

    return os.cpu_count() or 1


def _fill_pair_block(
    cache: PairCache, winner: int, candidates: np.ndarray, workers: int
) -> tuple[np.ndarray, np.ndarray]:
    """MI/CMI of `winner` against every candidate, parallel over chunks.

    Cache fills are pure recomputations, so the chunk schedule cannot change
    any value; the returned arrays are positionally aligned with
    `candidates`.
    """

    def chunk_stats(chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mi = np.empty(chunk.shape[0])
        cmi = np.empty(chunk.shape[0])
        for pos, c in enumerate(chunk):
            mi[pos], cmi[pos] = cache.pair_stats(winner, int(c))
        return mi, cmi

    if workers > 1 and candidates.shape[0] >= _PARALLEL_THRESHOLD:
        chunks = np.array_split(candidates, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk_stats, chunks))
        return (
            np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]),
        )
    return chunk_stats(candidates)


def build_view(pool, ctx: _Context) -> View:
    """Grow one view greedily from `pool` until the criteria hold or the
    pool runs out.

    Ties in the argmax go to the lowest feature index; the pool is kept in
    ascending index order so the first maximum is that feature.
    """
    if not isinstance(ctx, _Context):
        raise TypeError("build_view needs a context built by partition()")
    pool_arr = np.array(sorted(int(p) for p in pool), dtype=np.intp)
    if pool_arr.size == 0:
        raise ConfigError("pool is empty")

    n_rows = ctx.coded.n_rows
    part_s = RowPartition.trivial(n_rows)
    part_sy = part_s.refine(ctx.target)
    h_s, h_sy = 0.0, part_sy.entropy()

    sum_mi = np.zeros(pool_arr.shape[0])
    sum_cmi = np.zeros(pool_arr.shape[0])
    selected: list[int] = []
    scores: list[float] = []
    trace: list[StepRecord] = []
    crit = criteria_met(0, h_s, h_sy, ctx.h_f, ctx.h_fy, ctx.n_f, ctx.tol)

    while pool_arr.size > 0 and not all(crit):
        score = ctx.relevance[pool_arr] + ctx.mi_y[pool_arr]
        if selected:
            score += (sum_cmi - sum_mi) / len(selected)
        best = int(np.argmax(score))  # first max = lowest index
        winner = int(pool_arr[best])

        selected.append(winner)
        scores.append(float(score[best]))
        col = ctx.coded.codes[:, winner]
        part_s = part_s.refine(col)
        part_sy = part_sy.refine(col)
        h_s, h_sy = part_s.entropy(), part_sy.entropy()

        keep = np.ones(pool_arr.shape[0], dtype=bool)
        keep[best] = False
        pool_arr = pool_arr[keep]
        sum_mi = sum_mi[keep]
        sum_cmi = sum_cmi[keep]

        crit = criteria_met(len(selected), h_s, h_sy, ctx.h_f, ctx.h_fy, ctx.n_f, ctx.tol)
        trace.append(StepRecord(candidates=keep.shape[0], winner=winner, criteria=crit))

        if pool_arr.size > 0 and not all(crit):
            mi_new, cmi_new = _fill_pair_block(ctx.cache, winner, pool_arr, ctx.workers)
            sum_mi += mi_new
            sum_cmi += cmi_new

    termination = "criteria_met" if all(crit) else "pool_exhausted"
    return View(
        feature_ids=selected,
        scores=scores,
        h_s=h_s,
        h_sy=h_sy,
        termination=termination,
        step_trace=trace,
    )


def partition(d: Dataset, config: SpfpConfig) -> ViewSet:
    """Run the full view-construction loop over a dataset.

    Views are built sequentially; after view g, round(remove_fraction *
    |view|) of its features (sampled without replacement from a per-view
    Philox substream of the master seed) leave the master feature space.
    """
    coded = discretize(d, config.bins, config.discretizer)
    ctx = _build_context(d, coded, config)
    if ctx.n_f > d.n_features:
        raise ConfigError(
            f"resolved min_features {ctx.n_f} exceeds feature count {d.n_features}"
        )

    available = np.ones(d.n_features, dtype=bool)
    views: list[View] = []
    removed_log: list[list[int]] = []
    elapsed: list[float] = []
    for g in range(config.n_views):
        pool = np.flatnonzero(available)
        if pool.size == 0:
            raise PoolDepletedError(
                f"feature space exhausted after {g} of {config.n_views} views",
                views,
                removed_log,
            )
        start = time.perf_counter()
        view = build_view(pool, ctx)
        elapsed.append(time.perf_counter() - start)
        views.append(view)
        if view.termination == "pool_exhausted":
            warnings.warn(
                f"view {g + 1} exhausted its pool before meeting the stopping "
                f"criteria ({len(view)} features selected)",
                stacklevel=2,
            )

        n_remove = int(math.floor(config.remove_fraction * len(view) + 0.5))
        if n_remove > 0:
            rng = substream(config.seed, REMOVAL_STREAM, g)
            picks = rng.choice(len(view.feature_ids), size=n_remove, replace=False)
            removed = sorted(view.feature_ids[i] for i in picks)
        else:
            removed = []
        removed_log.append(removed)
        available[removed] = False

    return ViewSet(
        views=views,
        removed_log=removed_log,
        elapsed=elapsed,
        h_f=ctx.h_f,
        h_fy=ctx.h_fy,
        n_features=d.n_features,
        config=config,
    )


def view_stats(vs: ViewSet, n_features: int | None = None) -> dict:
    """Size, overlap, and timing summary of a ViewSet.

    `overlap` is the pairwise common-feature count matrix (diagonal =
    view sizes).
    """
    if not vs.views:
        raise ConfigError("empty ViewSet")
    n_feat = n_features if n_features is not None else vs.n_features
    sets = [set(v.feature_ids) for v in vs.views]
    k = len(sets)
    overlap = [[len(sets[a] & sets[b]) for b in range(k)] for a in range(k)]
    return {
        "view_sizes": [len(v) for v in vs.views],
        "union_size": vs.union_size,
        "intersection_size": vs.intersection_size,
        "view_ratios": [len(v) / n_feat for v in vs.views],
        "union_ratio": vs.union_size / n_feat,
        "overlap": overlap,
        "elapsed": list(vs.elapsed),
        "terminations": [v.termination for v in vs.views],
    }


def conditional_independence_report(
    vs: ViewSet,
    coded: CodedMatrix,
    target: np.ndarray,
    tolerance: float = 1e-9,
) -> dict:
    """Empirical check of the view-pair conditional-independence assumption.

    Computes I(view_a; view_b | Y) for every pair via row partitions over
    each view's joint state, together with H(F), H(Y), and whether
    H(F) <= H(Y), the necessary condition for all pairwise conditional
    independences to hold at full information content.
    """
    if len(vs.views) < 2:
        raise ConfigError("conditional independence needs at least two views")
    target = np.asarray(target, dtype=np.intp)
    group_cols = [
        RowPartition.from_columns(coded.codes[:, v.feature_ids].T).group_id
        for v in vs.views
    ]
    part_y = RowPartition.trivial(coded.n_rows).refine(target)
    h_y = part_y.entropy()
    h_view_y = [part_y.refine(g).entropy() for g in group_cols]
    k = len(group_cols)
    cmi = np.zeros((k, k))
    for a in range(k):
        part_ay = part_y.refine(group_cols[a])
        for b in range(a, k):
            h_aby = part_ay.refine(group_cols[b]).entropy()
            value = max(0.0, h_view_y[a] + h_view_y[b] - h_aby - h_y)
            cmi[a, b] = cmi[b, a] = value
    h_f = RowPartition.from_columns(coded.codes.T).entropy()
    off_diag = cmi[~np.eye(k, dtype=bool)]
    return {
        "pairwise_cmi": cmi.tolist(),
        "h_f": h_f,
        "h_y": h_y,
        "h_f_le_h_y": bool(h_f <= h_y + tolerance),
        "assumption_violated": bool((off_diag > tolerance).any()),
        "tolerance": tolerance,
    }
