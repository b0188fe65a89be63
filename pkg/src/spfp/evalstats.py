"""Nonparametric comparison machinery for run matrices of a metric.

A run matrix holds one metric observed over n runs (blocks) for k models
(treatments). Comparisons follow the rank-based route: tie-corrected
Friedman test, Conover post-hoc on the same within-block ranks, multiple-
comparison adjustment, and Cliff's delta effect sizes with percentile
bootstrap intervals.

The verdict rule: a model beats the benchmark on a metric when the adjusted
Friedman p and the adjusted Conover p are both below alpha and delta is
positive after orienting values so that larger means better.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, rankdata
from scipy.stats import t as student_t

from .errors import ConfigError, DataError
from .seeding import BOOTSTRAP_STREAM, substream

__all__ = [
    "RunMatrix",
    "ComparisonVerdict",
    "friedman",
    "conover_posthoc",
    "adjust",
    "cliffs_delta",
    "bootstrap_ci",
    "win_tie_loss",
]

_MAGNITUDE_BANDS = ((0.147, "negligible"), (0.333, "small"), (0.474, "medium"))


@dataclass
class RunMatrix:
    """n runs x k models of one metric, plus the metric's orientation."""

    values: np.ndarray
    treatment_names: list[str]
    higher_is_better: bool = True

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("run matrix must be 2-D (runs x models)")
        n, k = self.values.shape
        if k < 2 or n < 2:
            raise DataError("run matrix needs >= 2 runs and >= 2 models")
        if len(self.treatment_names) != k:
            raise DataError("one treatment name per column required")
        if len(set(self.treatment_names)) != k:
            raise DataError("treatment names must be unique")
        if not np.isfinite(self.values).all():
            raise DataError("run matrix contains non-finite cells")


@dataclass
class ComparisonVerdict:
    outcome: str  # "win" | "tie" | "loss"
    delta: float
    magnitude: str
    ci: tuple[float, float]
    p_friedman_adj: float
    p_conover_adj: float

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "delta": self.delta,
            "magnitude": self.magnitude,
            "ci": list(self.ci),
            "p_friedman_adj": self.p_friedman_adj,
            "p_conover_adj": self.p_conover_adj,
        }


def _block_ranks(values: np.ndarray) -> np.ndarray:
    return rankdata(values, axis=1)


def _rank_terms(values: np.ndarray):
    """Shared pieces of the tie-corrected Friedman statistic.

    Returns (rank sums per treatment, sum of squared ranks A2, the
    no-information baseline C2, statistic T1)."""
    n, k = values.shape
    ranks = _block_ranks(values)
    rank_sums = ranks.sum(axis=0)
    a2 = float((ranks**2).sum())
    c2 = n * k * (k + 1) ** 2 / 4.0
    if a2 == c2:  # every block fully tied
        return rank_sums, a2, c2, 0.0
    t1 = (k - 1) * float(((rank_sums - n * (k + 1) / 2.0) ** 2).sum()) / (a2 - c2)
    return rank_sums, a2, c2, t1


def friedman(m: RunMatrix) -> tuple[float, float]:
    """Tie-corrected Friedman statistic and its chi-squared p-value."""
    n, k = m.values.shape
    _, a2, c2, t1 = _rank_terms(m.values)
    if a2 == c2:
        return 0.0, 1.0
    return t1, float(chi2.sf(t1, k - 1))


def conover_posthoc(m: RunMatrix) -> np.ndarray:
    """Pairwise two-sided p-values of the Conover-Iman comparisons.

    Uses the rank sums of the Friedman layout with pooled variance and
    (n-1)(k-1) degrees of freedom. Fully tied data yields p=1 everywhere;
    a zero variance estimate with differing rank sums yields p=0 (the
    statistic diverges).
    """
    n, k = m.values.shape
    rank_sums, a2, c2, t1 = _rank_terms(m.values)
    df = (n - 1) * (k - 1)
    out = np.ones((k, k))
    if a2 == c2:
        return out
    spread = max(0.0, 1.0 - t1 / (n * (k - 1)))
    se2 = 2.0 * n * (a2 - c2) * spread / df
    for i in range(k):
        for j in range(i + 1, k):
            diff = abs(float(rank_sums[i] - rank_sums[j]))
            if se2 <= 0.0:
                p = 0.0 if diff > 0.0 else 1.0
            else:
                p = 2.0 * float(student_t.sf(diff / np.sqrt(se2), df))
            out[i, j] = out[j, i] = min(1.0, p)
    return out


def adjust(pvals, method: str) -> list[float]:
    """Multiple-comparison adjustment preserving input order."""
    p = np.asarray(list(pvals), dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ConfigError("pvals must be a non-empty 1-D sequence")
    if (p < 0).any() or (p > 1).any():
        raise ConfigError("p-values must lie in [0,1]")
    m = p.size
    if method == "bonferroni":
        return np.minimum(1.0, m * p).tolist()
    if method == "benjamini_hochberg":
        order = np.argsort(p, kind="stable")
        scaled = p[order] * m / np.arange(1, m + 1)
        adjusted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
        out = np.empty(m)
        out[order] = adjusted
        return out.tolist()
    raise ConfigError(f"unknown adjustment method {method!r}")


def cliffs_delta(a, b) -> tuple[float, str]:
    """Dominance effect size of sample a over sample b with its magnitude
    label (negligible / small / medium / large)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DataError("cliffs_delta requires non-empty samples")
    a_sorted = np.sort(a)
    greater = int((a.size - np.searchsorted(a_sorted, b, side="right")).sum())
    less = int(np.searchsorted(a_sorted, b, side="left").sum())
    delta = (greater - less) / (a.size * b.size)
    return delta, _magnitude(delta)


def _magnitude(delta: float) -> str:
    mag = abs(delta)
    for cut, label in _MAGNITUDE_BANDS:
        if mag < cut:
            return label
    return "large"


def bootstrap_ci(
    a,
    b,
    replicates: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for cliffs_delta(a, b).

    Each replicate resamples a and b independently with replacement from
    its own derived substream, so the result is deterministic under `seed`
    and independent of evaluation order.
    """
    if replicates < 100:
        raise ConfigError("replicates must be >= 100")
    if not 0.0 < confidence < 1.0:
        raise ConfigError("confidence must be in (0,1)")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DataError("bootstrap_ci requires non-empty samples")
    deltas = np.empty(replicates)
    for r in range(replicates):
        rng = substream(seed, BOOTSTRAP_STREAM, r)
        ra = a[rng.integers(0, a.size, a.size)]
        rb = b[rng.integers(0, b.size, b.size)]
        deltas[r], _ = cliffs_delta(ra, rb)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(deltas, [tail, 1.0 - tail])
    return float(lo), float(hi)


def win_tie_loss(
    matrices: dict[str, RunMatrix],
    benchmark: str,
    alpha: float = 0.05,
    replicates: int = 10_000,
    confidence: float = 0.95,
    seed: int = 0,
) -> dict[str, dict[str, ComparisonVerdict]]:
    """Verdict table: every non-benchmark model vs the benchmark, per metric.

    Friedman p-values are Bonferroni-adjusted across metrics; Conover
    model-vs-benchmark p-values are Benjamini-Hochberg-adjusted within each
    metric. Values of lower-is-better metrics are negated before computing
    delta so that delta > 0 always reads "model better than benchmark".
    """
    if not matrices:
        raise ConfigError("no metric matrices given")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must be in (0,1)")
    metric_names = list(matrices)
    for name in metric_names:
        if benchmark not in matrices[name].treatment_names:
            raise ConfigError(f"benchmark {benchmark!r} missing from metric {name!r}")

    friedman_raw = [friedman(matrices[name])[1] for name in metric_names]
    friedman_adj = adjust(friedman_raw, "bonferroni")

    table: dict[str, dict[str, ComparisonVerdict]] = {}
    for name, p_fr in zip(metric_names, friedman_adj):
        m = matrices[name]
        bench_col = m.treatment_names.index(benchmark)
        others = [i for i in range(len(m.treatment_names)) if i != bench_col]
        conover = conover_posthoc(m)
        p_cn_adj = adjust([conover[i, bench_col] for i in others], "benjamini_hochberg")

        sign = 1.0 if m.higher_is_better else -1.0
        bench_vals = sign * m.values[:, bench_col]
        row: dict[str, ComparisonVerdict] = {}
        for i, p_cn in zip(others, p_cn_adj):
            model_vals = sign * m.values[:, i]
            delta, magnitude = cliffs_delta(model_vals, bench_vals)
            ci = bootstrap_ci(model_vals, bench_vals, replicates, confidence, seed)
            if p_fr < alpha and p_cn < alpha and delta > 0.0:
                outcome = "win"
            elif p_fr < alpha and p_cn < alpha and delta < 0.0:
                outcome = "loss"
            else:
                outcome = "tie"
            row[m.treatment_names[i]] = ComparisonVerdict(
                outcome=outcome,
                delta=delta,
                magnitude=magnitude,
                ci=ci,
                p_friedman_adj=p_fr,
                p_conover_adj=p_cn,
            )
        table[name] = row
    return table
