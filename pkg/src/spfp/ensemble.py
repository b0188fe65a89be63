"""Per-view probabilistic models, AUC-weighted ensembling, and the metric
report used to compare them.

The builtin model is a deliberately plain multinomial logistic regression:
zero-initialized, full-batch gradient descent with a fixed step from the
curvature bound, features standardized with training statistics. It exists
to make the pipeline self-contained; externally produced probability
matrices can be imported instead.

All information quantities (log-loss, row entropies) are in bits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DataError

__all__ = [
    "ProbModel",
    "MetricReport",
    "EnsembleSpec",
    "train_builtin",
    "predict_proba",
    "normalized_weights",
    "ensemble_predict",
    "metrics",
]

_PROB_CLAMP = 1e-15


@dataclass
class ProbModel:
    kind: str  # "builtin_logistic" | "imported"
    n_classes: int
    feature_ids: list[int] = field(default_factory=list)
    weights: np.ndarray | None = None  # (1 + features, classes); row 0 is bias
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    iterations: int = 0
    final_loss: float = 0.0  # training log-loss in bits, penalty excluded
    proba: np.ndarray | None = None  # imported predictions


@dataclass
class MetricReport:
    f1_micro: float
    auc: float
    log_loss: float
    mec: float | None
    mew: float | None
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "f1_micro": self.f1_micro,
            "auc": self.auc,
            "log_loss": self.log_loss,
            "mec": self.mec,
            "mew": self.mew,
            "elapsed": self.elapsed,
        }


@dataclass
class EnsembleSpec:
    members: list[int]
    weights: list[float]

    def __post_init__(self) -> None:
        if len(self.members) != len(self.weights) or not self.members:
            raise ConfigError("members and weights must be non-empty and aligned")
        w = np.asarray(self.weights, dtype=np.float64)
        if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ConfigError("weights must be non-negative and sum to 1")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_builtin(
    X: np.ndarray,
    y: np.ndarray,
    *,
    l2: float = 1e-4,
    max_iters: int = 500,
    tol: float = 1e-6,
    feature_ids=None,
    n_classes: int | None = None,
) -> ProbModel:
    """Fit the baseline classifier on an already-column-restricted matrix.

    Deterministic: zero initialization, fixed step 1/L where L bounds the
    loss curvature (0.5 * lambda_max(X~'X~)/n plus the penalty), stop on
    gradient max-norm < tol or after max_iters updates. The bias row is not
    penalized.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError("X must be 2-D and aligned with y")
    if l2 < 0:
        raise ConfigError("l2 must be >= 0")
    n, d = X.shape
    n_cls = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if np.unique(y).shape[0] < 2:
        raise DataError("training data contains a single class")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    xb = np.hstack([np.ones((n, 1)), (X - mean) / scale])

    lip = 0.5 * float(np.linalg.eigvalsh(xb.T @ xb)[-1]) / n + l2
    lr = 1.0 / lip
    w = np.zeros((d + 1, n_cls))
    onehot = np.eye(n_cls)[y]
    penalty_mask = np.ones((d + 1, 1))
    penalty_mask[0, 0] = 0.0

    iterations = 0
    for _ in range(max_iters):
        p = _softmax(xb @ w)
        grad = xb.T @ (p - onehot) / n + l2 * (w * penalty_mask)
        if float(np.abs(grad).max()) < tol:
            break
        w -= lr * grad
        iterations += 1

    p = _softmax(xb @ w)
    p_true = np.clip(p[np.arange(n), y], _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    final_loss = float(-np.log2(p_true).mean())
    ids = list(feature_ids) if feature_ids is not None else list(range(d))
    return ProbModel(
        kind="builtin_logistic",
        n_classes=n_cls,
        feature_ids=ids,
        weights=w,
        mean=mean,
        scale=scale,
        iterations=iterations,
        final_loss=final_loss,
    )


def predict_proba(model: ProbModel, X: np.ndarray | None = None) -> np.ndarray:
    """Class probabilities for X, either already restricted to the model's
    columns or the full feature table (sliced via feature_ids).

    Imported models carry their probabilities; X is then only checked for
    row-count agreement.
    """
    if model.kind == "imported":
        if model.proba is None:
            raise DataError("imported model has no probabilities")
        if X is not None and X.shape[0] != model.proba.shape[0]:
            raise DataError("imported probabilities do not match the row count")
        return model.proba
    if X is None:
        raise DataError("builtin model needs a feature matrix")
    X = np.asarray(X, dtype=np.float64)
    d = model.mean.shape[0]
    if X.shape[1] != d:
        # a wider matrix is taken as the full feature table and sliced down
        ids = model.feature_ids
        if len(ids) == d and ids and max(ids) < X.shape[1]:
            X = X[:, ids]
        else:
            raise DataError(
                f"expected {d} feature columns, got {X.shape[1]}"
            )
    xb = np.hstack([np.ones((X.shape[0], 1)), (X - model.mean) / model.scale])
    return _softmax(xb @ model.weights)


def normalized_weights(member_aucs) -> tuple[list[int], np.ndarray]:
    """Indices of the retained members and their AUC-proportional weights.

    Members with AUC exactly 0 are dropped with a warning rather than kept
    at zero weight.
    """
    aucs = np.asarray(member_aucs, dtype=np.float64)
    if aucs.ndim != 1 or aucs.shape[0] == 0:
        raise ConfigError("member_aucs must be a non-empty 1-D sequence")
    if (aucs < 0).any():
        raise ConfigError("member AUCs must be non-negative")
    kept = [i for i, a in enumerate(aucs) if a > 0.0]
    if len(kept) < aucs.shape[0]:
        dropped = sorted(set(range(aucs.shape[0])) - set(kept))
        warnings.warn(f"excluding zero-AUC ensemble members {dropped}", stacklevel=2)
    if not kept:
        raise ConfigError("all member AUCs are zero")
    w = aucs[kept]
    return kept, w / w.sum()


def ensemble_predict(models, member_aucs, rows: np.ndarray | None = None) -> np.ndarray:
    """Normalized-AUC weighted average of the members' probability rows."""
    models = list(models)
    if not models:
        raise ConfigError("empty member list")
    if len(models) != len(member_aucs):
        raise ConfigError("one AUC per model required")
    n_cls = models[0].n_classes
    if any(m.n_classes != n_cls for m in models):
        raise DataError("ensemble members disagree on the class set")
    kept, weights = normalized_weights(member_aucs)
    out = None
    for w, i in zip(weights, kept):
        p = predict_proba(models[i], rows)
        out = w * p if out is None else out + w * p
    return out


def _row_entropy_bits(proba: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(proba > 0.0, proba * np.log2(proba), 0.0)
    return -terms.sum(axis=1)


def _ovr_auc(proba: np.ndarray, truth: np.ndarray) -> float:
    """One-vs-rest macro AUC via the midrank statistic.

    Classes absent from `truth` (or covering it entirely) have no defined
    AUC and are skipped.
    """
    n = truth.shape[0]
    per_class = []
    for c in range(proba.shape[1]):
        pos = truth == c
        n_pos = int(pos.sum())
        if n_pos == 0 or n_pos == n:
            continue
        ranks = rankdata(proba[:, c])
        auc = (float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0) / (
            n_pos * (n - n_pos)
        )
        per_class.append(auc)
    if not per_class:
        raise DataError("AUC undefined: truth contains a single class")
    return float(np.mean(per_class))


def metrics(proba: np.ndarray, truth, elapsed: float = 0.0) -> MetricReport:
    """Evaluate one probability matrix against true class codes.

    Predicted class is the argmax with ties broken toward the lowest code.
    mec/mew are None when no row is correct/wrong respectively.
    """
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.intp)
    if proba.ndim != 2 or truth.ndim != 1 or proba.shape[0] != truth.shape[0]:
        raise DataError("probability matrix and truth are misaligned")
    if truth.size == 0:
        raise DataError("empty evaluation set")
    if truth.min() < 0 or truth.max() >= proba.shape[1]:
        raise DataError("truth codes outside the probability columns")
    if not np.allclose(proba.sum(axis=1), 1.0, atol=1e-6):
        raise DataError("probability rows must sum to 1")

    pred = proba.argmax(axis=1)
    correct = pred == truth
    f1_micro = float(correct.mean())
    auc = _ovr_auc(proba, truth)
    p_true = np.clip(proba[np.arange(truth.shape[0]), truth], _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    log_loss = float(-np.log2(p_true).mean())
    ent = _row_entropy_bits(proba)
    mec = float(ent[correct].mean()) if correct.any() else None
    mew = float(ent[~correct].mean()) if (~correct).any() else None
    return MetricReport(
        f1_micro=f1_micro,
        auc=auc,
        log_loss=log_loss,
        mec=mec,
        mew=mew,
        elapsed=elapsed,
    )
