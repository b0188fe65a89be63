"""Command-line surface of the pipeline.

Four subcommands: `partition` builds views from a CSV dataset, `evaluate`
trains per-view baseline models (or ingests imported probability CSVs) and
reports metrics for views, prefix ensembles, and the all-features
benchmark, `diagnose` checks the pairwise conditional-independence
assumption, `stats` runs the rank-based comparison over run matrices.

All JSON artifacts are deterministic byte-for-byte under identical inputs
and seed: wall-clock values never enter them and land in the run_log.json
sidecar instead. Exit codes: 0 ok, 2 configuration error, 3 data error,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .dataset import Dataset, SplitSpec, discretize, load_csv, split
from .ensemble import (
    ProbModel,
    ensemble_predict,
    metrics,
    normalized_weights,
    predict_proba,
    train_builtin,
)
from .errors import ConfigError, DataError, SpfpError
from .evalstats import RunMatrix, friedman, win_tie_loss
from .partitioning import SpfpConfig, View, ViewSet, conditional_independence_report, partition
from .seeding import HOLDOUT_STREAM

__all__ = ["RunConfig", "main", "build_parser", "FORMAT_VERSION"]

FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


@dataclass
class RunConfig:
    """Everything a run needs, persisted inside every artifact.

    Written into views.json by `partition`; `evaluate` and `diagnose` read
    it back so later stages re-derive the identical train/test split.
    """

    input: str
    target: str
    out: str = "."
    n_views: int = 5
    min_features: float = 0.1
    remove_fraction: float = 0.6
    entropy_tolerance: float = 1e-9
    seed: int = 0
    bins: int = 10
    discretizer: str = "equal_frequency"
    relevance_correlation: str = "codes"
    workers: int = 0
    test_fraction: float = 0.33
    missing_policy: str = "error"
    holdout_fraction: float = 0.2
    l2: float = 1e-4
    max_iters: int = 500
    opt_tol: float = 1e-6
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"input", "target"} - set(doc)
        if missing:
            raise ConfigError(f"config missing required keys: {sorted(missing)}")
        return cls(**doc)

    def spfp_config(self) -> SpfpConfig:
        return SpfpConfig(
            n_views=self.n_views,
            min_features=self.min_features,
            remove_fraction=self.remove_fraction,
            entropy_tolerance=self.entropy_tolerance,
            seed=self.seed,
            bins=self.bins,
            discretizer=self.discretizer,
            relevance_correlation=self.relevance_correlation,
            workers=self.workers,
        )


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _update_run_log(out: Path, command: str, entry: dict) -> None:
    """Sidecar for timings and timestamps, keyed by command; deliberately
    the only artifact allowed to differ between reruns."""
    path = out / "run_log.json"
    log: dict = {}
    if path.exists():
        try:
            log = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError):
            log = {}
    log[command] = entry
    _write_json(path, log)


def _require_range(name: str, value: float, lo: float, hi: float, *, open_ends=False) -> None:
    bad = not (lo < value < hi) if open_ends else not (lo <= value <= hi)
    if bad:
        left, right = ("(", ")") if open_ends else ("[", "]")
        raise ConfigError(f"{name} must be in {left}{lo}, {hi}{right}, got {value}")


def _load_and_split(rc: RunConfig) -> tuple[Dataset, Dataset, Dataset]:
    d = load_csv(rc.input, rc.target, missing_policy=rc.missing_policy)
    train, test = split(d, SplitSpec(rc.test_fraction, rc.seed))
    return d, train, test


def _views_doc_path(args) -> Path:
    if getattr(args, "views_file", None):
        return Path(args.views_file)
    return Path(args.out) / "views.json"


def _read_views_doc(path: Path) -> tuple[dict, RunConfig]:
    if not path.exists():
        raise DataError(f"views file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DataError(f"views file is not valid JSON: {exc}") from exc
    if "config" not in doc or "views" not in doc:
        raise DataError(f"views file {path} lacks config/views")
    return doc, RunConfig.from_dict(doc["config"])


# ---------------------------------------------------------------------------
# partition


def cmd_partition(args) -> int:
    _require_range("--remove-frac", args.remove_frac, 0.0, 1.0)
    _require_range("--test-frac", args.test_frac, 0.0, 1.0, open_ends=True)
    _require_range("--tolerance", args.tolerance, 0.0, 1.0, open_ends=True)
    if args.bins < 2:
        raise ConfigError(f"--bins must be >= 2, got {args.bins}")
    if args.min_count is not None:
        if args.min_count < 1:
            raise ConfigError(f"--min-count must be >= 1, got {args.min_count}")
        min_features: float | int = int(args.min_count)
    else:
        _require_range("--min-frac", args.min_frac, 0.0, 1.0, open_ends=True)
        min_features = float(args.min_frac)

    rc = RunConfig(
        input=args.input,
        target=args.target,
        out=args.out,
        n_views=args.views,
        min_features=min_features,
        remove_fraction=args.remove_frac,
        entropy_tolerance=args.tolerance,
        seed=args.seed,
        bins=args.bins,
        discretizer=args.discretizer,
        relevance_correlation=args.relevance,
        workers=args.workers,
        test_fraction=args.test_frac,
        missing_policy=args.missing_policy,
    )
    started = time.time()
    t0 = time.perf_counter()
    d, train, test = _load_and_split(rc)
    vs = partition(train, rc.spfp_config())

    out = Path(rc.out)
    views_json = {
        "format_version": FORMAT_VERSION,
        "config": rc.to_dict(),
        "seed": rc.seed,
        "n_features": train.n_features,
        "n_train_rows": train.n_rows,
        "n_test_rows": test.n_rows,
        "feature_names": list(d.feature_names),
        "h_f": vs.h_f,
        "h_fy": vs.h_fy,
        "views": [
            {
                "features": {
                    "indices": list(v.feature_ids),
                    "names": [d.feature_names[i] for i in v.feature_ids],
                },
                "scores": list(v.scores),
                "h_s": v.h_s,
                "h_sy": v.h_sy,
                "termination": v.termination,
            }
            for v in vs.views
        ],
        "union": vs.union_ids,
        "intersection": vs.intersection_ids,
        "removed": [list(r) for r in vs.removed_log],
    }
    _write_json(out / "views.json", views_json)

    stats = {
        "format_version": FORMAT_VERSION,
        "config": rc.to_dict(),
        "view_sizes": [len(v) for v in vs.views],
        "union_size": vs.union_size,
        "intersection_size": vs.intersection_size,
        "view_ratios": vs.ratios,
        "union_ratio": vs.union_size / train.n_features,
        "overlap": [
            [len(set(a.feature_ids) & set(b.feature_ids)) for b in vs.views]
            for a in vs.views
        ],
        "terminations": [v.termination for v in vs.views],
    }
    _write_json(out / "view_stats.json", stats)
    _update_run_log(
        out,
        "partition",
        {
            "started_unix": started,
            "elapsed_seconds": time.perf_counter() - t0,
            "view_elapsed_seconds": list(vs.elapsed),
        },
    )

    print(f"partitioned {train.n_features} features into {len(vs.views)} views")
    for g, v in enumerate(vs.views, start=1):
        print(
            f"  view {g}: {len(v)} features, H(S)={v.h_s:.6f}, "
            f"H(S,Y)={v.h_sy:.6f}, {v.termination}"
        )
    print(f"union {vs.union_size}, intersection {vs.intersection_size}")
    print(f"wrote {out / 'views.json'} and {out / 'view_stats.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _model_name(index: int) -> str:
    return f"theta_{index + 1}"


def _read_proba_csv(path: Path, n_rows: int, n_classes: int) -> np.ndarray:
    """Parse one imported prediction file and validate the contract:
    header row_id,class_0..class_{C-1}; row ids 0..n-1 in order; rows are
    probability vectors."""
    expected = ["row_id"] + [f"class_{c}" for c in range(n_classes)]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != expected:
        raise DataError(f"{path.name}: header must be {','.join(expected)}")
    body = rows[1:]
    if len(body) != n_rows:
        raise DataError(f"{path.name}: expected {n_rows} rows, found {len(body)}")
    proba = np.empty((n_rows, n_classes))
    for i, row in enumerate(body):
        if len(row) != n_classes + 1:
            raise DataError(f"{path.name} row {i}: wrong field count")
        try:
            rid = int(row[0])
            values = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise DataError(f"{path.name} row {i}: unparseable value") from exc
        if rid != i:
            raise DataError(f"{path.name} row {i}: row_id {rid} out of order")
        if min(values) < 0.0 or max(values) > 1.0:
            raise DataError(f"{path.name} row {i}: probabilities outside [0,1]")
        if abs(sum(values) - 1.0) > 1e-6:
            raise DataError(
                f"{path.name} row {i}: probabilities sum to {sum(values):.9f}, not 1"
            )
        proba[i] = values
    return proba


def cmd_evaluate(args) -> int:
    views_path = _views_doc_path(args)
    doc, rc = _read_views_doc(views_path)
    rc.out = args.out
    if args.holdout_frac is not None:
        _require_range("--holdout-frac", args.holdout_frac, 0.0, 1.0, open_ends=True)
        rc.holdout_fraction = args.holdout_frac

    started = time.time()
    t0 = time.perf_counter()
    d, train, test = _load_and_split(rc)
    if list(d.feature_names) != list(doc.get("feature_names", d.feature_names)):
        raise DataError("dataset columns do not match the views file")
    view_ids = [list(v["features"]["indices"]) for v in doc["views"]]
    n_views = len(view_ids)

    reports: dict[str, object] = {}
    elapsed: dict[str, float] = {}
    member_auc: list[float] = []
    ensembles_meta: dict[str, dict] = {}

    if args.import_proba:
        proba_dir = Path(args.import_proba)
        weighting = {"source": "imported_test"}
        test_probas = []
        for g in range(n_views):
            name = _model_name(g)
            tm = time.perf_counter()
            proba = _read_proba_csv(
                proba_dir / f"{name}.csv", test.n_rows, d.n_classes
            )
            test_probas.append(proba)
            report = metrics(proba, test.target)
            elapsed[name] = time.perf_counter() - tm
            reports[name] = report
            member_auc.append(report.auc)
        models = [
            ProbModel(kind="imported", n_classes=d.n_classes, proba=p)
            for p in test_probas
        ]
        rows_for_predict = None
        all_path = proba_dir / "All.csv"
        if all_path.exists():
            tm = time.perf_counter()
            proba = _read_proba_csv(all_path, test.n_rows, d.n_classes)
            reports["All"] = metrics(proba, test.target)
            elapsed["All"] = time.perf_counter() - tm
        else:
            print("note: no All.csv in import directory, skipping benchmark", file=sys.stderr)
    else:
        weighting = {
            "source": "train_holdout",
            "holdout_fraction": rc.holdout_fraction,
        }
        inner_train, holdout = split(
            train, SplitSpec(rc.holdout_fraction, rc.seed), stream=HOLDOUT_STREAM
        )
        models = []
        for g, ids in enumerate(view_ids):
            name = _model_name(g)
            tm = time.perf_counter()
            model = train_builtin(
                inner_train.features[:, ids],
                inner_train.target,
                l2=rc.l2,
                max_iters=rc.max_iters,
                tol=rc.opt_tol,
                feature_ids=ids,
                n_classes=d.n_classes,
            )
            auc_g = metrics(predict_proba(model, holdout.features), holdout.target).auc
            proba = predict_proba(model, test.features)
            elapsed[name] = time.perf_counter() - tm
            models.append(model)
            member_auc.append(auc_g)
            reports[name] = metrics(proba, test.target)
        tm = time.perf_counter()
        all_model = train_builtin(
            inner_train.features,
            inner_train.target,
            l2=rc.l2,
            max_iters=rc.max_iters,
            tol=rc.opt_tol,
            n_classes=d.n_classes,
        )
        reports["All"] = metrics(predict_proba(all_model, test.features), test.target)
        elapsed["All"] = time.perf_counter() - tm
        rows_for_predict = test.features

    for k in range(2, n_views + 1):
        name = f"E_1:{k}"
        tm = time.perf_counter()
        proba = ensemble_predict(models[:k], member_auc[:k], rows_for_predict)
        reports[name] = metrics(proba, test.target)
        elapsed[name] = time.perf_counter() - tm
        kept, weights = normalized_weights(member_auc[:k])
        ensembles_meta[name] = {
            "members": [_model_name(i) for i in kept],
            "weights": [float(w) for w in weights],
        }

    out = Path(rc.out)
    metrics_json = {
        "format_version": FORMAT_VERSION,
        "config": rc.to_dict(),
        "weighting": weighting,
        "member_auc": {
            _model_name(g): member_auc[g] for g in range(n_views)
        },
        "ensembles": ensembles_meta,
        "models": {
            name: {
                "f1_micro": rep.f1_micro,
                "auc": rep.auc,
                "log_loss": rep.log_loss,
                "mec": rep.mec,
                "mew": rep.mew,
            }
            for name, rep in reports.items()
        },
    }
    _write_json(out / "metrics.json", metrics_json)
    _update_run_log(
        out,
        "evaluate",
        {
            "started_unix": started,
            "elapsed_seconds": time.perf_counter() - t0,
            "model_elapsed_seconds": elapsed,
        },
    )

    for name in sorted(reports):
        rep = reports[name]
        print(
            f"{name}: f1={rep.f1_micro:.4f} auc={rep.auc:.4f} "
            f"log_loss={rep.log_loss:.4f}"
        )
    print(f"wrote {out / 'metrics.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(args) -> int:
    views_path = _views_doc_path(args)
    doc, rc = _read_views_doc(views_path)
    rc.out = args.out
    started = time.time()
    t0 = time.perf_counter()
    d, train, _test = _load_and_split(rc)
    views = [
        View(
            feature_ids=list(v["features"]["indices"]),
            scores=list(v["scores"]),
            h_s=v["h_s"],
            h_sy=v["h_sy"],
            termination=v["termination"],
        )
        for v in doc["views"]
    ]
    vs = ViewSet(
        views=views,
        removed_log=[list(r) for r in doc.get("removed", [])],
        elapsed=[0.0] * len(views),
        h_f=doc["h_f"],
        h_fy=doc["h_fy"],
        n_features=train.n_features,
        config=rc.spfp_config(),
    )
    coded = discretize(train, rc.bins, rc.discretizer)
    report = conditional_independence_report(
        vs, coded, train.target, tolerance=rc.entropy_tolerance
    )
    out = Path(rc.out)
    _write_json(
        out / "independence.json",
        {"format_version": FORMAT_VERSION, "config": rc.to_dict(), **report},
    )
    _update_run_log(
        out,
        "diagnose",
        {"started_unix": started, "elapsed_seconds": time.perf_counter() - t0},
    )
    cmi = np.asarray(report["pairwise_cmi"])
    off = cmi[~np.eye(cmi.shape[0], dtype=bool)]
    print(f"max pairwise CMI given target: {off.max():.6f} bits")
    print(f"H(F)={report['h_f']:.6f} H(Y)={report['h_y']:.6f} "
          f"H(F)<=H(Y): {report['h_f_le_h_y']}")
    print(f"assumption violated: {report['assumption_violated']}")
    print(f"wrote {out / 'independence.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats


def _read_run_matrix(path: Path, lower_better: bool) -> RunMatrix:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 3:
        raise DataError(f"{path}: need a header and >= 2 run rows")
    names = [c.strip() for c in rows[0]]
    try:
        values = [[float(x) for x in row] for row in rows[1:]]
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from exc
    if any(len(r) != len(names) for r in values):
        raise DataError(f"{path}: ragged rows")
    return RunMatrix(
        values=np.asarray(values),
        treatment_names=names,
        higher_is_better=not lower_better,
    )


def cmd_stats(args) -> int:
    _require_range("--alpha", args.alpha, 0.0, 1.0, open_ends=True)
    _require_range("--confidence", args.confidence, 0.0, 1.0, open_ends=True)
    if args.bootstrap < 100:
        raise ConfigError(f"--bootstrap must be >= 100, got {args.bootstrap}")
    lower = set(args.lower_better or [])
    matrices: dict[str, RunMatrix] = {}
    for spec_item in args.matrix:
        if "=" not in spec_item:
            raise ConfigError(f"--matrix expects NAME=PATH, got {spec_item!r}")
        name, path = spec_item.split("=", 1)
        name = name.strip()
        if not name:
            raise ConfigError(f"--matrix expects NAME=PATH, got {spec_item!r}")
        if name in matrices:
            raise ConfigError(f"duplicate metric name {name!r}")
        matrices[name] = _read_run_matrix(Path(path), name in lower)
    unknown_lower = lower - set(matrices)
    if unknown_lower:
        raise ConfigError(f"--lower-better names without a matrix: {sorted(unknown_lower)}")

    started = time.time()
    t0 = time.perf_counter()
    table = win_tie_loss(
        matrices,
        benchmark=args.benchmark,
        alpha=args.alpha,
        replicates=args.bootstrap,
        confidence=args.confidence,
        seed=args.seed,
    )
    out = Path(args.out)
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "alpha": args.alpha,
            "bootstrap_replicates": args.bootstrap,
            "confidence": args.confidence,
            "seed": args.seed,
            "benchmark": args.benchmark,
            "lower_better": sorted(lower),
            "friedman_p_adjustment": "bonferroni_across_metrics",
            "conover_p_adjustment": "benjamini_hochberg_within_metric",
            "conover_form": "rank_sum_t, pooled variance, df=(n-1)(k-1)",
        },
        "metrics": {},
    }
    for name, m in matrices.items():
        statistic, p_raw = friedman(m)
        doc["metrics"][name] = {
            "friedman": {"statistic": statistic, "p": p_raw},
            "verdicts": {
                model: verdict.to_dict() for model, verdict in table[name].items()
            },
        }
    _write_json(out / "verdicts.json", doc)
    _update_run_log(
        out,
        "stats",
        {"started_unix": started, "elapsed_seconds": time.perf_counter() - t0},
    )

    for name in matrices:
        verdicts = table[name]
        wins = sum(1 for v in verdicts.values() if v.outcome == "win")
        ties = sum(1 for v in verdicts.values() if v.outcome == "tie")
        losses = sum(1 for v in verdicts.values() if v.outcome == "loss")
        print(f"{name}: W-T-L vs {args.benchmark} = {wins}-{ties}-{losses}")
    print(f"wrote {out / 'verdicts.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spfp",
        description="Information-preserving feature partitioning and "
        "multi-view ensemble evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", help="build feature views from a CSV dataset")
    p.add_argument("--input", required=True, help="dataset CSV path")
    p.add_argument("--target", required=True, help="target column name or index")
    p.add_argument("--views", type=int, default=5, help="number of views")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--min-frac", type=float, default=0.1,
                      help="minimum view size as a fraction of the feature count")
    size.add_argument("--min-count", type=int, default=None,
                      help="minimum view size as an absolute count")
    p.add_argument("--remove-frac", type=float, default=0.6,
                   help="fraction of each view removed from the master pool")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--discretizer", default="equal_frequency",
                   choices=["equal_frequency", "equal_width", "passthrough_if_integral"])
    p.add_argument("--tolerance", type=float, default=1e-9,
                   help="relative tolerance for the entropy stopping criteria")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-frac", type=float, default=0.33)
    p.add_argument("--missing-policy", default="error",
                   choices=["error", "drop", "median"])
    p.add_argument("--relevance", default="codes", choices=["codes", "max_ovr"],
                   help="target encoding for the Pearson relevance term")
    p.add_argument("--workers", type=int, default=0,
                   help="threads for candidate scoring (0 = auto)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_partition)

    e = sub.add_parser("evaluate", help="train/ingest per-view models and report metrics")
    e.add_argument("--views-file", default=None,
                   help="views.json path (default: <out>/views.json)")
    e.add_argument("--import-proba", default=None,
                   help="directory of imported prediction CSVs theta_k.csv (and All.csv)")
    e.add_argument("--holdout-frac", type=float, default=None,
                   help="training fraction held out for ensemble weights")
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("diagnose", help="pairwise conditional-independence report")
    g.add_argument("--views-file", default=None,
                   help="views.json path (default: <out>/views.json)")
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("stats", help="rank-based statistical comparison of run matrices")
    s.add_argument("--matrix", action="append", required=True, metavar="NAME=PATH",
                   help="metric run matrix CSV (runs x models, header = model names)")
    s.add_argument("--benchmark", required=True, help="benchmark model column name")
    s.add_argument("--lower-better", action="append", default=[], metavar="NAME",
                   help="metric for which lower values are better (repeatable)")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--bootstrap", type=int, default=10_000)
    s.add_argument("--confidence", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SpfpError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last-resort mapping
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
