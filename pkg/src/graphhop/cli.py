"""Command-line experiment harness.

Subcommands::

    graphhop train --config run.ini --out results/
    graphhop sweep --config run.ini --axis T=0.1,1,10,100 --out sweep/
    graphhop spectral --data fixtures/two_block --out spectral/
    graphhop analyze --config run.ini --out analysis/
    graphhop lp-baseline --config run.ini --alpha 0.99 --out lp/
    graphhop gen-synthetic sbm --param sizes=200,200 --out data/sbm
    graphhop validate-data data/sbm

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure.  Metric CSVs depend only on the config and the dataset; run
metadata (timestamps, versions) goes to ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import itertools
import json
import logging
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import algorithm, analysis, data, lp, spectral
from .config import ConfigError, ExperimentConfig
from .errors import (CapacityError, DataError, GraphHopError, NumericalError, SolverError,
                     ValidationError)

log = logging.getLogger("graphhop")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

TRACE_HEADER = ["iter", "val_acc", "test_acc", "frobenius_delta", "mean_entropy"]
LOSS_HEADER = ["epoch", "L_l", "L_u", "L_entropy", "total"]
SWEEP_HEADER = ["point", "mean_acc", "std_acc", "best_iter"]


class UsageParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this harness reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- small helpers -----------------------------------------------------------

def _num(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class ArtifactWriter:
    """Writes files under ``out`` and keeps the inventory for the manifest."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_num(v) for v in row])

    def text(self, name, body):
        self.path(name).write_text(body, encoding="utf-8")

    def manifest(self, cfg, dataset_dir, seeds, started):
        doc = {
            "version": version_string(),
            "config": cfg.canonical() if cfg is not None else None,
            "dataset": str(dataset_dir) if dataset_dir else None,
            "dataset_sha256": data.fingerprint(dataset_dir) if dataset_dir else None,
            "seeds": list(seeds),
            "started": started,
            "finished": _now(),
            "files": sorted(self.files) + ["manifest.json"],
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n",
                                                encoding="utf-8")


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def version_string():
    try:
        base = metadata.version("graphhop")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True, text=True,
                             timeout=5, check=True).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{base}+g{rev}" if rev else base


def trace_rows(rows):
    return ([r.iteration, r.val_acc, r.test_acc, r.frobenius_delta, r.mean_entropy]
            for r in rows)


def loss_rows(trace):
    return ([e.epoch, e.L_l, e.L_u, e.L_entropy, e.total] for e in trace)


def prediction_rows(H, multilabel):
    emb = H if hasattr(H, "values") else None
    values = H.values if emb is not None else np.asarray(H)
    if multilabel:
        labels = (";".join(str(k) for k in np.flatnonzero(row >= 0.5)) for row in values)
    else:
        labels = np.argmax(values, axis=1)
    for i, (lab, row) in enumerate(zip(labels, values)):
        yield [i, lab, *row.tolist()]


# -- config / dataset resolution ---------------------------------------------

def load_config(args):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "data", None):
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, path=str(
            Path(args.data).resolve())))
    if getattr(args, "variant", None):
        cfg = cfg.override("run.variant", args.variant)
    if getattr(args, "repeats", None) is not None:
        cfg = cfg.override("run.repeats", str(args.repeats))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override("run.seed", str(args.seed))
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(item, "expected key=value")
        cfg = cfg.override(key.strip(), value.strip())
    return cfg


def load_bundle(cfg):
    path = cfg.data_path()
    return data.load_dataset(path, cfg.data.name or None), path


def make_split(cfg, bundle, seed):
    if cfg.split.source == "file":
        return data.load_split(cfg.split_path(), bundle.n)
    return data.sample_split(bundle, cfg.split.spec(seed))


def repeat_seeds(cfg):
    return [cfg.run.seed + r for r in range(cfg.run.repeats)]


# -- variants ----------------------------------------------------------------

@dataclasses.dataclass
class RunOutcome:
    seed: int
    trace: list
    H: object
    best_iteration: int
    val_acc: float
    test_acc: float
    loss_trace: list
    multilabel: bool


def run_variant(cfg, bundle, seed):
    """One full run of the configured variant on one seed."""
    split = make_split(cfg, bundle, seed)
    variant = cfg.run.variant
    ml = bundle.multilabel
    if variant == "II":
        return _run_lp(cfg, bundle, split, seed)
    gcfg = cfg.graphhop_config(seed)
    if variant == "I":
        init = algorithm.initialize(bundle.graph, split, bundle.labels, gcfg, ml,
                                    bundle.num_classes)
        H = init.H.values
        row = algorithm.TraceRow(
            0, algorithm.score(H, bundle.labels, split.validation, ml),
            algorithm.score(H, bundle.labels, split.test, ml), float("nan"),
            algorithm.mean_entropy(H, split.unlabeled, ml))
        return RunOutcome(seed, [row], init.H, 0, row.val_acc, row.test_acc, init.trace, ml)
    res = algorithm.run(bundle.graph, split, bundle.labels, gcfg, ml, bundle.num_classes)
    best = res.trace.at(res.best_iteration)
    # the iteration rows; initialization is row 0 and only kept when no iteration ran
    rows = res.trace.rows[1:] or res.trace.rows
    return RunOutcome(seed, rows, res.best_H, res.best_iteration, best.val_acc,
                      best.test_acc, res.init.trace, ml)


def _run_lp(cfg, bundle, split, seed):
    if bundle.multilabel:
        raise ConfigError("run.variant", "variant II (LP) supports multi-class data only")
    labels = bundle.labels
    H0 = lp.initial_embedding(bundle.n, split.labeled, labels[split.labeled],
                              bundle.num_classes)
    rows = []

    def record(t, H, res):
        rows.append(algorithm.TraceRow(
            t, algorithm.score(H, labels, split.validation),
            algorithm.score(H, labels, split.test), res,
            algorithm.mean_entropy(_row_normalize(H), split.unlabeled)))

    result = lp.lp_iterate(bundle.graph, H0, cfg.lp.config(), callback=record)
    last = rows[-1]
    return RunOutcome(seed, rows, result.H, last.iteration, last.val_acc, last.test_acc,
                      [], False)


def _row_normalize(H):
    s = H.sum(axis=1, keepdims=True)
    out = np.full_like(H, 1.0 / H.shape[1])
    np.divide(H, s, out=out, where=s > 0)
    return out


# -- subcommands -------------------------------------------------------------

def cmd_train(args):
    started = _now()
    cfg = load_config(args)
    bundle, path = load_bundle(cfg)
    out = ArtifactWriter(args.out)
    seeds = repeat_seeds(cfg)
    summary = []
    for seed in seeds:
        o = run_variant(cfg, bundle, seed)
        out.csv(f"trace_seed{seed}.csv", TRACE_HEADER, trace_rows(o.trace))
        c = o.H.values.shape[1] if hasattr(o.H, "values") else o.H.shape[1]
        out.csv(f"predictions_seed{seed}.csv",
                ["node_id", "predicted_class", *(f"score_{k}" for k in range(c))],
                prediction_rows(o.H, o.multilabel))
        if o.loss_trace:
            out.csv(f"init_loss_seed{seed}.csv", LOSS_HEADER, loss_rows(o.loss_trace))
        summary.append([seed, o.best_iteration, o.val_acc, o.test_acc])
        print(f"seed {seed}: best iteration {o.best_iteration}, "
              f"test accuracy {o.test_acc:.4f} (val {o.val_acc:.4f})")
    out.csv("summary.csv", ["seed", "best_iter", "val_acc", "test_acc"], summary)
    out.text("config.ini", cfg.canonical())
    accs = np.array([r[3] for r in summary])
    print(f"test accuracy at best validation iteration: mean {accs.mean():.4f} "
          f"std {accs.std():.4f} over {len(accs)} seed(s)")
    out.manifest(cfg, path, seeds, started)
    return EXIT_OK


def parse_axis(spec):
    key, sep, values = spec.partition("=")
    if not sep or not values:
        raise ConfigError(spec, "axis must look like key=v1,v2,...")
    return key.strip(), [v.strip() for v in values.split(",") if v.strip()]


def _sweep_job(job):
    cfg, bundle, seed = job
    try:
        o = run_variant(cfg, bundle, seed)
        return seed, o.test_acc, o.best_iteration, [list(r) for r in trace_rows(o.trace)], None
    except GraphHopError as exc:
        return seed, float("nan"), -1, [], f"{type(exc).__name__}: {exc}"


def cmd_sweep(args):
    started = _now()
    cfg = load_config(args)
    if not args.axis:
        raise ConfigError("--axis", "at least one axis is required")
    axes = [parse_axis(a) for a in args.axis]
    bundle, path = load_bundle(cfg)
    seeds = repeat_seeds(cfg)
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        point_cfg = cfg
        for (key, _), value in zip(axes, combo):
            point_cfg = point_cfg.override(key, value)
        label = ";".join(f"{k}={v}" for (k, _), v in zip(axes, combo))
        points.append((label, point_cfg))

    jobs = [(pcfg, bundle, seed) for _, pcfg in points for seed in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    out = ArtifactWriter(args.out)
    rows, failures = [], []
    for p, (label, _) in enumerate(points):
        chunk = results[p * len(seeds):(p + 1) * len(seeds)]
        ok = [r for r in chunk if r[4] is None]
        for seed, _, _, trace, err in chunk:
            if err is None:
                out.csv(f"traces/point{p}_seed{seed}.csv", TRACE_HEADER, trace)
            else:
                failures.append([label, seed, err])
                log.warning("sweep point %s seed %d failed: %s", label, seed, err)
        accs = np.array([r[1] for r in ok])
        iters = np.array([r[2] for r in ok], dtype=np.float64)
        mean = float(accs.mean()) if len(ok) else float("nan")
        std = float(accs.std()) if len(ok) else float("nan")  # population std
        best = float(iters.mean()) if len(ok) else float("nan")
        rows.append([label, mean, std, best])
        print(f"{label}: {mean:.4f} +- {std:.4f} (best iter {best:.1f}, "
              f"{len(ok)}/{len(chunk)} runs)")
    out.csv("sweep.csv", SWEEP_HEADER, rows)
    if failures:
        out.csv("failures.csv", ["point", "seed", "error"], failures)
    out.manifest(cfg, path, seeds, started)
    return EXIT_OK


def cmd_spectral(args):
    started = _now()
    cfg = load_config(args)
    bundle, path = load_bundle(cfg)
    if bundle.multilabel:
        raise ConfigError("data", "the spectral check needs multi-class labels")
    curve = spectral.frequency_accuracy_curve(bundle.graph, bundle.labels,
                                              num_classes=bundle.num_classes,
                                              steps=args.steps)
    out = ArtifactWriter(args.out)
    out.csv("spectral.csv", ["k_fraction", "low_acc", "high_acc"],
            zip(curve.fractions, curve.low, curve.high))
    dominated = np.all(curve.low[curve.fractions <= 0.2] >= curve.high[curve.fractions <= 0.2])
    print(f"low-frequency curve dominates for k <= 20% of n: {bool(dominated)}")
    out.manifest(cfg, path, [], started)
    return EXIT_OK


def cmd_analyze(args):
    started = _now()
    cfg = load_config(args)
    bundle, path = load_bundle(cfg)
    split = make_split(cfg, bundle, cfg.run.seed)
    k = args.k or cfg.graphhop.hops
    part = analysis.hop_partition(bundle.graph, split.labeled)
    out = ArtifactWriter(args.out)
    out.csv("partition.csv", ["hop", "count"], enumerate(part.histogram()))
    hops, frac = analysis.coverage_curve(part)
    out.csv("coverage.csv", ["hop", "fraction"], zip(hops, frac))
    report = analysis.bound_report(bundle.graph, split.labeled, k, d=args.d)
    row = report.as_row()
    out.csv("bounds.csv", list(row), [list(row.values())])
    if len(part.unreachable):
        out.csv("unreachable.csv", ["node_id"], ([int(v)] for v in part.unreachable))
        print(f"warning: {len(part.unreachable)} node(s) cannot be reached from any label "
              "and are excluded from n", file=sys.stderr)
    print(f"n={report.n} d={report.d} j={report.j} k={k}: lower bound {report.bound:.3f} "
          f"(ceil {report.ceil}), BFS needs {report.observed} iteration(s)")
    out.manifest(cfg, path, [cfg.run.seed], started)
    return EXIT_OK


def cmd_lp(args):
    started = _now()
    cfg = load_config(args)
    for name in ("alpha", "tol", "max_iter"):
        value = getattr(args, name)
        if value is not None:
            cfg = cfg.override(f"lp.{name}", str(value))
    cfg = cfg.override("run.variant", "II")
    bundle, path = load_bundle(cfg)
    out = ArtifactWriter(args.out)
    seeds = repeat_seeds(cfg)
    summary = []
    for seed in seeds:
        o = run_variant(cfg, bundle, seed)
        out.csv(f"residuals_seed{seed}.csv", ["iter", "residual", "val_acc", "test_acc"],
                ([r.iteration, r.frobenius_delta, r.val_acc, r.test_acc] for r in o.trace))
        summary.append([seed, o.best_iteration, o.val_acc, o.test_acc])
        print(f"seed {seed}: {o.best_iteration} iteration(s), test accuracy {o.test_acc:.4f}")
    out.csv("accuracy.csv", ["seed", "iterations", "val_acc", "test_acc"], summary)
    out.manifest(cfg, path, seeds, started)
    return EXIT_OK


def _param_value(raw):
    if "," in raw:
        return tuple(_param_value(p) for p in raw.split(",") if p)
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            pass
    return raw


def cmd_gen_synthetic(args):
    params = {}
    for item in args.param or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected key=value")
        params[key.strip().replace("-", "_")] = _param_value(value.strip())
    kind = args.kind.replace("-", "_")
    bundle = data.generate_synthetic(kind, seed=args.seed or 0, **params)
    data.save_dataset(bundle, args.out, binary_features=args.binary)
    print(f"wrote {bundle.name}: n={bundle.n} edges={bundle.graph.num_edges} "
          f"classes={bundle.num_classes} -> {args.out}")
    return EXIT_OK


def cmd_validate_data(args):
    bundle = data.load_dataset(args.directory)
    g = bundle.graph
    print(f"{bundle.name}: n={g.n} edges={g.num_edges} features={g.attributes.shape[1]} "
          f"classes={bundle.num_classes} multilabel={bundle.multilabel} "
          f"max_degree={g.max_degree}")
    print("class counts: " + " ".join(str(int(v)) for v in bundle.class_counts()))
    split_file = Path(args.directory) / data.SPLIT
    if split_file.exists():
        split = data.load_split(split_file, g.n)
        print(f"split: {len(split.labeled)} labeled, {len(split.validation)} validation, "
              f"{len(split.test)} test")
    print(f"sha256 {data.fingerprint(args.directory)}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def _common(p, variant=True):
    p.add_argument("--config", help="experiment config (INI)")
    p.add_argument("--data", help="dataset directory; overrides data.path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="base seed; overrides run.seed")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. graphhop.tau=0.9 (repeatable)")
    if variant:
        p.add_argument("--variant", choices=("full", "I", "II"))
        p.add_argument("--repeats", type=int, help="number of seeds (run.repeats)")


def build_parser():
    parser = UsageParser(prog="graphhop", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one configuration over repeat seeds")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid over config keys")
    _common(p)
    p.add_argument("--axis", action="append", metavar="KEY=V1,V2,...",
                   help="one sweep axis; several axes form a grid")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectral", help="low- vs high-frequency label accuracy curves")
    _common(p, variant=False)
    p.add_argument("--steps", type=int, default=100, help="points on the percentage grid")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("analyze", help="hop partition, coverage curve and iteration bound")
    _common(p, variant=False)
    p.add_argument("--k", type=int, help="hops per iteration (default graphhop.hops)")
    p.add_argument("--d", type=int, help="override the maximum degree used in the bound")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("lp-baseline", help="classical label propagation")
    _common(p, variant=False)
    p.add_argument("--repeats", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    p.add_argument("kind", choices=("two-clique", "sbm", "dary-tree", "path"))
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator parameter, e.g. sizes=200,200 (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true", help="write features.bin")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("validate-data", help="load and summarize a dataset directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_validate_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SolverError, CapacityError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
