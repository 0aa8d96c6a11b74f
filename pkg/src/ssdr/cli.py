"""Command-line surface: simulate, cv, select-dim, report.

Runs are reproducible from their own output: every emitted JSON report
embeds the tool version, the fully resolved configuration, and the master
seed. Exit codes: 0 success, 2 success with recorded estimator failures,
1 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from pathlib import Path

from . import __version__
from .datamodel import load_csv
from .errors import SchemaVersionError, SsdrError
from .estimators import PrecisionEstimatorSpec
from .experiments import (
    PipelineSpec,
    repeated_kfold_cv,
    run_mc_study,
    select_dimension,
    simulation_config,
)
from .qda import REPORT_SCHEMA_VERSION, CerReport

CONFIG_SCHEMA_VERSION = 1

ESTIMATOR_ALIASES = {
    "sample": "sample_inverse",
    "sample_inverse": "sample_inverse",
    "haff": "haff",
    "wang": "wang",
    "bodnar": "bodnar",
    "mry": "mry",
}


class UsageError(SsdrError):
    """Bad flags or configuration file contents."""


def resolve_threads(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("SSDR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SSDR_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _estimator_spec_from_dict(d: dict, where: str) -> PrecisionEstimatorSpec:
    kind = d.get("estimator", "sample")
    if kind not in ESTIMATOR_ALIASES:
        raise UsageError(
            f"{where}: unknown estimator {kind!r} "
            f"(choose from {sorted(set(ESTIMATOR_ALIASES))})"
        )
    kwargs = {"kind": ESTIMATOR_ALIASES[kind]}
    for key, spec_key in [
        ("lambda", "mry_lambda"),
        ("penalty", "mry_penalty"),
        ("gamma", "mry_gamma"),
        ("standardize_mean", "mry_standardize_mean"),
        ("bodnar_target", "bodnar_target"),
        ("wang_grid_size", "wang_grid_size"),
        ("spd_repair_eps", "spd_repair_eps"),
        ("admm_max_iters", "admm_max_iters"),
        ("admm_tol", "admm_tol"),
    ]:
        if key in d:
            kwargs[spec_key] = d[key]
    try:
        return PrecisionEstimatorSpec(**kwargs)
    except SsdrError as exc:
        raise UsageError(f"{where}: {exc}") from exc


def _pipeline_from_dict(d: dict, index: int, p: int) -> PipelineSpec:
    where = f"pipelines[{index}]"
    spec = _estimator_spec_from_dict(d, where)
    name = d.get("name") or f"ssdr_{spec.kind}"
    dims = d.get("dims", "all")
    if dims == "all":
        dims_t = None
    else:
        try:
            dims_t = tuple(int(r) for r in dims)
        except (TypeError, ValueError):
            raise UsageError(f"{where}.dims must be 'all' or a list of ints") from None
    kwargs = {}
    for key in ("standardize", "jitter_sigma", "tune_mry_lambda",
                "lambda_grid_size", "lambda_c_lo", "lambda_c_hi",
                "validation_fraction", "inner_folds"):
        if key in d:
            kwargs[key] = d[key]
    if "tune" in d:
        kwargs["tune_mry_lambda"] = bool(d["tune"])
    pl = PipelineSpec(name=name, estimator=spec, dims=dims_t, **kwargs)
    pl.resolved_dims(p)  # validate against this run's dimension
    return pl


def _load_json_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    version = cfg.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise UsageError(
            f"{path}: schema_version {version!r}, expected {CONFIG_SCHEMA_VERSION}"
        )
    return cfg


def _write_report_files(report: CerReport, out_dir: Path, name: str,
                        resolved_config: dict) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["tool_version"] = __version__
    payload["resolved_config"] = resolved_config
    payload["created_at"] = datetime.datetime.now(
        datetime.timezone.utc).isoformat()
    report_path = out_dir / f"{name}_report.json"
    report_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    summary_path = out_dir / f"{name}_summary.csv"
    _write_summary_csv(report, summary_path, run=name)
    return report_path, summary_path


_SUMMARY_FIELDS = ["method", "r", "n", "median", "mean", "sd", "failures"]
# identifying columns so the CSV alone names its run, seed, and tool version
_CONTEXT_FIELDS = ["run", "seed", "schema_version", "tool_version"]


def _write_summary_csv(report: CerReport, path: Path, run: str) -> None:
    context = {
        "run": run,
        "seed": report.metadata.get("master_seed", ""),
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SUMMARY_FIELDS + _CONTEXT_FIELDS)
        writer.writeheader()
        for row in report.summary_rows():
            out = {k: ("" if row[k] is None else row[k])
                   for k in _SUMMARY_FIELDS}
            writer.writerow({**out, **context})


def _exit_code(report: CerReport) -> int:
    return 2 if report.has_failures() else 0


def cmd_simulate(args) -> int:
    file_cfg = _load_json_config(args.config) if args.config else {}
    # flag > file > default
    config_id = args.config_id if args.config_id is not None \
        else file_cfg.get("config_id")
    if config_id is None:
        raise UsageError("config_id is required (flag --config-id or config file)")
    n_policy = args.n_policy if args.n_policy is not None \
        else file_cfg.get("n_policy", "2p")
    replicates = args.replicates if args.replicates is not None \
        else int(file_cfg.get("replicates", 200))
    seed = args.seed if args.seed is not None \
        else file_cfg.get("seed")
    if seed is None:
        seed = int.from_bytes(os.urandom(4), "little")
        print(f"note: no seed given; using master seed {seed}")
    pool_size = int(file_cfg.get("pool_size", 5000))
    name = args.name or file_cfg.get("name") or f"cfg{config_id}"

    try:
        cfg = simulation_config(int(config_id), n_policy,
                                replicates=int(replicates),
                                master_seed=int(seed), pool_size=pool_size)
    except SsdrError as exc:
        raise UsageError(f"config_id/n_policy: {exc}") from exc

    pipelines = [
        _pipeline_from_dict(d, i, cfg.p)
        for i, d in enumerate(file_cfg.get("pipelines", []))
    ]
    threads = resolve_threads(args.threads)
    report = run_mc_study(cfg, pipelines, threads=threads)
    report.metadata["threads"] = threads

    resolved = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": "simulate",
        "name": name,
        "config_id": cfg.config_id,
        "n_policy": cfg.n_policy,
        "n_i": cfg.n_i,
        "replicates": cfg.replicates,
        "seed": cfg.master_seed,
        "pool_size": cfg.pool_size,
        "pipelines": file_cfg.get("pipelines", []),
    }
    report_path, summary_path = _write_report_files(
        report, Path(args.out_dir), name, resolved)
    print(f"wrote {report_path}")
    print(f"wrote {summary_path}")
    return _exit_code(report)


def cmd_cv(args) -> int:
    label_col = args.label_column
    if label_col is not None:
        try:
            label_col = int(label_col)
        except ValueError:
            pass  # column name
    else:
        label_col = -1
    ds = load_csv(args.data, label_column=label_col,
                  header=not args.no_header)
    spec = _estimator_spec_from_dict(
        {
            "estimator": args.estimator,
            "lambda": args.mry_lambda,
            "penalty": args.mry_penalty,
            "gamma": args.mry_gamma,
            "standardize_mean": args.mry_standardize_mean,
        },
        "estimator flags",
    )
    dims = None if args.r == "all" else tuple(
        int(tok) for tok in args.r.split(","))
    name = args.name or Path(args.data).stem
    pipeline = PipelineSpec(
        name=f"ssdr_{spec.kind}",
        estimator=spec,
        dims=dims,
        standardize=args.standardize,
        jitter_sigma=args.jitter,
        tune_mry_lambda=not args.no_tune,
        inner_folds=args.inner_folds,
    )
    pipeline.resolved_dims(ds.p)
    seed = args.seed
    if seed is None:
        seed = int.from_bytes(os.urandom(4), "little")
        print(f"note: no seed given; using master seed {seed}")
    threads = resolve_threads(args.threads)
    report = repeated_kfold_cv(ds, pipeline, folds=args.folds,
                               repeats=args.repeats, seed=seed,
                               threads=threads)
    report.metadata["dataset"] = name
    report.metadata["threads"] = threads

    resolved = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": "cv",
        "name": name,
        "data": str(args.data),
        "label_column": args.label_column,
        "estimator": args.estimator,
        "folds": args.folds,
        "repeats": args.repeats,
        "seed": seed,
        "standardize": args.standardize,
        "jitter": args.jitter,
        "dims": args.r,
    }
    report_path, summary_path = _write_report_files(
        report, Path(args.out_dir), name, resolved)

    # Per-method table: best dimension, its median rate and SD
    table_path = Path(args.out_dir) / f"{name}_table.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "median_cer", "sd", "r_star",
                         "seed", "tool_version"])
        full = report.cell("qda_full", None).summary()
        writer.writerow([name, "qda_full", full["median"], full["sd"], "",
                         seed, __version__])
        r_star, _ = select_dimension(report, method=pipeline.name)
        best = report.cell(pipeline.name, r_star).summary()
        writer.writerow([name, pipeline.name, best["median"], best["sd"],
                         r_star, seed, __version__])
    print(f"wrote {report_path}")
    print(f"wrote {summary_path}")
    print(f"wrote {table_path}")
    return _exit_code(report)


def _load_report(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"report file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    version = payload.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: report schema_version {version!r}, "
            f"expected {REPORT_SCHEMA_VERSION}"
        )
    return payload


def cmd_select_dim(args) -> int:
    payload = _load_report(args.report)
    report = CerReport.from_dict(payload)
    methods = [m for m in report.methods() if m != "qda_full"] \
        if args.method is None else [args.method]
    if not methods:
        raise UsageError(f"{args.report}: no dimension sweeps to select from")
    for method in methods:
        r_star, median = select_dimension(report, method=method)
        print(f"{method}: r_star={r_star} median_cer={median:.6f}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        payload = _load_report(path)
        report = CerReport.from_dict(payload)
        dataset = report.metadata.get("dataset") \
            or report.metadata.get("config_id", Path(path).stem)
        for row in report.summary_rows():
            rows.append({"dataset": str(dataset),
                         "seed": report.metadata.get("master_seed", ""),
                         "source": str(path), **row})
    rows.sort(key=lambda r: (r["dataset"], r["method"],
                             -1 if r["r"] is None else r["r"]))
    fields = ["dataset"] + _SUMMARY_FIELDS + ["seed", "source"]
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k])
                             for k in fields})
    print(f"wrote {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; 2 means partial failure here
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssdr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument("--config-id", type=int, choices=[1, 2, 3, 4])
    sim.add_argument("--n-policy", choices=["p+1", "2p", "6p"])
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--name")
    sim.add_argument("--out-dir", default=".")
    sim.add_argument("--threads", type=int)
    sim.set_defaults(func=cmd_simulate)

    cv = sub.add_parser("cv", help="repeated stratified k-fold CV on a CSV dataset")
    cv.add_argument("--data", required=True)
    cv.add_argument("--label-column", help="name or index (default: last column)")
    cv.add_argument("--no-header", action="store_true")
    cv.add_argument("--estimator", default="sample",
                    choices=sorted(set(ESTIMATOR_ALIASES)))
    cv.add_argument("--r", default="all",
                    help="'all' or comma-separated dimensions")
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--repeats", type=int, default=50)
    cv.add_argument("--seed", type=int)
    cv.add_argument("--standardize", action="store_true")
    cv.add_argument("--jitter", type=float, default=None,
                    help="sigma of N(0, sigma^2) noise applied once before CV")
    cv.add_argument("--mry-lambda", type=float, default=0.1)
    cv.add_argument("--mry-penalty", default="simple", choices=["simple", "qda"])
    cv.add_argument("--mry-gamma", type=float, default=1.0)
    cv.add_argument("--mry-standardize-mean", action="store_true")
    cv.add_argument("--no-tune", action="store_true",
                    help="skip lambda tuning, use --mry-lambda as given")
    cv.add_argument("--inner-folds", type=int, default=5)
    cv.add_argument("--name")
    cv.add_argument("--out-dir", default=".")
    cv.add_argument("--threads", type=int)
    cv.set_defaults(func=cmd_cv)

    sel = sub.add_parser("select-dim", help="print the best dimension per method")
    sel.add_argument("--report", required=True)
    sel.add_argument("--method")
    sel.set_defaults(func=cmd_select_dim)

    rep = sub.add_parser("report", help="merge report JSONs into one CSV")
    rep.add_argument("reports", nargs="+")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SsdrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
