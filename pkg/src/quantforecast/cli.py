"""Experiment command line.

Subcommands: generate (synthetic series to CSV), train (single run),
experiment (multi-run campaign), report (re-aggregate persisted runs),
gradcheck (gradient acceptance suite). A JSON config file may supply any
experiment field; flags override file values. The QUANTFORECAST_OUT
environment variable prefixes relative output paths.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .datapipe import LorenzParams, MackeyGlassParams, gen_lorenz, \
    gen_mackey_glass, write_series_csv
from .errors import ConfigError, ForecastError
from .evaluation import aggregate_runs
from .experiment import (ExperimentConfig, emit_report, load_run_reports,
                         resolve_output_dir, run_experiment)
from .gradsuite import run_suite


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with experiment fields")
    parser.add_argument("--name")
    parser.add_argument("--dataset",
                        choices=["mackey-glass", "lorenz", "bitcoin",
                                 "ethereum", "sunspot", "csv"])
    parser.add_argument("--csv-path")
    parser.add_argument("--family",
                        choices=["lstm", "bdlstm", "edlstm", "convlstm",
                                 "linear"])
    parser.add_argument("--strategy", choices=["univariate", "multivariate"])
    quantile = parser.add_mutually_exclusive_group()
    quantile.add_argument("--quantile", dest="quantile", action="store_true",
                          default=None)
    quantile.add_argument("--no-quantile", dest="quantile",
                          action="store_false", default=None)
    parser.add_argument("--quantiles", type=float, nargs="+")
    parser.add_argument("--window", type=int)
    parser.add_argument("--horizons", type=int)
    parser.add_argument("--hidden1", type=int)
    parser.add_argument("--hidden2", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--learning-rate", type=float)
    parser.add_argument("--base-seed", type=int)
    parser.add_argument("--train-fraction", type=float)
    parser.add_argument("--clip-norm", type=float)
    parser.add_argument("--data-seed", type=int)
    parser.add_argument("--data-steps", type=int)
    parser.add_argument("--data-stride", type=int)
    parser.add_argument("--data-limit", type=int)
    parser.add_argument("--data-offset", type=int)
    parser.add_argument("--lorenz-component", choices=["x", "y", "z"])
    parser.add_argument("--denormalized-metrics", action="store_true",
                        default=None)
    parser.add_argument("--clip-negative", action="store_true", default=None)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", dest="output_dir")


_FLAG_FIELDS = (
    "name", "dataset", "csv_path", "family", "strategy", "quantile",
    "quantiles", "window", "horizons", "hidden1", "hidden2", "epochs",
    "batch_size", "learning_rate", "base_seed", "train_fraction",
    "clip_norm", "data_seed", "data_steps", "data_stride", "data_limit",
    "data_offset",
    "lorenz_component", "denormalized_metrics", "clip_negative", "workers",
    "output_dir",
)


def _experiment_config(args, runs: int | None = None) -> ExperimentConfig:
    fields: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            fields.update(json.load(fh))
    for key in _FLAG_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            fields[key] = value
    if runs is not None:
        fields["runs"] = runs
    elif getattr(args, "runs", None) is not None:
        fields["runs"] = args.runs
    if "quantiles" in fields:
        fields["quantiles"] = tuple(fields["quantiles"])
    fields.setdefault("name", fields.get("dataset", "experiment"))
    if "dataset" not in fields or "family" not in fields:
        raise ConfigError("--dataset and --family are required "
                          "(by flag or config file)")
    fields["output_dir"] = resolve_output_dir(fields.get("output_dir", "."))
    return ExperimentConfig.from_dict(fields)


def _cmd_generate(args) -> int:
    if args.generator == "mackey-glass":
        params = MackeyGlassParams(
            a=args.a, b=args.b, delay=args.delay, dt=args.dt or 1.0,
            steps=args.steps or 3000)
        series = gen_mackey_glass(params, args.seed)
    else:
        params = LorenzParams(
            rho=args.rho, sigma=args.sigma, beta=args.beta,
            dt=args.dt or 0.01, steps=args.steps or 10000,
            component=args.component)
        series, _ = gen_lorenz(params, args.seed)
    out = resolve_output_dir(args.out)
    write_series_csv(out, series)
    print(f"wrote {series.length} rows to {out}")
    return 0


def _cmd_train(args) -> int:
    config = _experiment_config(args, runs=1)
    with warnings.catch_warnings():
        # a single run is the point of this subcommand
        warnings.filterwarnings("ignore", message="aggregating a single run")
        aggregate = run_experiment(config)
    print(f"run seed {config.base_seed}: "
          f"mean RMSE {aggregate.mean_rmse.mean:.4f}")
    return 0


def _cmd_experiment(args) -> int:
    config = _experiment_config(args)
    aggregate = run_experiment(config)
    print(f"{aggregate.runs_completed}/{aggregate.runs_requested} runs "
          f"completed; mean RMSE {aggregate.mean_rmse.mean:.4f} "
          f"+- {aggregate.mean_rmse.half_width:.4f}")
    if aggregate.failures:
        print(f"{len(aggregate.failures)} run(s) failed; see failures.json")
    return 0


def _cmd_report(args) -> int:
    reports = load_run_reports(args.runs_dir)
    if not reports:
        raise ConfigError(f"no run_*.json files under {args.runs_dir}")
    aggregate = aggregate_runs(reports)
    out = resolve_output_dir(args.out)
    paths = emit_report(aggregate, args.format, out)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_gradcheck(args) -> int:
    ok = run_suite(seed=args.seed, tol=args.tol)
    print("gradient suite:", "PASS" if ok else "FAIL")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantforecast",
        description="Quantile sequence forecasting experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic series to CSV")
    p_gen.add_argument("generator", choices=["mackey-glass", "lorenz"])
    p_gen.add_argument("--steps", type=int)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--dt", type=float)
    p_gen.add_argument("--a", type=float, default=0.2,
                       help="mackey-glass production coefficient")
    p_gen.add_argument("--b", type=float, default=0.1,
                       help="mackey-glass decay coefficient")
    p_gen.add_argument("--delay", type=int, default=10)
    p_gen.add_argument("--rho", type=float, default=28.0)
    p_gen.add_argument("--sigma", type=float, default=10.0)
    p_gen.add_argument("--beta", type=float, default=2.667)
    p_gen.add_argument("--component", choices=["x", "y", "z"], default="x")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_generate)

    p_train = sub.add_parser("train", help="train and evaluate a single run")
    _add_experiment_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_exp = sub.add_parser("experiment", help="run a seeded campaign")
    _add_experiment_flags(p_exp)
    p_exp.add_argument("--runs", type=int)
    p_exp.set_defaults(func=_cmd_experiment)

    p_rep = sub.add_parser("report", help="re-aggregate persisted runs")
    p_rep.add_argument("--runs-dir", required=True)
    p_rep.add_argument("--format", choices=["csv", "svg-plot-data"],
                       default="csv")
    p_rep.add_argument("--out", default=".")
    p_rep.set_defaults(func=_cmd_report)

    p_grad = sub.add_parser("gradcheck", help="gradient acceptance suite")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    p_grad.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ForecastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
