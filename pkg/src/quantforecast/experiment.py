"""Experiment campaigns: R seeded runs, persisted reports, aggregate CSVs
and SVG error-bar charts.

Campaign layout under the output directory:

  config.json                resolved experiment configuration
  runs/run_<seed>.json       one RunReport per completed run
  failures.json              seeds that failed, with the error text
  aggregate.csv              long form: model, strategy, quantile flag,
                             metric, step-or-quantile, mean, ci_half_width
  table.csv                  wide per-horizon table (Mean, Step 1..Step m)
  per_horizon_rmse.csv       plot data: step, mean, ci_half_width
  traces/trace_<seed>.csv    first-horizon test trace: actual, per-level
                             predictions, in window order

Runs use seeds base_seed .. base_seed + runs - 1. Within a run, the seed
derives three independent streams: the shuffled 80:20 split (root), the
weight initialisation (child 1), and the batch shuffling (child 2).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .datapipe import (LorenzParams, MackeyGlassParams, RawSeries, downsample,
                       gen_lorenz, gen_mackey_glass, load_csv, make_windows,
                       normalize_and_split)
from .engine import SeededRng
from .errors import ConfigError, EmptyEval, IoError
from .evaluation import (AggregateReport, RunReport, aggregate_runs,
                         make_run_report)
from .losses import DEFAULT_QUANTILES, check_quantiles
from .models import FAMILIES, ModelSpec, build_model, forward_pass
from .training import TrainConfig, train

GENERATED_DATASETS = ("mackey-glass", "lorenz")
FILE_DATASETS = ("bitcoin", "ethereum", "sunspot", "csv")

# Table of hidden sizes per family: market datasets follow the reference
# architecture table; generated/univariate benchmarks reuse the same sizes.
DEFAULT_HIDDEN = {"lstm": (50, 50), "bdlstm": (50, 50), "edlstm": (100, 100),
                  "convlstm": (20, 20), "linear": (1, 1)}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a campaign from its base seed."""
    name: str
    dataset: str
    family: str
    quantile: bool = True
    strategy: str = "univariate"
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    window: int | None = None
    horizons: int | None = None
    hidden1: int | None = None
    hidden2: int | None = None
    epochs: int | None = None
    batch_size: int = 64
    learning_rate: float = 1e-4
    runs: int = 30
    base_seed: int = 0
    train_fraction: float = 0.8
    clip_norm: float | None = None
    csv_path: str | None = None
    data_seed: int = 0
    data_steps: int | None = None
    data_stride: int = 1
    data_limit: int | None = None
    data_offset: int = 0
    lorenz_component: str = "x"
    denormalized_metrics: bool = False
    clip_negative: bool = False
    linear_iterations: int = 5000
    linear_learning_rate: float = 0.05
    workers: int = 1
    output_dir: str = "."

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.dataset not in GENERATED_DATASETS + FILE_DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.strategy not in ("univariate", "multivariate"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "multivariate" and self.dataset not in (
                "bitcoin", "ethereum", "csv"):
            raise ConfigError(
                f"multivariate strategy needs a multi-feature dataset, "
                f"got {self.dataset!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train fraction must be in (0, 1)")
        if self.dataset in ("bitcoin", "ethereum", "sunspot", "csv") \
                and not self.csv_path:
            raise ConfigError(f"dataset {self.dataset!r} needs --csv-path")
        self.quantiles = check_quantiles(self.quantiles) if self.quantile \
            else (0.5,)
        is_market = self.dataset in ("bitcoin", "ethereum") or (
            self.dataset == "csv" and self.strategy == "multivariate")
        if self.window is None:
            self.window = 6 if is_market else 5
        if self.horizons is None:
            self.horizons = 5 if is_market else 10
        if self.hidden1 is None or self.hidden2 is None:
            h1, h2 = DEFAULT_HIDDEN[self.family]
            self.hidden1 = self.hidden1 or h1
            self.hidden2 = self.hidden2 or h2
        if self.epochs is None:
            self.epochs = 100 if is_market else 300

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "quantiles" in d:
            d["quantiles"] = tuple(d["quantiles"])
        return cls(**d)

    def scientific_hash(self) -> str:
        """Hash of the fields that define the experiment (not where its
        artifacts land or how many workers ran it)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("workers", None)
        canonical = json.dumps(d, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def build_series(config: ExperimentConfig) -> RawSeries:
    """Materialise the configured dataset (generated series are pinned by
    data_seed and shared by every run in the campaign)."""
    if config.dataset == "mackey-glass":
        params = MackeyGlassParams(steps=config.data_steps or 3000)
        series = gen_mackey_glass(params, config.data_seed)
    elif config.dataset == "lorenz":
        params = LorenzParams(steps=config.data_steps or 10000,
                              component=config.lorenz_component)
        series, _ = gen_lorenz(params, config.data_seed)
    else:
        if config.dataset in ("bitcoin", "ethereum"):
            schema = "market"
        elif config.dataset == "sunspot":
            schema = "univariate"
        else:
            schema = _sniff_schema(config.csv_path)
        series = load_csv(config.csv_path, schema=schema,
                          name=config.dataset)
    if config.data_stride > 1 or config.data_limit or config.data_offset:
        series = downsample(series, config.data_stride, config.data_limit,
                            config.data_offset)
    if config.strategy == "univariate" and series.values.shape[1] > 1:
        target = "close" if "close" in series.columns else series.columns[0]
        col = series.columns.index(target)
        series = RawSeries(name=series.name, columns=[target],
                           values=series.values[:, col].copy(),
                           index=list(series.index))
    return series


def _sniff_schema(path) -> str:
    """Pick the CSV schema for a generic file from its header row."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = {h.strip().lower() for h in fh.readline().split(",")}
    return "market" if {"high", "low", "open", "close",
                        "volume"} <= header else "univariate"


def _model_spec(config: ExperimentConfig, features: int) -> ModelSpec:
    return ModelSpec(family=config.family, features=features,
                     window=config.window, horizons=config.horizons,
                     hidden1=config.hidden1, hidden2=config.hidden2,
                     quantiles=config.quantiles)


def run_single(config: ExperimentConfig, series: RawSeries,
               seed: int) -> tuple[RunReport, np.ndarray, np.ndarray]:
    """One seeded run: split, fit, evaluate. Returns the report plus the
    test targets and predictions (for traces)."""
    start = time.perf_counter()
    windows = make_windows(series, config.window, config.horizons)
    dataset = normalize_and_split(windows, seed=seed,
                                  train_fraction=config.train_fraction)

    if config.family == "linear":
        if config.quantile:
            fitted = baselines.fit_quantile_linear(
                dataset, config.quantiles,
                iterations=config.linear_iterations,
                learning_rate=config.linear_learning_rate)
        else:
            fitted = baselines.fit_ols(dataset)
        predictions = baselines.predict(fitted, dataset.test_inputs)
    else:
        rng = SeededRng(seed)
        spec = _model_spec(config, dataset.features)
        model = build_model(spec, rng.child(1))
        train_config = TrainConfig(
            epochs=config.epochs, batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            loss="quantile" if config.quantile else "mse",
            clip_norm=config.clip_norm)
        train(model, dataset, train_config, rng.child(2))
        predictions = forward_pass(model, dataset.test_inputs).data

    targets = dataset.test_targets
    if config.clip_negative:
        predictions = np.maximum(predictions, 0.0)
    if config.denormalized_metrics:
        targets = dataset.denormalize_targets(targets)
        predictions = dataset.denormalize_targets(predictions)
    wall = time.perf_counter() - start
    report = make_run_report(seed, targets, predictions, config.quantiles,
                             wall_seconds=wall)
    return report, targets, predictions


def _run_to_files(config: ExperimentConfig, series: RawSeries, seed: int,
                  out_dir: Path) -> RunReport:
    report, targets, predictions = run_single(config, series, seed)
    _write_json(out_dir / "runs" / f"run_{seed}.json", report.to_dict())
    _write_trace(out_dir / "traces" / f"trace_{seed}.csv", config, targets,
                 predictions)
    return report


def _pool_entry(args) -> tuple[int, dict | None, str | None]:
    config_dict, seed = args
    config = ExperimentConfig.from_dict(config_dict)
    series = build_series(config)
    out_dir = Path(config.output_dir)
    try:
        report = _run_to_files(config, series, seed, out_dir)
        return seed, report.to_dict(), None
    except Exception as exc:  # recorded, campaign continues
        return seed, None, f"{type(exc).__name__}: {exc}"


def run_experiment(config: ExperimentConfig) -> AggregateReport:
    """Execute the configured campaign and persist all artifacts. Failed
    runs are recorded and skipped; the aggregate covers completed runs."""
    out_dir = Path(config.output_dir)
    for sub in ("runs", "traces"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", config.to_dict())

    seeds = list(range(config.base_seed, config.base_seed + config.runs))
    reports: list[RunReport] = []
    failures: list[dict] = []

    if config.workers > 1:
        jobs = [(config.to_dict(), s) for s in seeds]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_pool_entry, jobs))
        for seed, rep, err in results:
            if err is None:
                reports.append(RunReport.from_dict(rep))
            else:
                failures.append({"seed": seed, "error": err})
    else:
        series = build_series(config)
        for seed in seeds:
            try:
                reports.append(_run_to_files(config, series, seed, out_dir))
            except Exception as exc:
                failures.append({"seed": seed,
                                 "error": f"{type(exc).__name__}: {exc}"})

    if failures:
        _write_json(out_dir / "failures.json", failures)
    if not reports:
        raise EmptyEval(f"all {config.runs} runs failed; see failures.json")
    reports.sort(key=lambda r: r.seed)
    aggregate = aggregate_runs(reports, runs_requested=config.runs,
                               config_hash=config.scientific_hash(),
                               failures=failures)
    emit_report(aggregate, "csv", out_dir, label=_label(config))
    return aggregate


def _label(config: ExperimentConfig) -> dict:
    return {"model": config.family, "strategy": config.strategy,
            "quantile": "yes" if config.quantile else "no"}


def load_run_reports(runs_dir) -> list[RunReport]:
    """Re-read persisted per-run reports (for re-aggregation)."""
    paths = sorted(Path(runs_dir).glob("run_*.json"))
    reports = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            reports.append(RunReport.from_dict(json.load(fh)))
    reports.sort(key=lambda r: r.seed)
    return reports


# --- report emission --------------------------------------------------------

def _fmt(v: float) -> str:
    # repr gives the shortest decimal string that round-trips float64
    return repr(float(v))


def emit_report(aggregate: AggregateReport, fmt: str, out_dir,
                label: dict | None = None) -> list[Path]:
    """Write the aggregate as CSV tables or as an SVG error-bar chart."""
    out_dir = Path(out_dir)
    label = label or {"model": "", "strategy": "", "quantile": ""}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            return [_write_aggregate_csv(out_dir / "aggregate.csv", aggregate, label),
                    _write_wide_table(out_dir / "table.csv", aggregate),
                    _write_plot_data(out_dir / "per_horizon_rmse.csv", aggregate)]
        if fmt == "svg-plot-data":
            return [_write_svg(out_dir / "report.svg", aggregate)]
    except OSError as exc:
        raise IoError(f"cannot write report under {out_dir}: {exc}") from exc
    raise ConfigError(f"unknown report format {fmt!r}")


def _write_aggregate_csv(path: Path, agg: AggregateReport, label: dict) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "strategy", "quantile", "metric",
                         "step_or_quantile", "mean", "ci_half_width"])
        if agg.runs_completed == 0:
            return path  # header-only for an empty aggregate
        base = [label["model"], label["strategy"], label["quantile"]]
        writer.writerow(base + ["mean_rmse", "", _fmt(agg.mean_rmse.mean),
                                _fmt(agg.mean_rmse.half_width)])
        for j, cell in enumerate(agg.per_horizon, start=1):
            writer.writerow(base + ["horizon_rmse", f"step {j}",
                                    _fmt(cell.mean), _fmt(cell.half_width)])
        for q, cell in zip(agg.quantiles, agg.per_quantile):
            writer.writerow(base + ["quantile_rmse", _fmt(q),
                                    _fmt(cell.mean), _fmt(cell.half_width)])
    return path


def parse_aggregate_csv(path) -> dict:
    """Parse an aggregate.csv back into {metric: {key: (mean, half_width)}}."""
    out: dict = {"mean_rmse": {}, "horizon_rmse": {}, "quantile_rmse": {}}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[row["metric"]][row["step_or_quantile"]] = (
                float(row["mean"]), float(row["ci_half_width"]))
    return out


def _write_wide_table(path: Path, agg: AggregateReport) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        steps = [f"Step {j}" for j in range(1, len(agg.per_horizon) + 1)]
        writer.writerow(["Mean"] + steps)
        if agg.runs_completed == 0:
            return path
        writer.writerow(
            [f"{agg.mean_rmse.mean:.4f} +- {agg.mean_rmse.half_width:.4f}"]
            + [f"{c.mean:.4f} +- {c.half_width:.4f}" for c in agg.per_horizon])
    return path


def _write_plot_data(path: Path, agg: AggregateReport) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mean_rmse", "ci_half_width"])
        for j, cell in enumerate(agg.per_horizon, start=1):
            writer.writerow([j, _fmt(cell.mean), _fmt(cell.half_width)])
    return path


def _write_trace(path: Path, config: ExperimentConfig, targets: np.ndarray,
                 predictions: np.ndarray) -> None:
    """First-horizon test trace: actual value and every quantile level."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["index", "actual"] + [f"q{q:g}" for q in config.quantiles]
        writer.writerow(header)
        for i in range(targets.shape[0]):
            row = [i, _fmt(targets[i, 0])]
            row += [_fmt(predictions[i, 0, j])
                    for j in range(len(config.quantiles))]
            writer.writerow(row)


def _write_svg(path: Path, agg: AggregateReport) -> Path:
    """Minimal self-contained error-bar chart of per-horizon RMSE."""
    width, height, margin = 640, 400, 60
    cells = agg.per_horizon if agg.runs_completed else []
    n = max(len(cells), 1)
    top = max((c.mean + c.half_width for c in cells), default=1.0)
    top = top * 1.15 if top > 0 else 1.0

    def sx(j):
        return margin + (width - 2 * margin) * (j + 0.5) / n

    def sy(v):
        return height - margin - (height - 2 * margin) * (v / top)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
             f'y2="{height - margin}" stroke="black"/>']
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = top * frac
        parts.append(f'<text x="{margin - 8}" y="{sy(v) + 4}" font-size="11" '
                     f'text-anchor="end">{v:.4f}</text>')
        parts.append(f'<line x1="{margin - 4}" y1="{sy(v)}" x2="{margin}" '
                     f'y2="{sy(v)}" stroke="black"/>')
    points = []
    for j, cell in enumerate(cells):
        x, y = sx(j), sy(cell.mean)
        y_lo, y_hi = sy(cell.mean - cell.half_width), sy(cell.mean + cell.half_width)
        points.append(f"{x:.1f},{y:.1f}")
        parts.append(f'<line x1="{x}" y1="{y_lo}" x2="{x}" y2="{y_hi}" '
                     f'stroke="steelblue" stroke-width="2"/>')
        parts.append(f'<line x1="{x - 5}" y1="{y_lo}" x2="{x + 5}" y2="{y_lo}" '
                     f'stroke="steelblue" stroke-width="2"/>')
        parts.append(f'<line x1="{x - 5}" y1="{y_hi}" x2="{x + 5}" y2="{y_hi}" '
                     f'stroke="steelblue" stroke-width="2"/>')
        parts.append(f'<circle cx="{x}" cy="{y}" r="4" fill="steelblue"/>')
        parts.append(f'<text x="{x}" y="{height - margin + 18}" font-size="12" '
                     f'text-anchor="middle">Step {j + 1}</text>')
    parts.append(f'<polyline points="{" ".join(points)}" fill="none" '
                 f'stroke="steelblue" stroke-width="1.5"/>')
    parts.append(f'<text x="{width / 2}" y="{height - margin + 38}" '
                 f'font-size="13" text-anchor="middle">prediction horizon</text>')
    parts.append(f'<text x="{width / 2}" y="{margin - 20}" font-size="13" '
                 f'text-anchor="middle">RMSE mean with 95% confidence '
                 f'interval ({agg.runs_completed} runs)</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
    return path


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


# Honour an output-root override from the environment.
OUTPUT_ENV_VAR = "QUANTFORECAST_OUT"


def resolve_output_dir(path_like: str) -> str:
    root = os.environ.get(OUTPUT_ENV_VAR)
    if root and not os.path.isabs(path_like):
        return str(Path(root) / path_like)
    return path_like
