"""Dataset acquisition, sliding windows, normalisation and the 80:20 split.

CSV schemas (header row required, rows re-sorted ascending by date):

  market:     Date, High, Low, Open, Close, Volume  — extra columns such as
              serial numbers, names, symbols and market capitalisation are
              dropped; exactly the five price/volume features are kept.
  univariate: Date, Value

Date cells may be ISO (YYYY-MM-DD), day-first (D/M/YYYY), or a plain
integer step index (used by generated series).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .engine import SeededRng
from .errors import (ConfigError, DegenerateFeature, InsufficientData,
                     ParseError, SchemaError)

MARKET_FEATURES = ("high", "low", "open", "close", "volume")


@dataclass
class RawSeries:
    """A named multivariate series: T observations of f features."""
    name: str
    columns: list[str]
    values: np.ndarray  # (T, f) float64
    index: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.name!r} contains non-finite values")
        if len(self.columns) != self.values.shape[1]:
            raise ValueError("column names do not match value width")

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass
class MackeyGlassParams:
    a: float = 0.2
    b: float = 0.1
    delay: int = 10
    steps: int = 3000
    dt: float = 1.0
    history: float = 1.2
    jitter: float = 0.01

    def __post_init__(self):
        if self.delay < 1 or self.steps < self.delay + 2:
            raise ConfigError("need delay >= 1 and steps >= delay + 2")


@dataclass
class LorenzParams:
    rho: float = 28.0
    sigma: float = 10.0
    beta: float = 2.667
    steps: int = 10000
    dt: float = 0.01
    initial: tuple[float, float, float] = (0.0, 1.0, 1.05)
    jitter: float = 0.01
    component: str = "x"

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError("need steps >= 2")
        if self.component not in ("x", "y", "z"):
            raise ConfigError(f"unknown component {self.component!r}")


def gen_mackey_glass(params: MackeyGlassParams, seed: int) -> RawSeries:
    """Delay-differential series dx/dt = a*x(t-delay)/(1 + x(t-delay)^10)
    - b*x(t), integrated by RK4 on the delay grid (the delayed term is held
    constant over each step). The pre-history is the constant level plus a
    seeded uniform jitter, so the seed pins the whole trajectory."""
    rng = SeededRng(seed)
    delay_steps = max(1, int(round(params.delay / params.dt)))
    history = params.history + rng.uniform(-params.jitter, params.jitter,
                                           delay_steps + 1)
    xs = np.empty(params.steps)
    xs[0] = history[-1]

    a, b, dt = params.a, params.b, params.dt

    def deriv(x, x_delayed):
        return a * x_delayed / (1.0 + x_delayed ** 10) - b * x

    for t in range(params.steps - 1):
        back = t - delay_steps
        delayed = xs[back] if back >= 0 else history[back + delay_steps]
        k1 = deriv(xs[t], delayed)
        k2 = deriv(xs[t] + 0.5 * dt * k1, delayed)
        k3 = deriv(xs[t] + 0.5 * dt * k2, delayed)
        k4 = deriv(xs[t] + dt * k3, delayed)
        xs[t + 1] = xs[t] + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return RawSeries(name="mackey-glass", columns=["value"], values=xs,
                     index=[str(i) for i in range(params.steps)])


def gen_lorenz(params: LorenzParams, seed: int) -> tuple[RawSeries, RawSeries]:
    """RK4 integration of the Lorenz system at fixed dt. Returns the
    selected component as a univariate series plus the full 3-column
    series. The seed jitters the initial state."""
    rng = SeededRng(seed)
    state = np.asarray(params.initial, dtype=np.float64)
    state = state + rng.uniform(-params.jitter, params.jitter, 3)

    rho, sigma, beta, dt = params.rho, params.sigma, params.beta, params.dt

    def deriv(u):
        x, y, z = u
        return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])

    out = np.empty((params.steps, 3))
    out[0] = state
    for t in range(params.steps - 1):
        u = out[t]
        k1 = deriv(u)
        k2 = deriv(u + 0.5 * dt * k1)
        k3 = deriv(u + 0.5 * dt * k2)
        k4 = deriv(u + dt * k3)
        out[t + 1] = u + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    index = [str(i) for i in range(params.steps)]
    full = RawSeries(name="lorenz", columns=["x", "y", "z"], values=out,
                     index=index)
    col = ("x", "y", "z").index(params.component)
    uni = RawSeries(name=f"lorenz-{params.component}", columns=["value"],
                    values=out[:, col], index=index)
    return uni, full


def downsample(series: RawSeries, stride: int, limit: int | None = None,
               offset: int = 0) -> RawSeries:
    """Every stride-th observation starting at offset, optionally truncated
    to a row limit. Offsetting past the warm-up transient is conventional
    for chaotic generators."""
    values = series.values[offset::stride]
    index = series.index[offset::stride]
    if limit is not None:
        values = values[:limit]
        index = index[:limit]
    return RawSeries(name=series.name, columns=list(series.columns),
                     values=values.copy(), index=list(index))


_DATE_FORMATS = ("%Y-%m-%d", "%d/%m/%Y", "%Y-%m-%d %H:%M:%S")


def _parse_date_key(cell: str, row: int):
    cell = cell.strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(cell, fmt)
        except ValueError:
            continue
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"unparseable date {cell!r}", row) from None


def _parse_float(cell: str, column: str, row: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"unparseable value {cell!r} in column {column!r}",
                         row) from None


def load_csv(path, schema: str = "market", name: str | None = None) -> RawSeries:
    """Read a series from CSV per the schemas documented above."""
    if schema == "market":
        wanted = ["date"] + list(MARKET_FEATURES)
    elif schema == "univariate":
        wanted = ["date", "value"]
    else:
        raise ConfigError(f"unknown csv schema {schema!r}")

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        lookup = {h.strip().lower(): i for i, h in enumerate(header)}
        missing = [c for c in wanted if c not in lookup]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            key = _parse_date_key(row[lookup["date"]], line_no)
            values = [_parse_float(row[lookup[c]], c, line_no)
                      for c in wanted[1:]]
            rows.append((key, row[lookup["date"]].strip(), values, line_no))

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    # Integer and date keys cannot be ordered against each other.
    first_is_int = isinstance(rows[0][0], int)
    for key, _, _, line_no in rows[1:]:
        if isinstance(key, int) != first_is_int:
            raise ParseError("date format differs from first row", line_no)
    rows.sort(key=lambda r: r[0])
    values = np.array([r[2] for r in rows], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = rows[int(np.argwhere(~np.isfinite(values))[0][0])][3]
        raise ParseError("non-finite value", bad)
    return RawSeries(name=name or str(path), columns=list(wanted[1:]),
                     values=values, index=[r[1] for r in rows])


@dataclass
class WindowedDataset:
    """Aligned (input window, target vector) pairs plus pipeline state.

    inputs[i] covers series rows i .. i+d-1 over all features; targets[i]
    covers rows i+d .. i+d+m-1 of the target column. Normalisation is
    per-feature min-max fitted, by default, on the whole raw series; the
    split is a seeded shuffle of window indices, train share 0.8.
    """
    name: str
    inputs: np.ndarray   # (N, d, f)
    targets: np.ndarray  # (N, m)
    window: int
    horizons: int
    feature_names: list[str]
    target_index: int
    series_min: np.ndarray
    series_max: np.ndarray
    normalized: bool = False
    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    split_seed: int | None = None

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def features(self) -> int:
        return self.inputs.shape[2]

    def _require_split(self):
        if self.train_idx is None:
            raise ConfigError("dataset not finalized; run normalize_and_split")

    @property
    def train_inputs(self) -> np.ndarray:
        self._require_split()
        return self.inputs[self.train_idx]

    @property
    def train_targets(self) -> np.ndarray:
        self._require_split()
        return self.targets[self.train_idx]

    @property
    def test_inputs(self) -> np.ndarray:
        self._require_split()
        return self.inputs[self.test_idx]

    @property
    def test_targets(self) -> np.ndarray:
        self._require_split()
        return self.targets[self.test_idx]

    def denormalize_targets(self, arr: np.ndarray) -> np.ndarray:
        """Inverse of the target-column min-max map."""
        if not self.normalized:
            return np.asarray(arr, dtype=np.float64)
        lo = self.feature_min[self.target_index]
        hi = self.feature_max[self.target_index]
        return np.asarray(arr, dtype=np.float64) * (hi - lo) + lo


def make_windows(series: RawSeries, window: int, horizons: int,
                 target_column: str | None = None) -> WindowedDataset:
    """Slide a (window, horizons) frame over the series: N = T - d - m + 1
    aligned pairs. Inputs keep all features; targets take one column
    (default "close" when present, otherwise the only column)."""
    d, m = int(window), int(horizons)
    if d < 2 or m < 1:
        raise ConfigError(f"need window >= 2 and horizons >= 1, got d={d} m={m}")
    t_len = series.length
    if t_len <= d + m:
        raise InsufficientData(
            f"series length {t_len} too short for window {d} + horizons {m}")
    if target_column is None:
        target_column = "close" if "close" in series.columns else series.columns[0]
    if target_column not in series.columns:
        raise ConfigError(f"target column {target_column!r} not in "
                          f"{series.columns}")
    target_index = series.columns.index(target_column)

    n = t_len - d - m + 1
    inputs = np.empty((n, d, series.values.shape[1]))
    targets = np.empty((n, m))
    target_col = series.values[:, target_index]
    for i in range(n):
        inputs[i] = series.values[i:i + d]
        targets[i] = target_col[i + d:i + d + m]
    return WindowedDataset(
        name=series.name, inputs=inputs, targets=targets, window=d,
        horizons=m, feature_names=list(series.columns),
        target_index=target_index,
        series_min=series.values.min(axis=0),
        series_max=series.values.max(axis=0))


def normalize_and_split(dataset: WindowedDataset, seed: int,
                        train_fraction: float = 0.8,
                        fit_on_train_only: bool = False) -> WindowedDataset:
    """Min-max scale every feature to [0, 1], then split window indices by
    a seeded shuffle, train share round(train_fraction * N).

    Scaling is fitted on the whole series by default (pipeline order:
    normalise, then split); fit_on_train_only restricts the fit to the
    training windows for leakage-sensitive studies. Finalized arrays are
    read-only.
    """
    if dataset.normalized:
        raise ConfigError("dataset already normalized")
    n = dataset.count
    rng = SeededRng(seed)
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])

    if fit_on_train_only:
        flat = dataset.inputs[train_idx].reshape(-1, dataset.features)
        lo = flat.min(axis=0)
        hi = flat.max(axis=0)
    else:
        lo = dataset.series_min.copy()
        hi = dataset.series_max.copy()
    span = hi - lo
    for j, name in enumerate(dataset.feature_names):
        if span[j] == 0.0:
            raise DegenerateFeature(f"feature {name!r} has zero range")

    inputs = (dataset.inputs - lo) / span
    t_lo = lo[dataset.target_index]
    t_span = span[dataset.target_index]
    targets = (dataset.targets - t_lo) / t_span
    for arr in (inputs, targets, train_idx, test_idx):
        arr.flags.writeable = False
    return WindowedDataset(
        name=dataset.name, inputs=inputs, targets=targets,
        window=dataset.window, horizons=dataset.horizons,
        feature_names=list(dataset.feature_names),
        target_index=dataset.target_index,
        series_min=dataset.series_min, series_max=dataset.series_max,
        normalized=True, feature_min=lo, feature_max=hi,
        train_idx=train_idx, test_idx=test_idx, split_seed=int(seed))


def write_series_csv(path, series: RawSeries) -> None:
    """Write a series in the univariate or market CSV schema."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if series.values.shape[1] == 1:
            writer.writerow(["Date", "Value"])
        else:
            writer.writerow(["Date"] + [c.capitalize() for c in series.columns])
        index = series.index or [str(i) for i in range(series.length)]
        for i in range(series.length):
            writer.writerow([index[i]]
                            + [repr(float(v)) for v in series.values[i]])
