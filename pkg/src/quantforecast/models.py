"""Sequence model architectures and their parameter inventories.

Families and wiring (window d, features f, horizons m, levels K = |Q|):

  lstm      stacked LSTM(h1) -> LSTM(h2) over the window; final state ->
            dense head (h2, m*K).
  bdlstm    forward LSTM(h1) and backward LSTM(h1) over the window; the
            per-step states are concatenated (width 2*h1, backward states
            re-aligned to input time) -> LSTM(h2) -> dense head.
  edlstm    encoder LSTM(h1) summarises the window; its final state is
            repeated m times and decoded by LSTM(h2); a shared per-step
            head (h2, K) emits each horizon (time-distributed head).
  convlstm  valid conv, kernel 2 over time (1-D for f=1, 2-D spanning all
            f features otherwise), 64 filters + bias + relu -> sequence of
            length d-1 -> LSTM(h1) -> dense head.
  linear    single affine map from the flattened window (d*f, m*K).

Parameter shape table (per LSTM stage with input width n, hidden width h;
gate blocks ordered [input, forget, cell, output] along the fused axis):

  <stage>.w_x  (n, 4h)   glorot uniform
  <stage>.w_h  (h, 4h)   glorot uniform
  <stage>.b    (4h,)     zeros
  conv.w       (2, 1, 64) univariate / (2, f, 1, 64) multivariate, glorot
  conv.b       (64,)     zeros
  head.w       (width, m*K) or (h2, K) for edlstm, glorot
  head.b       matching head.w columns, zeros

The head is linear (no output activation). Predictions are produced as
(batch, m, K); the flat grouped view is the horizon-major C-order reshape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import (SeededRng, Tensor, add, concat, conv1d, conv2d, matmul,
                     relu, reshape, reverse_time, sigmoid, slice_axis, tanh,
                     tensor_new)
from .engine import hadamard
from .errors import ConfigError, NumericalError, ShapeError
from .losses import check_quantiles

FAMILIES = ("lstm", "bdlstm", "edlstm", "convlstm", "linear")
OUTPUT_LAYOUTS = ("vector", "grouped")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description."""
    family: str
    features: int
    window: int
    horizons: int
    hidden1: int
    hidden2: int
    quantiles: tuple[float, ...] = (0.5,)
    conv_filters: int = 64
    conv_kernel: int = 2
    output_layout: str = "vector"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.features < 1 or self.window < 2 or self.horizons < 1:
            raise ConfigError(
                f"need features >= 1, window >= 2, horizons >= 1; got "
                f"f={self.features}, d={self.window}, m={self.horizons}")
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise ConfigError("hidden sizes must be >= 1")
        if self.output_layout not in OUTPUT_LAYOUTS:
            raise ConfigError(f"unknown output layout {self.output_layout!r}")
        if self.family == "convlstm" and self.conv_kernel > self.window:
            raise ConfigError("conv kernel longer than the window")
        object.__setattr__(self, "quantiles", check_quantiles(self.quantiles))

    @property
    def levels(self) -> int:
        return len(self.quantiles)

    def to_dict(self) -> dict:
        return {
            "family": self.family, "features": self.features,
            "window": self.window, "horizons": self.horizons,
            "hidden1": self.hidden1, "hidden2": self.hidden2,
            "quantiles": list(self.quantiles),
            "conv_filters": self.conv_filters, "conv_kernel": self.conv_kernel,
            "output_layout": self.output_layout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["quantiles"] = tuple(d["quantiles"])
        return cls(**d)


class Model:
    """A ModelSpec instantiated as named parameter tensors."""

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params

    def forward(self, windows, trace: dict | None = None) -> Tensor:
        return _forward(self, windows, trace)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            p.data[...] = snapshot[name]


def _lstm_params(rng: SeededRng, prefix: str, n_in: int, hidden: int,
                 params: dict[str, Tensor]) -> None:
    params[f"{prefix}.w_x"] = tensor_new(
        [n_in, 4 * hidden], "glorot", rng=rng, requires_grad=True,
        name=f"{prefix}.w_x")
    params[f"{prefix}.w_h"] = tensor_new(
        [hidden, 4 * hidden], "glorot", rng=rng, requires_grad=True,
        name=f"{prefix}.w_h")
    params[f"{prefix}.b"] = tensor_new(
        [4 * hidden], "zeros", requires_grad=True, name=f"{prefix}.b")


def _head_params(rng: SeededRng, n_in: int, n_out: int,
                 params: dict[str, Tensor]) -> None:
    params["head.w"] = tensor_new([n_in, n_out], "glorot", rng=rng,
                                  requires_grad=True, name="head.w")
    params["head.b"] = tensor_new([n_out], "zeros", requires_grad=True,
                                  name="head.b")


def build_model(spec: ModelSpec, rng: SeededRng) -> Model:
    """Instantiate the parameter set for a spec; draws are consumed in the
    fixed order of the shape table, so one seed pins every weight."""
    f, d, m, k = spec.features, spec.window, spec.horizons, spec.levels
    h1, h2 = spec.hidden1, spec.hidden2
    params: dict[str, Tensor] = {}

    if spec.family == "lstm":
        _lstm_params(rng, "lstm1", f, h1, params)
        _lstm_params(rng, "lstm2", h1, h2, params)
        _head_params(rng, h2, m * k, params)
    elif spec.family == "bdlstm":
        _lstm_params(rng, "fwd", f, h1, params)
        _lstm_params(rng, "bwd", f, h1, params)
        _lstm_params(rng, "lstm2", 2 * h1, h2, params)
        _head_params(rng, h2, m * k, params)
    elif spec.family == "edlstm":
        _lstm_params(rng, "enc", f, h1, params)
        _lstm_params(rng, "dec", h1, h2, params)
        _head_params(rng, h2, k, params)
    elif spec.family == "convlstm":
        if f == 1:
            kernel_shape = [spec.conv_kernel, 1, spec.conv_filters]
        else:
            kernel_shape = [spec.conv_kernel, f, 1, spec.conv_filters]
        params["conv.w"] = tensor_new(kernel_shape, "glorot", rng=rng,
                                      requires_grad=True, name="conv.w")
        params["conv.b"] = tensor_new([spec.conv_filters], "zeros",
                                      requires_grad=True, name="conv.b")
        _lstm_params(rng, "lstm1", spec.conv_filters, h1, params)
        _head_params(rng, h1, m * k, params)
    elif spec.family == "linear":
        _head_params(rng, d * f, m * k, params)
    else:  # pragma: no cover - guarded by ModelSpec
        raise ConfigError(f"unknown model family {spec.family!r}")
    return Model(spec, params)


def lstm_cell_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor,
                   params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """One LSTM cell update.

    params holds w_x (n, 4h), w_h (h, 4h) and b (4h,) with gate blocks
    [input, forget, cell, output]. Returns (h_t, c_t) where
    c_t = forget * c_prev + input * tanh-candidate and
    h_t = output * tanh(c_t).
    """
    w_x, w_h, b = params["w_x"], params["w_h"], params["b"]
    hidden = w_h.shape[0]
    if x_t.ndim != 2 or x_t.shape[1] != w_x.shape[0]:
        raise ShapeError("lstm-cell", x_t.shape, w_x.shape)
    if h_prev.shape != (x_t.shape[0], hidden) or c_prev.shape != h_prev.shape:
        raise ShapeError("lstm-cell", h_prev.shape, c_prev.shape)

    z = add(add(matmul(x_t, w_x), matmul(h_prev, w_h)), b)
    i = sigmoid(slice_axis(z, 1, 0, hidden))
    fg = sigmoid(slice_axis(z, 1, hidden, 2 * hidden))
    g = tanh(slice_axis(z, 1, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(z, 1, 3 * hidden, 4 * hidden))
    c_t = add(hadamard(fg, c_prev), hadamard(i, g))
    h_t = hadamard(o, tanh(c_t))
    return h_t, c_t


def _stage_params(params: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    return {"w_x": params[f"{prefix}.w_x"], "w_h": params[f"{prefix}.w_h"],
            "b": params[f"{prefix}.b"]}


def _split_steps(x: Tensor) -> list[Tensor]:
    """(batch, time, features) -> list of (batch, features) step tensors."""
    batch, steps, feats = x.shape
    return [reshape(slice_axis(x, 1, t, t + 1), (batch, feats))
            for t in range(steps)]


def _run_lstm(steps: list[Tensor], params: dict[str, Tensor], hidden: int,
              batch: int) -> list[Tensor]:
    h = tensor_new([batch, hidden], "zeros")
    c = tensor_new([batch, hidden], "zeros")
    outputs = []
    for x_t in steps:
        h, c = lstm_cell_step(x_t, h, c, params)
        outputs.append(h)
    return outputs


def _stack_steps(states: list[Tensor]) -> Tensor:
    """List of (batch, width) -> (batch, time, width)."""
    batch, width = states[0].shape
    return concat([reshape(s, (batch, 1, width)) for s in states], axis=1)


def _dense(x: Tensor, params: dict[str, Tensor]) -> Tensor:
    return add(matmul(x, params["head.w"]), params["head.b"])


def bidirectional_sequence(model: Model, x: Tensor) -> Tensor:
    """The concatenated forward/backward state sequence of a bdlstm,
    (batch, window, 2*h1), before the second recurrent stage."""
    if model.spec.family != "bdlstm":
        raise ConfigError("bidirectional sequence only defined for bdlstm")
    batch, d = x.shape[0], model.spec.window
    fwd = _run_lstm(_split_steps(x), _stage_params(model.params, "fwd"),
                    model.spec.hidden1, batch)
    bwd = _run_lstm(_split_steps(reverse_time(x)),
                    _stage_params(model.params, "bwd"),
                    model.spec.hidden1, batch)
    merged = [concat([fwd[t], bwd[d - 1 - t]], axis=1) for t in range(d)]
    return _stack_steps(merged)


def _forward(model: Model, windows, trace: dict | None = None) -> Tensor:
    spec = model.spec
    x = windows if isinstance(windows, Tensor) else Tensor(windows)
    if x.ndim != 3 or x.shape[1] != spec.window or x.shape[2] != spec.features:
        raise ShapeError("forward-pass", x.shape,
                         ("batch", spec.window, spec.features))
    batch = x.shape[0]
    m, k = spec.horizons, spec.levels
    params = model.params
    stage = "input"
    try:
        if spec.family == "lstm":
            stage = "lstm1"
            seq = _run_lstm(_split_steps(x), _stage_params(params, "lstm1"),
                            spec.hidden1, batch)
            stage = "lstm2"
            seq2 = _run_lstm(seq, _stage_params(params, "lstm2"),
                             spec.hidden2, batch)
            stage = "head"
            out = _dense(seq2[-1], params)
        elif spec.family == "bdlstm":
            stage = "bidirectional"
            merged = bidirectional_sequence(model, x)
            stage = "lstm2"
            seq2 = _run_lstm(_split_steps(merged),
                             _stage_params(params, "lstm2"),
                             spec.hidden2, batch)
            stage = "head"
            out = _dense(seq2[-1], params)
        elif spec.family == "edlstm":
            stage = "encoder"
            enc = _run_lstm(_split_steps(x), _stage_params(params, "enc"),
                            spec.hidden1, batch)
            context = enc[-1]
            stage = "decoder"
            dec = _run_lstm([context] * m, _stage_params(params, "dec"),
                            spec.hidden2, batch)
            stage = "head"
            steps = [reshape(_dense(h, params), (batch, 1, k)) for h in dec]
            pred = concat(steps, axis=1)
            if trace is not None:
                trace["decoder_steps"] = len(dec)
            return pred
        elif spec.family == "convlstm":
            stage = "conv"
            if spec.features == 1:
                conv = conv1d(x, params["conv.w"])
            else:
                grid = reshape(x, (batch, spec.window, spec.features, 1))
                conv = conv2d(grid, params["conv.w"])
                conv = reshape(conv, (batch, spec.window - spec.conv_kernel + 1,
                                      spec.conv_filters))
            conv = relu(add(conv, params["conv.b"]))
            if trace is not None:
                trace["conv_length"] = conv.shape[1]
            stage = "lstm1"
            seq = _run_lstm(_split_steps(conv), _stage_params(params, "lstm1"),
                            spec.hidden1, batch)
            stage = "head"
            out = _dense(seq[-1], params)
        elif spec.family == "linear":
            stage = "head"
            out = _dense(reshape(x, (batch, spec.window * spec.features)),
                         params)
        else:  # pragma: no cover
            raise ConfigError(f"unknown model family {spec.family!r}")
    except NumericalError as exc:
        raise NumericalError(f"{spec.family} {stage}: {exc}") from exc
    return reshape(out, (batch, m, k))


def forward_pass(model: Model, window_batch) -> Tensor:
    """Predictions of shape (batch, horizons, levels) for a window batch of
    shape (batch, window, features). Non-finite intermediates raise
    NumericalError naming the layer that produced them."""
    return _forward(model, window_batch)


def forward_flat(model: Model, window_batch) -> Tensor:
    """Grouped (horizon-major) flat view: (batch, horizons * levels)."""
    pred = _forward(model, window_batch)
    batch = pred.shape[0]
    return reshape(pred, (batch, model.spec.horizons * model.spec.levels))


# --- checkpoint container -------------------------------------------------
#
# Self-describing JSON: spec fields plus named parameter tensors whose
# values are stored as space-joined C float.hex() strings, so round-trips
# are bit-exact and portable.

CHECKPOINT_FORMAT = "quantforecast-model-v1"


def array_to_hex(arr: np.ndarray) -> str:
    return " ".join(v.hex() for v in map(float, arr.ravel()))


def array_from_hex(text: str, shape) -> np.ndarray:
    values = [float.fromhex(tok) for tok in text.split()]
    return np.array(values, dtype=np.float64).reshape(tuple(shape))


def model_to_dict(model: Model) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "spec": model.spec.to_dict(),
        "params": {
            name: {"shape": list(p.shape), "hex": array_to_hex(p.data)}
            for name, p in model.params.items()
        },
    }


def model_from_dict(payload: dict) -> Model:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unrecognised checkpoint format "
                          f"{payload.get('format')!r}")
    spec = ModelSpec.from_dict(payload["spec"])
    model = build_model(spec, SeededRng(0))
    for name, entry in payload["params"].items():
        if name not in model.params:
            raise ConfigError(f"checkpoint parameter {name!r} not in spec")
        model.params[name].data[...] = array_from_hex(entry["hex"],
                                                      entry["shape"])
    return model


def save_model(path, model: Model) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
