"""Adam optimiser and the deterministic training loop.

A run is strictly single-threaded and fully determined by (seed, config):
the shuffle order comes from the run's SeededRng, parameters update in the
fixed name order of the model's parameter table, and checkpoints capture
parameters, optimiser moments, epoch index and the generator state, so a
resumed run reproduces the uninterrupted trajectory bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Gradients, SeededRng, Tensor, backward
from .errors import ConfigError, NumericalError, TrainingDiverged
from .losses import LossValue, mse_loss_batch, quantile_loss_batch
from .models import (Model, array_from_hex, array_to_hex, forward_pass,
                     model_from_dict, model_to_dict)

LOSS_KINDS = ("quantile", "mse")


@dataclass
class AdamState:
    """Adaptive moment estimates keyed by parameter name."""
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "beta1": self.beta1,
            "beta2": self.beta2, "eps": self.eps, "step": self.step,
            "m": {k: {"shape": list(a.shape), "hex": array_to_hex(a)}
                  for k, a in self.m.items()},
            "v": {k: {"shape": list(a.shape), "hex": array_to_hex(a)}
                  for k, a in self.v.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        state = cls(learning_rate=d["learning_rate"], beta1=d["beta1"],
                    beta2=d["beta2"], eps=d["eps"], step=d["step"])
        state.m = {k: array_from_hex(e["hex"], e["shape"])
                   for k, e in d["m"].items()}
        state.v = {k: array_from_hex(e["hex"], e["shape"])
                   for k, e in d["v"].items()}
        return state


def adam_step(params: dict[str, Tensor], grads: Gradients,
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    scale1 = 1.0 - state.beta1 ** t
    scale2 = 1.0 - state.beta2 ** t
    for name in params:
        p = params[name]
        g = grads[p]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros(p.shape)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / scale1
        v_hat = v / scale2
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-4
    loss: str = "quantile"
    shuffle: bool = True
    clip_norm: float | None = None
    checkpoint_every: int | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")


@dataclass
class TrainResult:
    model: Model
    epoch_losses: list[float]
    adam: AdamState


def _batch_loss(model: Model, inputs: np.ndarray, targets: np.ndarray,
                kind: str) -> LossValue:
    pred = forward_pass(model, inputs)
    if kind == "quantile":
        return quantile_loss_batch(targets, pred, model.spec.quantiles)
    return mse_loss_batch(targets, pred)


def _clip_gradients(params: dict[str, Tensor], grads: Gradients,
                    max_norm: float) -> Gradients:
    total = np.sqrt(sum(float(np.sum(grads[p] ** 2))
                        for p in params.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    table = {p.node_id: grads[p] * factor for p in params.values()}
    return Gradients(table)


def train(model: Model, dataset, config: TrainConfig, rng: SeededRng,
          adam: AdamState | None = None, start_epoch: int = 0) -> TrainResult:
    """Train on the dataset's training split; returns the per-epoch mean
    loss trace. Raises TrainingDiverged (with the last finished epoch's
    parameter snapshot attached) if the loss goes non-finite."""
    if config.loss == "mse" and model.spec.levels != 1:
        raise ConfigError("mse loss requires a single-level (classic) model; "
                          f"model has {model.spec.levels} quantile levels")
    inputs = dataset.train_inputs
    targets = dataset.train_targets
    n = inputs.shape[0]
    if n == 0:
        raise ConfigError("training split is empty")

    if adam is None:
        adam = AdamState(learning_rate=config.learning_rate)
    losses: list[float] = []
    last_good = model.snapshot()

    for epoch in range(start_epoch, config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_sum = 0.0
        for lo in range(0, n, config.batch_size):
            index = order[lo:lo + config.batch_size]
            try:
                value = _batch_loss(model, inputs[index], targets[index],
                                    config.loss)
                grads = backward(value.node, params=list(model.params.values()))
                if config.clip_norm is not None:
                    grads = _clip_gradients(model.params, grads,
                                            config.clip_norm)
                adam_step(model.params, grads, adam)
            except NumericalError as exc:
                raise TrainingDiverged(
                    f"training diverged at epoch {epoch}: {exc}",
                    last_good=last_good) from exc
            epoch_sum += value.total * len(index)
        losses.append(epoch_sum / n)
        last_good = model.snapshot()
        if (config.checkpoint_every and config.checkpoint_dir
                and (epoch + 1) % config.checkpoint_every == 0):
            save_train_checkpoint(
                f"{config.checkpoint_dir}/checkpoint_epoch{epoch + 1:04d}.json",
                model, adam, epoch + 1, rng)
    return TrainResult(model=model, epoch_losses=losses, adam=adam)


def loss_eval(model: Model, dataset, loss_kind: str,
              split: str = "test") -> LossValue:
    """Loss of a frozen model over one split; touches no parameters."""
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {loss_kind!r}")
    if split == "test":
        inputs, targets = dataset.test_inputs, dataset.test_targets
    elif split == "train":
        inputs, targets = dataset.train_inputs, dataset.train_targets
    else:
        raise ConfigError(f"unknown split {split!r}")
    pred = forward_pass(model, inputs)
    if loss_kind == "quantile":
        return quantile_loss_batch(targets, pred.data, model.spec.quantiles)
    return mse_loss_batch(targets, pred.data)


def save_train_checkpoint(path, model: Model, adam: AdamState,
                          next_epoch: int, rng: SeededRng) -> None:
    payload = {
        "model": model_to_dict(model),
        "adam": adam.to_dict(),
        "next_epoch": next_epoch,
        "rng": rng.get_state(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_train_checkpoint(path) -> tuple[Model, AdamState, int, SeededRng]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    model = model_from_dict(payload["model"])
    adam = AdamState.from_dict(payload["adam"])
    rng = SeededRng.from_state(payload["rng"])
    return model, adam, payload["next_epoch"], rng
