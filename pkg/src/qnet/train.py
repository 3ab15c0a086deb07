"""Training loop: Adam (beta1=0.9, beta2=0.98, eps=1e-7), global learning
rate = initial_lr * batch_size * num_nodes, cosine decay with floor alpha,
step-defined epochs with batches sampled with replacement.

Runs are deterministic for a fixed seed in noise-free mode: identical batch
order, parameter trajectory, and metrics stream.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Example
from .model import Model, default_loss_kind, evaluate
from .sim import NoiseSpec

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.98
ADAM_EPS = 1e-7

WORKERS_ENV_VAR = "QNET_WORKERS"


class TrainingError(RuntimeError):
    """Training cannot proceed (non-finite gradients, bad setup)."""


@dataclass
class LrSchedule:
    """Cosine-decayed learning rate over ``total_steps`` with floor ``alpha``."""

    total_steps: int
    batch_size: int
    initial_lr: float = 3e-4
    num_nodes: int = 1
    alpha: float = 1e-2

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")


def global_lr(schedule: LrSchedule) -> float:
    """initial_lr * batch_size * num_nodes."""
    return schedule.initial_lr * schedule.batch_size * schedule.num_nodes


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Learning rate at ``step``: global_lr at 0, alpha * global_lr at the end."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(
            f"step must be in [0, {schedule.total_steps}], got {step}")
    cosine = 0.5 * (1.0 + math.cos(step / schedule.total_steps * math.pi))
    return global_lr(schedule) * (cosine * (1.0 - schedule.alpha) + schedule.alpha)


@dataclass
class AdamState:
    """First/second moment estimates per parameter group plus step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float) -> AdamState:
    """One bias-corrected Adam update; mutates ``params`` in place."""
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter group "
                                f"{name!r} at step {state.t}")
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return state


@dataclass
class TrainConfig:
    """The experiment protocol: 5 epochs of 100 steps at batch size 128."""

    epochs: int = 5
    steps_per_epoch: int = 100
    batch_size: int = 128
    seed: int = 0
    noise: NoiseSpec | None = None
    trajectories: int = 8

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs, steps_per_epoch, batch_size must be >= 1")


@dataclass
class TrainRun:
    """Outcome of :func:`train`: the per-step metrics stream and the model."""

    metrics: list[dict]
    model: Model


def _num_workers() -> int:
    value = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def batch_loss_and_grads(model: Model, batch: list[Example], loss_kind: str,
                         noise: NoiseSpec | None = None,
                         trajectories: int = 8, seed: int = 0):
    """Mean loss and mean gradients over a batch.

    Examples are independent; with QNET_WORKERS > 1 they fan out over a
    thread pool and are reduced in index order, keeping results identical
    to the serial path.
    """
    workers = _num_workers()
    if workers > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda ex: model.loss_and_grads(ex, loss_kind, noise,
                                                trajectories, seed), batch))
    else:
        results = [model.loss_and_grads(ex, loss_kind, noise, trajectories,
                                        seed) for ex in batch]
    total_loss = 0.0
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    for value, g in results:
        total_loss += value
        for name in grads:
            grads[name] += g[name]
    scale = 1.0 / len(batch)
    for name in grads:
        grads[name] *= scale
    return total_loss * scale, grads


def train(model: Model, train_data: list[Example], config: TrainConfig,
          schedule: LrSchedule, eval_data: list[Example] | None = None,
          loss_kind: str | None = None) -> TrainRun:
    """Run epochs * steps_per_epoch optimizer steps.

    Batches are sampled with replacement (epochs are step-defined, not
    dataset passes).  Each step appends one metrics record; the last step of
    an epoch additionally carries eval metrics when ``eval_data`` is given.
    """
    if not train_data:
        raise TrainingError("training dataset is empty")
    kind = loss_kind or default_loss_kind(model.config)
    _validate_examples(model, train_data, kind)
    rng = np.random.default_rng(config.seed)
    adam = AdamState.init(model.params)
    metrics: list[dict] = []
    step = 0
    for epoch in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            idx = rng.integers(0, len(train_data), size=config.batch_size)
            batch = [train_data[i] for i in idx]
            lr = lr_at(schedule, min(step, schedule.total_steps))
            loss_value, grads = batch_loss_and_grads(
                model, batch, kind, config.noise, config.trajectories,
                seed=config.seed * 100003 + step)
            adam_step(adam, model.params, grads, lr)
            step += 1
            record = {"step": step, "epoch": epoch + 1, "lr": lr,
                      "loss": loss_value}
            metrics.append(record)
        if eval_data:
            metrics[-1]["eval"] = evaluate(model, eval_data, kind)
    return TrainRun(metrics, model)


def _validate_examples(model: Model, data: list[Example], kind: str) -> None:
    # Surface shape problems before step 1 rather than mid-run.
    n = model.config.n
    vocab_size = model.params["embeddings"].shape[0]
    for i, ex in enumerate(data):
        ids = np.asarray(ex.token_ids)
        if ids.shape != (n,):
            raise TrainingError(
                f"example {i}: token_ids shape {ids.shape} != ({n},)")
        if ids.min() < 0 or ids.max() >= vocab_size:
            raise TrainingError(
                f"example {i}: token id outside the embedding table "
                f"(vocab size {vocab_size})")
        if kind == "token_cce" and ex.pad_mask is None:
            raise TrainingError(f"example {i}: token task requires a pad mask")
