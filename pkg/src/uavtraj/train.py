"""MSE loss, Adam, step-decay schedule and an early-stopping training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import SegmentSet
from .errors import DimensionMismatch, EmptyDataset, NonFiniteGradient, NonFiniteLoss
from .model import ModelConfig, ModelParams, init_params, model_backward, model_forward
from .numerics import child_seed, make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.001
    dropout: float = 0.5
    max_epochs: int = 1000
    patience: int = 100
    sched_step: int = 50
    sched_gamma: float = 0.1
    batch_size: int = 256
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.sched_gamma <= 1:
            raise ValueError("sched_gamma must be in (0, 1]")
        if self.patience < 1 or self.sched_step < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, sched_step, batch_size and max_epochs must be >= 1")


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place bias-corrected Adam update of ``params`` and ``state``."""
    g_arrays = grads.arrays()
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params.arrays(), g_arrays, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    params.version += 1


def lr_at(epoch: int, config: TrainConfig) -> float:
    return config.lr0 * config.sched_gamma ** (epoch // config.sched_step)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    is_best: bool


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stop_reason: str = ""

    @property
    def stop_epoch(self) -> int:
        return self.epochs[-1].epoch if self.epochs else -1

    def to_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr", "is_best"])
            for r in self.epochs:
                w.writerow([r.epoch, f"{r.train_loss:.17g}", f"{r.val_loss:.17g}", f"{r.lr:.17g}", int(r.is_best)])
            f.write(f"# stop_reason={self.stop_reason} best_epoch={self.best_epoch} stop_epoch={self.stop_epoch}\n")


def evaluate_loss(params: ModelParams, config: ModelConfig, inputs: np.ndarray, targets: np.ndarray,
                  batch_size: int = 1024) -> float:
    """Eval-mode MSE over a whole set, accumulated in fixed batch order."""
    total = 0.0
    for s in range(0, len(inputs), batch_size):
        out, _ = model_forward(inputs[s:s + batch_size], params, config, "eval")
        d = out - targets[s:s + batch_size]
        total += float(np.sum(d * d))
    return total / targets.size


def train_loop(
    train: SegmentSet,
    val: SegmentSet,
    mconfig: ModelConfig,
    tconfig: TrainConfig,
    init: ModelParams | None = None,
    val_loss_fn: Callable[[ModelParams], float] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Train on (already normalised) segment sets; returns the best-validation params.

    The dropout rate comes from ``tconfig``; ``mconfig.dropout_rate`` is ignored.

    ``val_loss_fn`` replaces the validation pass, which lets tests drive the
    early-stopping logic with scripted losses.
    """
    if len(train) == 0 or (len(val) == 0 and val_loss_fn is None):
        raise EmptyDataset("training and validation sets must be non-empty")
    if (train.in_len, train.out_len) != (mconfig.in_len, mconfig.out_len):
        raise DimensionMismatch("segment windows do not match the model configuration")
    if len(val) and (val.channel != train.channel or (val.in_len, val.out_len) != (train.in_len, train.out_len)):
        raise DimensionMismatch("train and validation sets differ in channel or window size")

    mconfig = replace(mconfig, dropout_rate=tconfig.dropout)
    X, Y = train.inputs(), train.targets()
    Xv, Yv = (val.inputs(), val.targets()) if len(val) else (None, None)
    params = init.copy() if init is not None else init_params(mconfig, child_seed(tconfig.seed, "init"))
    state = AdamState.fresh(params)
    shuffle_rng = make_rng(child_seed(tconfig.seed, "shuffle"))
    dropout_rng = make_rng(child_seed(tconfig.seed, "dropout"))
    if val_loss_fn is None:
        val_loss_fn = lambda p: evaluate_loss(p, mconfig, Xv, Yv)  # noqa: E731

    history = TrainHistory()
    best = params.copy()
    since_best = 0
    for epoch in range(tconfig.max_epochs):
        lr = lr_at(epoch, tconfig)
        order = shuffle_rng.permutation(len(X))
        loss_sum = 0.0
        for s in range(0, len(X), tconfig.batch_size):
            idx = order[s:s + tconfig.batch_size]
            out, tape = model_forward(X[idx], params, mconfig, "train", rng=dropout_rng)
            loss, d_out = mse_loss(out, Y[idx])
            if not math.isfinite(loss):
                history.stop_reason = "NonFiniteLoss"
                raise NonFiniteLoss(f"epoch {epoch}: training loss is {loss}")
            loss_sum += loss * len(idx)
            adam_step(params, model_backward(tape, d_out), state, lr,
                      tconfig.beta1, tconfig.beta2, tconfig.eps)
        train_loss = loss_sum / len(X)
        val_loss = float(val_loss_fn(params))
        if not math.isfinite(val_loss):
            history.stop_reason = "NonFiniteLoss"
            raise NonFiniteLoss(f"epoch {epoch}: validation loss is {val_loss}")
        improved = val_loss < history.best_val_loss
        if improved:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
        rec = EpochRecord(epoch, train_loss, val_loss, lr, improved)
        history.epochs.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("epoch %d train %.3e val %.3e lr %.1e", epoch, train_loss, val_loss, lr)
        if since_best >= tconfig.patience:
            history.stop_reason = "EarlyStopping"
            break
    else:
        history.stop_reason = "MaxEpochs"
    best.version = 0
    return best, history
