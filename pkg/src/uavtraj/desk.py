"""Desk-scale experiment recipe: a small generated corpus and one training run.

Shared by the acceptance suite and ``scripts/``; sized to finish in minutes
on a single core rather than to match full-corpus error levels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .dataset import Channel, SampledTrajectory, build_segments, split
from .model import ModelConfig, ModelParams
from .normalize import Method, NormStats, corpus_points, fit_stats, normalize_segments
from .numerics import child_seed, make_rng
from .train import TrainConfig, TrainHistory, evaluate_loss, train_loop
from .trajgen import Kind, ParamBounds, generate_trajectory, sample_params


@dataclass(frozen=True)
class DeskSetup:
    n_trajectories: int = 200
    duration: float = 8.0
    stride: int = 4
    seed: int = 1
    split_seed: int = 3
    bounds: ParamBounds = field(default_factory=ParamBounds)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=32, max_epochs=300, seed=5))
    model: ModelConfig = field(default_factory=ModelConfig)


@dataclass
class DeskRun:
    params: ModelParams
    config: ModelConfig
    stats: NormStats
    history: TrainHistory
    best_val_recomputed: float
    seconds: float


def desk_corpus(setup: DeskSetup) -> list[SampledTrajectory]:
    """Alternating circles and figure-eights drawn inside ``setup.bounds``."""
    trajs = []
    for i in range(setup.n_trajectories):
        kind = Kind.CIRCLE if i % 2 == 0 else Kind.INFINITY
        params = sample_params(make_rng(child_seed(setup.seed, "trajectory", i)), setup.bounds, kind)
        trajs.append(generate_trajectory(params, setup.duration, 0.1))
    return trajs


def desk_train(setup: DeskSetup, channel: Channel, method: Method = Method.MAXNORM,
               trajs: list[SampledTrajectory] | None = None, on_epoch=None) -> DeskRun:
    trajs = desk_corpus(setup) if trajs is None else trajs
    seg = build_segments(trajs, channel, stride=setup.stride)
    tr, va, _ = split(seg, 0.8, 0.1, setup.split_seed)
    stats = fit_stats(corpus_points(tr), method, channel)
    trn, van = normalize_segments(tr, stats), normalize_segments(va, stats)
    t0 = time.perf_counter()
    params, history = train_loop(trn, van, setup.model, setup.train, on_epoch=on_epoch)
    seconds = time.perf_counter() - t0
    cfg = ModelConfig(**{**setup.model.__dict__, "dropout_rate": setup.train.dropout})
    recomputed = evaluate_loss(params, cfg, van.inputs(), van.targets())
    return DeskRun(params, cfg, stats, history, recomputed, seconds)
