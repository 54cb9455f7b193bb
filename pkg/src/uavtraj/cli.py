"""Command-line entry point: ``uavtraj <command> --config FILE [--seed N] [--out DIR] [--set k=v ...]``.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .dataset import (
    Channel,
    SegmentSet,
    build_segments,
    load_segments,
    read_trajectory_csv,
    save_segments,
    split,
    write_trajectory_csv,
)
from .errors import DataError, NumericalError
from .metrics import MetricsReport, evaluate, report_table
from .model import ModelConfig, load_checkpoint, model_forward, save_checkpoint
from .normalize import Method, corpus_points, fit_stats, load_stats, normalize_segments, save_stats
from .numerics import child_seed, make_rng
from .stream import StreamPredictor, run_stream_sim
from .train import TrainConfig, train_loop
from .trajgen import Kind, ParamBounds, TrajectoryParams, generate_trajectory, sample_params

log = logging.getLogger("uavtraj")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers

def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir)


def _channels(cfg: ExperimentConfig) -> list[Channel]:
    if cfg.norm.channel == "both":
        return [Channel.POSITION, Channel.VELOCITY]
    return [Channel(cfg.norm.channel)]


def _single_channel(cfg: ExperimentConfig) -> Channel:
    chans = _channels(cfg)
    if len(chans) != 1:
        raise UsageError("this command needs norm.channel set to position or velocity")
    return chans[0]


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; {hint}")
    return path


def _stats_path(cfg: ExperimentConfig, channel: Channel) -> Path:
    return _out(cfg) / "stats" / f"{channel.value}_{cfg.norm.method}.json"


def _segments_dir(cfg: ExperimentConfig, channel: Channel, part: str) -> Path:
    return _out(cfg) / "segments" / channel.value / part


def _model_config(cfg: ExperimentConfig) -> ModelConfig:
    return ModelConfig(hidden_dim=cfg.model.hidden_dim, num_layers=cfg.model.num_layers,
                       dropout_rate=cfg.train.dropout, in_len=cfg.dataset.in_len, out_len=cfg.dataset.out_len)


def _write_meta(cfg: ExperimentConfig, command: str) -> None:
    meta_dir = _out(cfg) / "meta"
    meta_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": command,
        "seed": cfg.seed,
        "versions": {"uavtraj": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "config": cfg.to_ini(),
    }
    (meta_dir / f"{command}.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (meta_dir / f"{command}.time.json").write_text(json.dumps({"finished_at": time.time()}) + "\n", encoding="utf-8")


def _bounds(cfg: ExperimentConfig) -> ParamBounds:
    d = cfg.dataset
    return ParamBounds(d.center_lo, d.center_hi, d.normal_lo, d.normal_hi,
                       d.radius_lo, d.radius_hi, d.omega_lo, d.omega_hi)


def _load_trajectories(cfg: ExperimentConfig):
    traj_dir = _require(_out(cfg) / "trajectories", "run `uavtraj generate` first")
    manifest = json.loads(_require(traj_dir / "manifest.json", "run `uavtraj generate` first").read_text())
    trajs, ids = [], []
    for entry in manifest["trajectories"]:
        trajs.append(read_trajectory_csv(traj_dir / entry["file"]))
        ids.append(entry["id"])
    if cfg.dataset.external_dir:
        ext_dir = _require(Path(cfg.dataset.external_dir), "point dataset.external_dir at a folder of t,x,y,z CSVs")
        ext = sorted(ext_dir.glob("*.csv"))
        for k, path in enumerate(ext):
            trajs.append(read_trajectory_csv(path))
            ids.append(len(manifest["trajectories"]) + k)
    return trajs, ids


# ------------------------------------------------------------------ commands

def cmd_generate(cfg: ExperimentConfig) -> None:
    """Write ``n_trajectories`` CSVs, alternating circle / infinity shapes."""
    traj_dir = _out(cfg) / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    bounds = _bounds(cfg)
    entries = []
    for i in range(cfg.dataset.n_trajectories):
        kind = Kind.CIRCLE if i % 2 == 0 else Kind.INFINITY
        params = sample_params(make_rng(child_seed(cfg.seed, "trajectory", i)), bounds, kind)
        traj = generate_trajectory(params, cfg.dataset.duration, cfg.dataset.ts)
        name = f"traj_{i:05d}.csv"
        write_trajectory_csv(traj, traj_dir / name)
        entries.append({"id": i, "file": name, "kind": kind.value, "center": list(params.center),
                        "normal": list(params.normal), "radius": params.radius, "omega": params.omega})
    manifest = {"count": len(entries), "seed": cfg.seed, "ts": cfg.dataset.ts, "trajectories": entries}
    (traj_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(entries)} trajectories to {traj_dir}")


def cmd_segment(cfg: ExperimentConfig) -> None:
    trajs, ids = _load_trajectories(cfg)
    d = cfg.dataset
    for channel in _channels(cfg):
        seg = build_segments(trajs, channel, d.ts, d.in_len, d.out_len, d.stride, ids)
        parts = split(seg, d.train_frac, d.val_frac, child_seed(cfg.seed, "split"))
        counts = {}
        for name, part in zip(("train", "val", "test"), parts):
            save_segments(part, _segments_dir(cfg, channel, name))
            counts[name] = len(part)
        print(f"{channel.value}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def cmd_fit_norm(cfg: ExperimentConfig) -> None:
    for channel in _channels(cfg):
        train = load_segments(_require(_segments_dir(cfg, channel, "train"), "run `uavtraj segment` first"))
        stats = fit_stats(corpus_points(train), Method(cfg.norm.method), channel)
        path = _stats_path(cfg, channel)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_stats(stats, path)
        print(f"{channel.value}/{stats.method.value}: max_norm={stats.max_norm:.6g} -> {path}")


def _normalized(cfg, channel, part, stats) -> SegmentSet:
    seg = load_segments(_require(_segments_dir(cfg, channel, part), "run `uavtraj segment` first"))
    return normalize_segments(seg, stats)


def cmd_train(cfg: ExperimentConfig) -> None:
    channel = _single_channel(cfg)
    stats = load_stats(_require(_stats_path(cfg, channel), "run `uavtraj fit-norm` first"))
    train = _normalized(cfg, channel, "train", stats)
    val = _normalized(cfg, channel, "val", stats)
    t = cfg.train
    tconfig = TrainConfig(lr0=t.lr0, dropout=t.dropout, max_epochs=t.max_epochs, patience=t.patience,
                          sched_step=t.sched_step, sched_gamma=t.sched_gamma, batch_size=t.batch_size,
                          seed=child_seed(cfg.seed, "train"))
    mconfig = _model_config(cfg)
    params, history = train_loop(train, val, mconfig, tconfig,
                                 on_epoch=lambda r: log.info("epoch %d train %.3e val %.3e", r.epoch,
                                                             r.train_loss, r.val_loss))
    model_dir = _out(cfg) / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, mconfig, stats, model_dir / f"{cfg.model_id()}.ckpt")
    history.to_csv(model_dir / f"{cfg.model_id()}_history.csv")
    print(f"{cfg.model_id()}: best val {history.best_val_loss:.3e} at epoch {history.best_epoch} "
          f"({history.stop_reason} at epoch {history.stop_epoch})")


def _checkpoint(cfg):
    return load_checkpoint(_require(_out(cfg) / "models" / f"{cfg.model_id()}.ckpt", "run `uavtraj train` first"))


def cmd_evaluate(cfg: ExperimentConfig) -> None:
    params, mconfig, stats = _checkpoint(cfg)
    test = _normalized(cfg, stats.channel, "test", stats)
    if len(test) == 0:
        raise DataError("test split is empty")
    preds, _ = model_forward(test.inputs(), params, mconfig, "eval")
    report = evaluate(preds, test.targets(), model_id=cfg.model_id(), channel=stats.channel.value,
                      norm_method=stats.method.value, hidden_dim=mconfig.hidden_dim,
                      num_layers=mconfig.num_layers)
    out = _out(cfg) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    text, csv_text = report_table([report], "grid")
    (out / f"{cfg.model_id()}_metrics.csv").write_text(csv_text, encoding="utf-8")
    print(text, end="")


def cmd_stream_sim(cfg: ExperimentConfig) -> None:
    params, mconfig, stats = _checkpoint(cfg)
    s = cfg.stream
    source = TrajectoryParams(Kind(s.kind), s.center, s.normal, s.radius, s.omega)
    predictor = StreamPredictor(params, mconfig, stats, ts=cfg.dataset.ts)
    result = run_stream_sim(source, predictor, duration=s.duration, jitter=s.jitter,
                            seed=child_seed(cfg.seed, "stream"), window=s.window)
    out = _out(cfg) / "stream"
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.model_id()}.csv").write_text(result.to_csv(), encoding="utf-8")
    summary = {"model_id": cfg.model_id(), "channel": stats.channel.value, "norm_method": stats.method.value,
               "hidden_dim": mconfig.hidden_dim, "num_layers": mconfig.num_layers,
               "average_rmse": result.report.average_rmse, "records": result.report.count,
               "partial": result.report.partial}
    (out / f"{cfg.model_id()}_summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(f"{cfg.model_id()}: average RMSE {result.report.average_rmse:.3f} m over "
          f"{result.report.count} segments")


def cmd_report(cfg: ExperimentConfig) -> None:
    import csv

    out = _out(cfg)
    reports = []
    for path in sorted((out / "reports").glob("*_metrics.csv")):
        with path.open(encoding="utf-8") as f:
            for row in csv.DictReader(f):
                num = {k: (float(row[k]) if row[k] != "" else None) for k in ("mse", "rmse", "mae", "r2", "adjusted_r2")}
                reports.append(MetricsReport(n_samples=int(row["n_samples"]), model_id=row["model_id"],
                                             channel=row["channel"], norm_method=row["norm_method"],
                                             hidden_dim=int(row["hidden_dim"]), num_layers=int(row["num_layers"]),
                                             **num))
    sims = []
    for path in sorted((out / "stream").glob("*_summary.json")):
        s = json.loads(path.read_text(encoding="utf-8"))
        sims.append(MetricsReport(mse=s["average_rmse"] ** 2, rmse=s["average_rmse"], mae=float("nan"), r2=None,
                                  adjusted_r2=None, n_samples=s["records"], model_id=s["model_id"],
                                  channel=s["channel"], norm_method=s["norm_method"],
                                  hidden_dim=s["hidden_dim"], num_layers=s["num_layers"]))
    if not reports and not sims:
        raise FileNotFoundError(f"no metrics under {out / 'reports'} or {out / 'stream'}; "
                                "run `uavtraj evaluate` or `uavtraj stream-sim` first")
    for name, items, layout in (("grid", reports, "grid"), ("comparison", sims, "comparison")):
        if items:
            text, csv_text = report_table(items, layout)
            (out / f"report_{name}.txt").write_text(text, encoding="utf-8")
            (out / f"report_{name}.csv").write_text(csv_text, encoding="utf-8")
            print(text)


COMMANDS = {
    "generate": cmd_generate,
    "segment": cmd_segment,
    "fit-norm": cmd_fit_norm,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "stream-sim": cmd_stream_sim,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavtraj", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI experiment config")
        p.add_argument("--seed", type=int, help="top-level seed (overrides [experiment] seed)")
        p.add_argument("--out", help="output directory (overrides [experiment] out_dir)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config field; repeatable")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"experiment.seed={args.seed}")
        if args.out is not None:
            overrides.append(f"experiment.out_dir={args.out}")
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
        _write_meta(cfg, args.command)
    except UsageError as exc:
        print(f"uavtraj: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, ValueError) as exc:
        print(f"uavtraj: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"uavtraj: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
