"""Experiment configuration: INI-style sections with the reference training defaults.

Precedence: dataclass defaults < config file < ``--set section.key=value``.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import DataError


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace("(", "").replace(")", "").split(",") if v.strip())


@dataclass
class DatasetSection:
    n_trajectories: int = 5000
    duration: float = 20.0
    ts: float = 0.1
    in_len: int = 20
    out_len: int = 10
    stride: int = 1
    train_frac: float = 0.8
    val_frac: float = 0.1
    # optional directory of t,x,y,z CSVs (e.g. exported real flights) mixed into the corpus
    external_dir: str = ""
    dataset_type: str = "simulation"
    center_lo: tuple[float, ...] = (-40.0, -40.0, 5.0)
    center_hi: tuple[float, ...] = (40.0, 40.0, 20.0)
    normal_lo: tuple[float, ...] = (-40.0, -40.0, 5.0)
    normal_hi: tuple[float, ...] = (40.0, 40.0, 20.0)
    radius_lo: float = 1.0
    radius_hi: float = 5.0
    omega_lo: float = 0.3
    omega_hi: float = 1.0


@dataclass
class NormSection:
    channel: str = "velocity"  # position | velocity | both (segment only)
    method: str = "maxnorm"  # maxnorm | whitening


@dataclass
class ModelSection:
    id: str = ""
    hidden_dim: int = 64
    num_layers: int = 2


@dataclass
class TrainSection:
    lr0: float = 0.001
    dropout: float = 0.5
    max_epochs: int = 1000
    patience: int = 100
    sched_step: int = 50
    sched_gamma: float = 0.1
    batch_size: int = 256


@dataclass
class StreamSection:
    kind: str = "infinity"
    center: tuple[float, ...] = (-100.0, 0.0, 10.0)
    normal: tuple[float, ...] = (1.0, 1.0, 1.0)
    radius: float = 3.0
    omega: float = 0.8
    duration: float = 40.0
    jitter: float = 0.3
    window: int = 100


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    norm: NormSection = field(default_factory=NormSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    stream: StreamSection = field(default_factory=StreamSection)

    def model_id(self) -> str:
        return self.model.id or f"{self.norm.channel}_{self.norm.method}_{self.model.hidden_dim}x{self.model.num_layers}"

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {"seed": str(self.seed), "out_dir": self.out_dir}
        for name in SECTIONS:
            section = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(section, f.name)) for f in fields(section)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


SECTIONS = ("dataset", "norm", "model", "train", "stream")


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    return str(value)


def _coerce(section, key: str, raw: str):
    types = {f.name: f.type for f in fields(section)}
    if key not in types:
        raise DataError(f"unknown key {key!r} in [{type(section).__name__}]")
    kind = types[key]
    try:
        if "tuple" in str(kind):
            return _floats(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise DataError(f"bad value {raw!r} for {key}") from None


def _apply(cfg: ExperimentConfig, section: str, key: str, raw: str) -> None:
    if section == "experiment":
        if key == "seed":
            cfg.seed = int(raw)
        elif key == "out_dir":
            cfg.out_dir = raw.strip()
        else:
            raise DataError(f"unknown key {key!r} in [experiment]")
        return
    if section not in SECTIONS:
        raise DataError(f"unknown section [{section}]")
    target = getattr(cfg, section)
    setattr(target, key, _coerce(target, key, raw))


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as f:
                cp.read_file(f)
        except configparser.Error as exc:
            raise DataError(f"{path}: {exc}") from None
        for section in cp.sections():
            for key, raw in cp[section].items():
                _apply(cfg, section, key, raw)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise DataError(f"override {item!r} must look like section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        _apply(cfg, section.strip(), key.strip(), raw)
    return cfg


# (hidden_dim, num_layers) complexity tiers of the benchmark grid
GRID_COMPLEXITIES = ((64, 2), (128, 3), (256, 5))


def grid_configs(base: ExperimentConfig | None = None,
                 external_dir: str = "data/real_flights") -> list[ExperimentConfig]:
    """The 24-model benchmark grid, ``GRU_1`` .. ``GRU_24``.

    Order: dataset type (mixed, simulation) > channel (position, velocity)
    > method (maxnorm, whitening) > complexity. Mixed runs read extra
    flights from ``external_dir``.
    """
    base = base or ExperimentConfig()
    out = []
    for dataset_type in ("mixed", "simulation"):
        for channel in ("position", "velocity"):
            for method in ("maxnorm", "whitening"):
                for hidden, layers in GRID_COMPLEXITIES:
                    cfg = dataclasses.replace(
                        base,
                        dataset=dataclasses.replace(base.dataset, dataset_type=dataset_type,
                                                    external_dir=external_dir if dataset_type == "mixed" else ""),
                        norm=NormSection(channel=channel, method=method),
                        model=ModelSection(id=f"GRU_{len(out) + 1}", hidden_dim=hidden, num_layers=layers),
                    )
                    out.append(cfg)
    return out
