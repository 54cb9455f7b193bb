"""Real-time prediction replay: buffer timestamped positions, resample,
predict, turn velocity predictions back into positions, score against
what actually happened."""

from __future__ import annotations

import collections
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import KNOT_SNAP, Channel, SampledTrajectory, difference, integrate_velocity, interpolate_at
from .errors import ChannelMismatch, NoCompleteRecords, NonMonotonicTime, NotReady, SourceTooShort
from .model import ModelConfig, ModelParams, model_forward
from .normalize import NormStats, denormalize, normalize
from .numerics import make_rng
from .trajgen import TrajectoryParams, trajectory_point

DEFAULT_JITTER = 0.3
ROLLING_WINDOW = 100
SPAN_TOL = 1e-9


class ChannelMode(str, enum.Enum):
    POSITION_MODEL = "position"
    VELOCITY_MODEL = "velocity"


@dataclass(frozen=True)
class StreamSample:
    t: float
    p: tuple[float, float, float]


@dataclass
class PredictionRecord:
    issued_at: float
    times: np.ndarray  # (out_len,) issued_at + k*ts, k = 1..out_len
    predicted: np.ndarray  # (out_len, 3)
    actual: np.ndarray = None  # (out_len, 3), NaN until matched
    rmse: float | None = None

    def __post_init__(self):
        if self.actual is None:
            self.actual = np.full_like(self.predicted, np.nan)

    @property
    def matched(self) -> int:
        return int(np.sum(~np.isnan(self.actual[:, 0])))

    @property
    def complete(self) -> bool:
        return self.rmse is not None


def record_rmse(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Root mean squared Euclidean distance over the predicted points (metres)."""
    d = predicted - actual
    return math.sqrt(float(np.mean(np.sum(d * d, axis=1))))


class StreamPredictor:
    """Single-writer state machine: ``push`` samples, ``predict`` when ready.

    The ring buffer keeps ``capacity`` samples; the default assumes samples
    arrive no faster than every ``ts / 2`` and holds one full input horizon
    plus margin.
    """

    def __init__(self, params: ModelParams, config: ModelConfig, stats: NormStats,
                 mode: ChannelMode | str | None = None, ts: float = 0.1, capacity: int | None = None):
        mode = ChannelMode(mode) if mode is not None else ChannelMode(stats.channel.value)
        if mode.value != stats.channel.value:
            raise ChannelMismatch(f"checkpoint was trained on {stats.channel.value}, predictor mode is {mode.value}")
        self.params, self.config, self.stats, self.mode, self.ts = params, config, stats, mode, ts
        self.horizon = config.in_len * ts
        if capacity is None:
            capacity = math.ceil((config.in_len + 1) * ts / (ts / 2)) + 4
        self.buffer: collections.deque[StreamSample] = collections.deque(maxlen=capacity)

    @property
    def ready(self) -> bool:
        return len(self.buffer) >= 2 and self.buffer[-1].t - self.buffer[0].t >= self.horizon - SPAN_TOL

    def push(self, t: float, p) -> bool:
        if self.buffer and not t > self.buffer[-1].t:
            raise NonMonotonicTime(f"sample time {t} is not after {self.buffer[-1].t}")
        self.buffer.append(StreamSample(float(t), tuple(float(v) for v in p)))
        return self.ready

    def _grid(self, n: int) -> np.ndarray:
        """``n`` positions on the ts grid ending exactly at the newest sample."""
        if not self.ready:
            raise NotReady("buffer does not yet span the input horizon")
        t = np.array([s.t for s in self.buffer])
        p = np.array([s.p for s in self.buffer])
        query = t[-1] - self.ts * np.arange(n - 1, -1, -1)
        out = interpolate_at(t, p, query, KNOT_SNAP * self.ts)
        out[-1] = p[-1]
        return out

    def make_input(self) -> np.ndarray:
        """The latest ``in_len`` positions resampled onto the training grid."""
        return self._grid(self.config.in_len)

    def model_input(self) -> np.ndarray:
        """Normalised array handed to the network."""
        if self.mode == ChannelMode.POSITION_MODEL:
            return normalize(self.make_input(), self.stats)
        # in_len + 1 grid positions difference to exactly in_len velocities
        return normalize(difference(self._grid(self.config.in_len + 1), self.ts), self.stats)

    def predict(self) -> PredictionRecord:
        x = self.model_input()
        out, _ = model_forward(x, self.params, self.config, "eval")
        return self.record_from_output(out)

    def record_from_output(self, out: np.ndarray) -> PredictionRecord:
        """Turn a normalised network output into positions anchored at the newest sample."""
        last = self.buffer[-1]
        decoded = denormalize(out, self.stats)
        if self.mode == ChannelMode.VELOCITY_MODEL:
            decoded = integrate_velocity(np.array(last.p), decoded, self.ts)[1:]
        k = np.arange(1, self.config.out_len + 1)
        return PredictionRecord(last.t, last.t + k * self.ts, decoded)


def match_actuals(records: list[PredictionRecord], actual_t: np.ndarray, actual_p: np.ndarray) -> list[PredictionRecord]:
    """Fill each pending record's actuals from the (time-ordered) actual stream.

    Points beyond the last actual sample stay unmatched; a record gets its
    RMSE once all its points are matched.
    """
    actual_t = np.asarray(actual_t, dtype=np.float64)
    actual_p = np.asarray(actual_p, dtype=np.float64)
    if len(actual_t) < 2:
        return records
    for rec in records:
        if rec.complete:
            continue
        todo = np.isnan(rec.actual[:, 0]) & (rec.times <= actual_t[-1]) & (rec.times >= actual_t[0])
        if np.any(todo):
            rec.actual[todo] = interpolate_at(actual_t, actual_p, rec.times[todo], 0.0)
        if rec.matched == len(rec.times):
            rec.rmse = record_rmse(rec.predicted, rec.actual)
    return records


@dataclass
class RollingReport:
    average_rmse: float
    count: int
    partial: bool


def rolling_report(records: list[PredictionRecord], window: int = ROLLING_WINDOW) -> RollingReport:
    done = [r.rmse for r in records if r.complete]
    if not done:
        raise NoCompleteRecords("no prediction has been fully matched yet")
    recent = done[-window:]
    return RollingReport(math.fsum(recent) / len(recent), len(recent), len(recent) < window)


def jittered_times(duration: float, ts: float, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """Sample clock with gaps ``ts * (1 + u)``, ``u ~ U[-jitter, jitter]``."""
    times = [0.0]
    while True:
        gap = ts * (1.0 + (rng.uniform(-jitter, jitter) if jitter > 0 else 0.0))
        nxt = times[-1] + gap
        if nxt > duration + 1e-12:
            break
        times.append(nxt)
    return np.array(times)


@dataclass
class StreamResult:
    records: list[PredictionRecord]
    report: RollingReport
    actual_t: np.ndarray
    actual_p: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("issued_at,k,t_pred,px,py,pz,ax,ay,az,record_rmse\n")
        for rec in self.records:
            if not rec.complete:
                continue
            for k, (t, p, a) in enumerate(zip(rec.times, rec.predicted, rec.actual), start=1):
                vals = [rec.issued_at, k, t, *p, *a, rec.rmse]
                buf.write(",".join(str(v) if isinstance(v, int) else f"{v:.17g}" for v in vals) + "\n")
        buf.write(f"# average_rmse={self.report.average_rmse:.17g} records={self.report.count} "
                  f"partial={int(self.report.partial)}\n")
        return buf.getvalue()


def run_stream_sim(source, predictor: StreamPredictor, *, duration: float = 40.0,
                   jitter: float = DEFAULT_JITTER, seed: int = 0, window: int = ROLLING_WINDOW,
                   predict_every: int = 1) -> StreamResult:
    """Replay ``source`` sample by sample through ``predictor``.

    ``source`` is either a ``SampledTrajectory`` (replayed as recorded) or
    ``TrajectoryParams`` sampled on a jittered clock for ``duration`` seconds.
    A prediction is issued on every ``predict_every``-th sample once the
    buffer is ready.
    """
    ts, cfg = predictor.ts, predictor.config
    if isinstance(source, TrajectoryParams):
        t = jittered_times(duration, ts, jitter, make_rng(seed))
        p = trajectory_point(source, t)
    elif isinstance(source, SampledTrajectory):
        t, p = source.timestamps, source.points
    else:
        raise TypeError("source must be TrajectoryParams or SampledTrajectory")
    if len(t) < 2 or t[-1] - t[0] < (cfg.in_len + cfg.out_len) * ts:
        raise SourceTooShort(f"source spans {t[-1] - t[0] if len(t) else 0:.3f}s, "
                             f"need {(cfg.in_len + cfg.out_len) * ts:.3f}s")
    records: list[PredictionRecord] = []
    n_ready = 0
    for i in range(len(t)):
        if predictor.push(t[i], p[i]):
            if n_ready % predict_every == 0:
                records.append(predictor.predict())
            n_ready += 1
        match_actuals([r for r in records if not r.complete], t[:i + 1], p[:i + 1])
    return StreamResult(records, rolling_report(records, window), t, p)
