"""Trajectory containers, resampling, velocity derivation and windowing.

Also owns the on-disk formats for trajectories (CSV) and segment sets
(JSON manifest + little-endian float64 payload).
"""

from __future__ import annotations

import csv
import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InvalidFractions,
    NonMonotonicTimestamps,
    NonUniformSpacing,
    ParseError,
    TooFewSamples,
    VersionMismatch,
    WrongChannel,
)
from .numerics import make_rng

TS_DEFAULT = 0.1
IN_LEN_DEFAULT = 20
OUT_LEN_DEFAULT = 10
# query times within this fraction of ts of a knot reuse the knot value verbatim
KNOT_SNAP = 1e-9
SPACING_JITTER = 1e-9

CSV_HEADER = ["t", "x", "y", "z"]
SEGMENT_MAGIC = b"UAVSEGS\0"
SEGMENT_VERSION = 1


class Channel(str, enum.Enum):
    POSITION = "position"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class SampledTrajectory:
    timestamps: np.ndarray
    points: np.ndarray
    channel: Channel = Channel.POSITION

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {p.shape}")
        if len(t) != len(p):
            raise ValueError(f"{len(t)} timestamps but {len(p)} points")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise ValueError("trajectory contains non-finite values")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise NonMonotonicTimestamps("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "channel", Channel(self.channel))

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampledTrajectory):
            return NotImplemented
        return (
            self.channel == other.channel
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


@dataclass
class SegmentPair:
    input: np.ndarray
    target: np.ndarray
    channel: Channel
    source_id: int
    start: int


@dataclass
class SegmentSet:
    pairs: list[SegmentPair]
    ts: float
    channel: Channel
    in_len: int = IN_LEN_DEFAULT
    out_len: int = OUT_LEN_DEFAULT

    def __post_init__(self):
        for p in self.pairs:
            if p.channel != self.channel:
                raise ValueError("segment set mixes channels")
            if p.input.shape != (self.in_len, 3) or p.target.shape != (self.out_len, 3):
                raise ValueError("segment set mixes window sizes")

    def __len__(self) -> int:
        return len(self.pairs)

    def inputs(self) -> np.ndarray:
        return np.stack([p.input for p in self.pairs]) if self.pairs else np.zeros((0, self.in_len, 3))

    def targets(self) -> np.ndarray:
        return np.stack([p.target for p in self.pairs]) if self.pairs else np.zeros((0, self.out_len, 3))

    def source_ids(self) -> list[int]:
        return sorted({p.source_id for p in self.pairs})


def interpolate_at(timestamps: np.ndarray, points: np.ndarray, query: np.ndarray, tol: float) -> np.ndarray:
    """Linear interpolation of ``points`` at ``query`` times.

    Queries within ``tol`` of a knot return that knot's sample bit-for-bit,
    which keeps on-grid data exact under floating-point grid arithmetic.
    Queries outside the knot range are clamped to the end samples.
    """
    t = np.asarray(timestamps, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    idx = np.searchsorted(t, q, side="right") - 1
    idx = np.clip(idx, 0, len(t) - 2)
    t0, t1 = t[idx], t[idx + 1]
    w = np.clip((q - t0) / (t1 - t0), 0.0, 1.0)[:, None]
    out = points[idx] + w * (points[idx + 1] - points[idx])
    near0 = np.abs(q - t0) <= tol
    near1 = np.abs(q - t1) <= tol
    out[near0] = points[idx[near0]]
    out[near1] = points[idx[near1] + 1]
    return out


def resample(traj: SampledTrajectory, ts: float = TS_DEFAULT) -> SampledTrajectory:
    if len(traj) < 2:
        raise TooFewSamples("resampling needs at least 2 samples")
    t0, t_last = traj.timestamps[0], traj.timestamps[-1]
    n = int(math.floor((t_last - t0) / ts + KNOT_SNAP)) + 1
    grid = t0 + ts * np.arange(n)
    grid[-1] = min(grid[-1], t_last)
    pts = interpolate_at(traj.timestamps, traj.points, grid, KNOT_SNAP * ts)
    return SampledTrajectory(grid, pts, traj.channel)


def uniform_spacing(traj: SampledTrajectory) -> float:
    if len(traj) < 2:
        raise TooFewSamples("need at least 2 samples")
    gaps = np.diff(traj.timestamps)
    ts = (traj.timestamps[-1] - traj.timestamps[0]) / (len(traj) - 1)
    if np.max(np.abs(gaps - ts)) > SPACING_JITTER:
        raise NonUniformSpacing("samples are not uniformly spaced; resample first")
    return float(ts)


def difference(points: np.ndarray, ts: float) -> np.ndarray:
    """Forward differences ``(p[i+1] - p[i]) / ts``; shared by the offline and streaming paths."""
    return (points[1:] - points[:-1]) / ts


def derive_velocity(traj: SampledTrajectory, ts: float | None = None) -> SampledTrajectory:
    if traj.channel != Channel.POSITION:
        raise WrongChannel("velocity is derived from position trajectories")
    spacing = uniform_spacing(traj)
    if ts is None:
        ts = spacing
    elif abs(spacing - ts) > SPACING_JITTER:
        raise NonUniformSpacing(f"trajectory spacing {spacing} differs from ts={ts}")
    return SampledTrajectory(traj.timestamps[:-1], difference(traj.points, ts), Channel.VELOCITY)


def integrate_velocity(start: np.ndarray, velocities: np.ndarray, ts: float) -> np.ndarray:
    """Cumulative sum ``p[k] = start + ts * sum(v[:k])`` for k = 0..len(v); inverse of ``difference``."""
    out = np.empty((len(velocities) + 1, 3))
    out[0] = start
    for i, v in enumerate(velocities):
        out[i + 1] = out[i] + v * ts
    return out


def window_count(n: int, in_len: int, out_len: int, stride: int) -> int:
    return max(0, (n - in_len - out_len) // stride + 1)


def window(
    traj: SampledTrajectory,
    in_len: int = IN_LEN_DEFAULT,
    out_len: int = OUT_LEN_DEFAULT,
    stride: int = 1,
    source_id: int = 0,
) -> list[SegmentPair]:
    if min(in_len, out_len, stride) < 1:
        raise ValueError("in_len, out_len and stride must be >= 1")
    pairs = []
    for k in range(window_count(len(traj), in_len, out_len, stride)):
        s = k * stride
        pairs.append(SegmentPair(
            input=traj.points[s:s + in_len].copy(),
            target=traj.points[s + in_len:s + in_len + out_len].copy(),
            channel=traj.channel,
            source_id=source_id,
            start=s,
        ))
    return pairs


def build_segments(
    trajectories: list[SampledTrajectory],
    channel: Channel,
    ts: float = TS_DEFAULT,
    in_len: int = IN_LEN_DEFAULT,
    out_len: int = OUT_LEN_DEFAULT,
    stride: int = 1,
    source_ids: list[int] | None = None,
) -> SegmentSet:
    """Resample position trajectories to ``ts``, optionally difference them, and cut windows."""
    if source_ids is None:
        source_ids = list(range(len(trajectories)))
    pairs: list[SegmentPair] = []
    for sid, traj in sorted(zip(source_ids, trajectories), key=lambda x: x[0]):
        grid = resample(traj, ts)
        if channel == Channel.VELOCITY:
            grid = derive_velocity(grid, ts)
        pairs.extend(window(grid, in_len, out_len, stride, sid))
    return SegmentSet(pairs, ts, Channel(channel), in_len, out_len)


def split(
    segments: SegmentSet, train_frac: float, val_frac: float, seed: int
) -> tuple[SegmentSet, SegmentSet, SegmentSet]:
    """Split by source trajectory so overlapping windows never straddle sets."""
    if not (train_frac > 0 and val_frac > 0 and train_frac + val_frac < 1):
        raise InvalidFractions(f"bad fractions train={train_frac} val={val_frac}")
    ids = np.array(segments.source_ids(), dtype=np.int64)
    perm = make_rng(seed).permutation(len(ids))
    ids = ids[perm]
    n_train = int(round(train_frac * len(ids)))
    n_val = int(round(val_frac * len(ids)))
    groups = [set(ids[:n_train].tolist()), set(ids[n_train:n_train + n_val].tolist()),
              set(ids[n_train + n_val:].tolist())]

    def subset(keep: set[int]) -> SegmentSet:
        return SegmentSet([p for p in segments.pairs if p.source_id in keep],
                          segments.ts, segments.channel, segments.in_len, segments.out_len)

    return subset(groups[0]), subset(groups[1]), subset(groups[2])


# ---------------------------------------------------------------- persistence

def write_trajectory_csv(traj: SampledTrajectory, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(",".join(CSV_HEADER) + "\n")
        for t, (x, y, z) in zip(traj.timestamps, traj.points):
            f.write(f"{t:.17g},{x:.17g},{y:.17g},{z:.17g}\n")


def read_trajectory_csv(path, channel: Channel = Channel.POSITION) -> SampledTrajectory:
    path = Path(path)
    rows_t, rows_p = [], []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)!r}, got {header!r}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if rows_t and vals[0] <= rows_t[-1]:
                raise NonMonotonicTimestamps(f"line {lineno}: timestamp {vals[0]} not increasing")
            rows_t.append(vals[0])
            rows_p.append(vals[1:])
    return SampledTrajectory(np.array(rows_t), np.array(rows_p).reshape(-1, 3), channel)


def save_segments(segments: SegmentSet, directory) -> None:
    """Write ``manifest.json`` plus ``segments.bin`` into ``directory``.

    ``segments.bin`` layout: 8-byte magic ``UAVSEGS\\0``, uint32 version,
    uint32 pair count (all little-endian), then for each pair its input
    (in_len x 3) followed by its target (out_len x 3) as float64 rows.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": SEGMENT_VERSION,
        "ts": segments.ts,
        "channel": segments.channel.value,
        "in_len": segments.in_len,
        "out_len": segments.out_len,
        "count": len(segments),
        "pairs": [[p.source_id, p.start] for p in segments.pairs],
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    with (directory / "segments.bin").open("wb") as f:
        f.write(SEGMENT_MAGIC + struct.pack("<II", SEGMENT_VERSION, len(segments)))
        for p in segments.pairs:
            f.write(np.ascontiguousarray(p.input, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(p.target, dtype="<f8").tobytes())


def load_segments(directory) -> SegmentSet:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest.json: {exc}") from None
    if manifest.get("format_version") != SEGMENT_VERSION:
        raise VersionMismatch(f"segment format {manifest.get('format_version')} != {SEGMENT_VERSION}")
    raw = (directory / "segments.bin").read_bytes()
    if raw[:8] != SEGMENT_MAGIC:
        raise ParseError("segments.bin: bad magic")
    version, count = struct.unpack("<II", raw[8:16])
    if version != SEGMENT_VERSION:
        raise VersionMismatch(f"segments.bin version {version}")
    in_len, out_len = manifest["in_len"], manifest["out_len"]
    per = (in_len + out_len) * 3
    if count != manifest["count"] or len(raw) != 16 + count * per * 8:
        raise ParseError("segments.bin: size does not match manifest")
    data = np.frombuffer(raw, dtype="<f8", offset=16).astype(np.float64).reshape(count, per)
    channel = Channel(manifest["channel"])
    pairs = []
    for row, (sid, start) in zip(data, manifest["pairs"]):
        pairs.append(SegmentPair(row[:in_len * 3].reshape(in_len, 3).copy(),
                                 row[in_len * 3:].reshape(out_len, 3).copy(), channel, sid, start))
    return SegmentSet(pairs, manifest["ts"], channel, in_len, out_len)
