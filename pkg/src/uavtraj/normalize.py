"""Whitening (Cholesky) and max-L2-norm scaling with exact inverses."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Channel
from .errors import (
    DegenerateCovariance,
    MethodMismatch,
    NotPositiveDefinite,
    ParseError,
    VersionMismatch,
    ZeroData,
)
from .numerics import cholesky

STATS_FORMAT_VERSION = 1
DELTA_MAX = 1e-8
# regularisation ladder tried in order until the factorisation succeeds
DELTA_LADDER = (0.0,) + tuple(10.0 ** e for e in range(-16, -7))


class Method(str, enum.Enum):
    WHITENING = "whitening"
    MAXNORM = "maxnorm"


@dataclass(frozen=True)
class NormStats:
    method: Method
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    max_norm: float
    channel: Channel = Channel.POSITION

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "channel", Channel(self.channel))
        for name, shape in (("mean", (3,)), ("cov", (3, 3)), ("chol", (3, 3))):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "max_norm", float(self.max_norm))
        if self.method == Method.MAXNORM and not self.max_norm > 0:
            raise ValueError("max-norm statistics need max_norm > 0")

    def __eq__(self, other) -> bool:
        if not isinstance(other, NormStats):
            return NotImplemented
        return (self.method == other.method and self.channel == other.channel
                and self.max_norm == other.max_norm
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("mean", "cov", "chol")))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "format_version": STATS_FORMAT_VERSION,
            "method": self.method.value,
            "channel": self.channel.value,
            "mean": self.mean.tolist(),
            "cov": self.cov.reshape(-1).tolist(),
            "L": self.chol.reshape(-1).tolist(),
            "max_norm": self.max_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        if d.get("format_version") != STATS_FORMAT_VERSION:
            raise VersionMismatch(f"stats format {d.get('format_version')} != {STATS_FORMAT_VERSION}")
        try:
            return cls(Method(d["method"]), d["mean"], d["cov"], d["L"], d["max_norm"], Channel(d["channel"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"bad stats record: {exc}") from None

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _regularized_cholesky(cov: np.ndarray) -> np.ndarray:
    for delta in DELTA_LADDER:
        try:
            return cholesky(cov + delta * np.eye(3))
        except NotPositiveDefinite:
            continue
    raise DegenerateCovariance(f"covariance stays singular with regularisation up to {DELTA_MAX:g}")


def fit_stats(points, method: Method, channel: Channel = Channel.POSITION) -> NormStats:
    """Sample mean, covariance (divisor N-1), its Cholesky factor and the max vector norm.

    Only the pieces ``method`` needs must be well defined; the others fall
    back to zero mean / identity factor so max-norm stats can be fit on a
    rank-deficient set.
    """
    method = Method(method)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    norms = np.sqrt(np.sum(p * p, axis=1)) if len(p) else np.zeros(0)
    max_norm = float(norms.max()) if len(p) else 0.0
    if method == Method.MAXNORM and not max_norm > 0:
        raise ZeroData("max-norm scaling needs at least one non-zero vector")
    if method == Method.WHITENING and len(p) < 2:
        raise DegenerateCovariance("whitening needs at least 2 points")

    if len(p) >= 2:
        mean = p.mean(axis=0)
        centered = p - mean
        cov = centered.T @ centered / (len(p) - 1)
        cov = 0.5 * (cov + cov.T)
    else:
        mean, cov = np.zeros(3), np.eye(3)
    if method == Method.WHITENING:
        chol = _regularized_cholesky(cov)
    else:
        try:
            chol = _regularized_cholesky(cov)
        except DegenerateCovariance:
            chol = np.eye(3)
    return NormStats(method, mean, cov, chol, max_norm if max_norm > 0 else 1.0, channel)


def _need(stats: NormStats, method: Method) -> None:
    if stats.method != method:
        raise MethodMismatch(f"stats were fit for {stats.method.value}, not {method.value}")


def _forward_sub(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    # elementwise so each row's result is independent of how many rows are batched
    x = np.empty_like(b)
    for i in range(3):
        acc = b[..., i]
        for j in range(i):
            acc = acc - L[i, j] * x[..., j]
        x[..., i] = acc / L[i, i]
    return x


def whiten(p, stats: NormStats) -> np.ndarray:
    """``L^-1 (p - mean)`` by forward substitution; accepts (3,) or (..., 3)."""
    _need(stats, Method.WHITENING)
    return _forward_sub(stats.chol, np.asarray(p, dtype=np.float64) - stats.mean)


def dewhiten(pw, stats: NormStats) -> np.ndarray:
    _need(stats, Method.WHITENING)
    pw = np.asarray(pw, dtype=np.float64)
    L = stats.chol
    out = np.empty_like(pw)
    for i in range(3):
        acc = L[i, 0] * pw[..., 0]
        for j in range(1, i + 1):
            acc = acc + L[i, j] * pw[..., j]
        out[..., i] = acc + stats.mean[i]
    return out


def maxnorm_apply(p, stats: NormStats) -> np.ndarray:
    _need(stats, Method.MAXNORM)
    return np.asarray(p, dtype=np.float64) / stats.max_norm


def maxnorm_invert(q, stats: NormStats) -> np.ndarray:
    _need(stats, Method.MAXNORM)
    return np.asarray(q, dtype=np.float64) * stats.max_norm


def normalize(p, stats: NormStats) -> np.ndarray:
    return whiten(p, stats) if stats.method == Method.WHITENING else maxnorm_apply(p, stats)


def denormalize(q, stats: NormStats) -> np.ndarray:
    return dewhiten(q, stats) if stats.method == Method.WHITENING else maxnorm_invert(q, stats)


def save_stats(stats: NormStats, path) -> None:
    Path(path).write_text(json.dumps(stats.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_stats(path) -> NormStats:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    if not isinstance(d, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return NormStats.from_dict(d)


def normalize_segments(segments, stats: NormStats):
    """Copy of a ``SegmentSet`` with inputs and targets mapped into normalised units."""
    from .dataset import SegmentPair, SegmentSet

    if segments.channel != stats.channel:
        raise MethodMismatch(f"stats fit on {stats.channel.value}, segments are {segments.channel.value}")
    pairs = [SegmentPair(normalize(p.input, stats), normalize(p.target, stats), p.channel, p.source_id, p.start)
             for p in segments.pairs]
    return SegmentSet(pairs, segments.ts, segments.channel, segments.in_len, segments.out_len)


def corpus_points(segments) -> np.ndarray:
    """Every distinct sample covered by a segment set, for fitting statistics.

    Overlapping windows would otherwise weight interior samples more than
    trajectory ends.
    """
    seen: dict[tuple[int, int], np.ndarray] = {}
    for p in segments.pairs:
        rows = np.concatenate([p.input, p.target])
        for k, row in enumerate(rows):
            seen.setdefault((p.source_id, p.start + k), row)
    return np.array([seen[k] for k in sorted(seen)]).reshape(-1, 3)
