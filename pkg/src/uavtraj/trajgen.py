"""Parametric circle and figure-eight trajectories in arbitrary 3D planes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Channel, SampledTrajectory
from .errors import DegenerateNormal, InvalidDuration
from .numerics import rng_uniform

MIN_NORMAL = 1e-12
RESAMPLE_NORMAL_BELOW = 1e-6


class Kind(str, enum.Enum):
    CIRCLE = "circle"
    INFINITY = "infinity"


@dataclass(frozen=True)
class TrajectoryParams:
    kind: Kind
    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius: float
    omega: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "normal", tuple(float(v) for v in self.normal))
        if math.hypot(*self.normal) <= MIN_NORMAL:
            raise DegenerateNormal(f"normal {self.normal} has (near-)zero length")
        if not self.radius > 0 or not self.omega > 0:
            raise ValueError("radius and omega must be positive")


@dataclass(frozen=True)
class ParamBounds:
    """Per-axis sampling box. By default centre and normal share
    x, y in [-40, 40], z in [5, 20]."""

    center_lo: tuple[float, float, float] = (-40.0, -40.0, 5.0)
    center_hi: tuple[float, float, float] = (40.0, 40.0, 20.0)
    normal_lo: tuple[float, float, float] = (-40.0, -40.0, 5.0)
    normal_hi: tuple[float, float, float] = (40.0, 40.0, 20.0)
    radius_lo: float = 1.0
    radius_hi: float = 5.0
    omega_lo: float = 0.3
    omega_hi: float = 1.0

    def __post_init__(self):
        pairs = list(zip(self.center_lo, self.center_hi)) + list(zip(self.normal_lo, self.normal_hi))
        pairs += [(self.radius_lo, self.radius_hi), (self.omega_lo, self.omega_hi)]
        if any(lo > hi for lo, hi in pairs):
            raise ValueError("every lower bound must be <= its upper bound")


# Simulation lemniscate used for the out-of-distribution streaming test.
LEMNISCATE = TrajectoryParams(Kind.INFINITY, (-100.0, 0.0, 10.0), (1.0, 1.0, 1.0), 3.0, 0.8)


def orthonormal_basis(normal) -> tuple[np.ndarray, np.ndarray]:
    """In-plane unit vectors ``(v1, v2)`` with ``v2 = n_hat x v1``.

    ``v1`` is the coordinate axis least aligned with the normal (first axis
    wins ties), with its normal component projected out.
    """
    n = np.asarray(normal, dtype=np.float64)
    norm = float(np.linalg.norm(n))
    if norm <= MIN_NORMAL:
        raise DegenerateNormal(f"normal {tuple(n)} has (near-)zero length")
    n_hat = n / norm
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n_hat)))] = 1.0
    v1 = axis - np.dot(axis, n_hat) * n_hat
    v1 /= np.linalg.norm(v1)
    v2 = np.cross(n_hat, v1)
    v2 /= np.linalg.norm(v2)
    return v1, v2


def _points(params: TrajectoryParams, t, harmonic: int) -> np.ndarray:
    v1, v2 = orthonormal_basis(params.normal)
    t = np.asarray(t, dtype=np.float64)
    wt = params.omega * t
    c = np.asarray(params.center)
    return c + params.radius * (np.cos(wt)[..., None] * v1 + np.sin(harmonic * wt)[..., None] * v2)


def circle_point(params: TrajectoryParams, t):
    return _points(params, t, 1)


def infinity_point(params: TrajectoryParams, t):
    return _points(params, t, 2)


def trajectory_point(params: TrajectoryParams, t):
    """Position at time(s) ``t``; vectorised over ``t``."""
    return circle_point(params, t) if params.kind == Kind.CIRCLE else infinity_point(params, t)


def _uniform(rng, lo: float, hi: float) -> float:
    return float(lo) if lo == hi else rng_uniform(rng, lo, hi)


def sample_params(rng: np.random.Generator, bounds: ParamBounds, kind: Kind) -> TrajectoryParams:
    center = tuple(_uniform(rng, lo, hi) for lo, hi in zip(bounds.center_lo, bounds.center_hi))
    while True:
        normal = tuple(_uniform(rng, lo, hi) for lo, hi in zip(bounds.normal_lo, bounds.normal_hi))
        if math.hypot(*normal) >= RESAMPLE_NORMAL_BELOW:
            break
        if bounds.normal_lo == bounds.normal_hi:
            raise DegenerateNormal("normal bounds collapse to a zero vector")
    radius = _uniform(rng, bounds.radius_lo, bounds.radius_hi)
    omega = _uniform(rng, bounds.omega_lo, bounds.omega_hi)
    return TrajectoryParams(kind, center, normal, radius, omega)


def generate_trajectory(params: TrajectoryParams, duration: float, ts: float, t0: float = 0.0) -> SampledTrajectory:
    if not duration > 0 or not ts > 0:
        raise InvalidDuration(f"duration and ts must be positive (got {duration}, {ts})")
    n = int(math.floor(duration / ts + 1e-9)) + 1
    t = t0 + ts * np.arange(n)
    return SampledTrajectory(t, trajectory_point(params, t), Channel.POSITION)
