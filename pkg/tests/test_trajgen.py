import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavtraj.errors import DegenerateNormal, InvalidDuration
from uavtraj.numerics import make_rng
from uavtraj.trajgen import (
    LEMNISCATE,
    Kind,
    ParamBounds,
    TrajectoryParams,
    circle_point,
    generate_trajectory,
    infinity_point,
    orthonormal_basis,
    sample_params,
)

vec3 = st.lists(st.floats(-50, 50), min_size=3, max_size=3).filter(lambda v: math.hypot(*v) > 1e-3)


def test_basis_for_z_normal():
    v1, v2 = orthonormal_basis((0, 0, 1))
    np.testing.assert_array_equal(v1, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(v2, [0.0, 1.0, 0.0])


def test_basis_scale_invariant():
    for a, b in zip(orthonormal_basis((0, 0, 5)), orthonormal_basis((0, 0, 1))):
        np.testing.assert_array_equal(a, b)


def test_basis_degenerate():
    with pytest.raises(DegenerateNormal):
        orthonormal_basis((0.0, 0.0, 1e-13))


@settings(max_examples=300, deadline=None)
@given(vec3)
def test_basis_orthonormal_right_handed(n):
    v1, v2 = orthonormal_basis(n)
    n_hat = np.asarray(n) / np.linalg.norm(n)
    assert abs(v1 @ v2) < 1e-12 and abs(v1 @ n_hat) < 1e-12 and abs(v2 @ n_hat) < 1e-12
    assert abs(np.linalg.norm(v1) - 1) < 1e-12 and abs(np.linalg.norm(v2) - 1) < 1e-12
    np.testing.assert_allclose(v2, np.cross(n_hat, v1), atol=1e-12)
    w1, w2 = orthonormal_basis(n)
    assert np.array_equal(v1, w1) and np.array_equal(v2, w2)


def test_circle_examples():
    p = TrajectoryParams(Kind.CIRCLE, (1, 2, 3), (0, 0, 1), 2.0, 1.0)
    np.testing.assert_allclose(circle_point(p, 0.0), [3.0, 2.0, 3.0], atol=1e-15)
    q = TrajectoryParams(Kind.CIRCLE, (0, 0, 0), (0, 0, 1), 2.0, 1.0)
    np.testing.assert_allclose(circle_point(q, math.pi / 2), [0.0, 2.0, 0.0], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(vec3, vec3, st.floats(0.5, 5), st.floats(0.1, 2), st.floats(0, 100))
def test_circle_radius_and_planarity(c, n, r, w, t):
    p = TrajectoryParams(Kind.CIRCLE, c, n, r, w)
    x = circle_point(p, t) - np.asarray(c)
    n_hat = np.asarray(n) / np.linalg.norm(n)
    assert abs(np.linalg.norm(x) - r) < 1e-9
    assert abs(x @ n_hat) < 1e-9


def test_infinity_landmarks():
    p = TrajectoryParams(Kind.INFINITY, (1, -2, 3), (1, 1, 1), 3.0, 0.8)
    v1, _ = orthonormal_basis(p.normal)
    c = np.asarray(p.center)
    np.testing.assert_allclose(infinity_point(p, 0.0), c + 3 * v1, atol=1e-12)
    np.testing.assert_allclose(infinity_point(p, math.pi / (2 * 0.8)), c, atol=1e-12)
    np.testing.assert_allclose(infinity_point(p, math.pi / 0.8), c - 3 * v1, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.3, 1.0), st.floats(0, 50))
def test_infinity_periodic(w, t):
    p = TrajectoryParams(Kind.INFINITY, (3, 4, 5), (0.2, -1, 2), 2.5, w)
    np.testing.assert_allclose(infinity_point(p, t + 2 * math.pi / w), infinity_point(p, t), atol=1e-9)


def test_sample_params_within_table_bounds():
    rng = make_rng(5)
    b = ParamBounds()
    for i in range(500):
        p = sample_params(rng, b, Kind.CIRCLE if i % 2 else Kind.INFINITY)
        assert 1.0 <= p.radius <= 5.0 and 0.3 <= p.omega <= 1.0
        assert all(lo <= v <= hi for v, lo, hi in zip(p.center, b.center_lo, b.center_hi))
        assert all(lo <= v <= hi for v, lo, hi in zip(p.normal, b.normal_lo, b.normal_hi))


def test_sample_params_collapsed_bounds():
    b = ParamBounds((1, 2, 3), (1, 2, 3), (0, 0, 2), (0, 0, 2), 2.0, 2.0, 0.5, 0.5)
    p = sample_params(make_rng(0), b, Kind.CIRCLE)
    assert p == TrajectoryParams(Kind.CIRCLE, (1, 2, 3), (0, 0, 2), 2.0, 0.5)


def test_sample_params_resamples_tiny_normals():
    b = ParamBounds(normal_lo=(-1e-6, -1e-6, -1e-6), normal_hi=(1.0, 1e-6, 1e-6))
    p = sample_params(make_rng(0), b, Kind.CIRCLE)
    assert math.hypot(*p.normal) >= 1e-6


def test_sample_params_deterministic():
    assert sample_params(make_rng(9), ParamBounds(), Kind.CIRCLE) == sample_params(make_rng(9), ParamBounds(), Kind.CIRCLE)


def test_generate_trajectory_length_and_shape():
    p = TrajectoryParams(Kind.CIRCLE, (0, 0, 10), (1, 2, 3), 2.0, 0.5)
    traj = generate_trajectory(p, 2.0, 0.1)
    assert len(traj) == 21
    np.testing.assert_allclose(traj.timestamps, 0.1 * np.arange(21))
    d = np.linalg.norm(traj.points - np.asarray(p.center), axis=1)
    assert np.max(np.abs(d - 2.0)) < 1e-9
    with pytest.raises(InvalidDuration):
        generate_trajectory(p, 0.0, 0.1)


def test_lemniscate_parameters():
    assert LEMNISCATE.center == (-100.0, 0.0, 10.0)
    assert LEMNISCATE.normal == (1.0, 1.0, 1.0)
    assert (LEMNISCATE.radius, LEMNISCATE.omega, LEMNISCATE.kind) == (3.0, 0.8, Kind.INFINITY)
    traj = generate_trajectory(LEMNISCATE, 2 * math.pi / 0.8, 0.05)
    rel = traj.points - np.asarray(LEMNISCATE.center)
    n_hat = np.ones(3) / math.sqrt(3)
    assert np.max(np.abs(rel @ n_hat)) < 1e-9
    assert np.max(np.linalg.norm(rel, axis=1)) <= 3.0 * math.sqrt(2) + 1e-9
