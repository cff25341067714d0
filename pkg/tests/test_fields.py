from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import expm_taylor
from orbitrans import groups as ga
from orbitrans.errors import StepTooLarge
from orbitrans.fields import (
    AveragedField,
    ConstantField,
    LinearField,
    TubeBumpField,
    average_field,
    check_equivariance,
    cutoff,
    flow,
    segment_distance,
)

GROUPS = [ga.mirror(2), ga.antipodal(2), ga.cyclic(6), ga.dihedral(3)]


def test_cutoff_profile():
    t = np.linspace(0, 0.5, 11)
    assert np.all(cutoff(t) == 1.0)
    assert np.all(cutoff(np.linspace(1.0, 3.0, 11)) == 0.0)
    mid = cutoff(np.linspace(0.5, 1.0, 101))
    assert np.all(np.diff(mid) <= 0)


def test_average_of_zero_is_zero():
    f = average_field(ConstantField(np.zeros(2)), ga.dihedral(3))
    Z = np.random.default_rng(0).normal(size=(50, 2))
    assert np.all(f(Z) == 0.0)


def test_constant_field_antipodal_average_vanishes():
    f = average_field(ConstantField(np.array([0.3, -1.2])), ga.antipodal(2))
    assert np.abs(f(np.random.default_rng(0).normal(size=(20, 2)))).max() == 0.0


def test_constant_field_mirror_average_projects_on_axis():
    f = average_field(ConstantField(np.array([0.7, 0.4])), ga.mirror(2))
    assert np.allclose(f(np.random.default_rng(0).normal(size=(20, 2))), [0.7, 0.0], atol=1e-15)


def test_constant_flow_inside_inner_tube():
    x, y = np.array([0.2, 0.1]), np.array([1.1, -0.4])
    f = TubeBumpField(x, y, 0.3)
    assert np.abs(flow(f, x, 1.0) - y).max() < 1e-12


def test_flow_outside_support_is_exact():
    f = TubeBumpField([0.0, 0.0], [1.0, 0.0], 0.2)
    z = np.array([0.5, 0.2000001])
    out = flow(f, z, 3.0)
    assert out is not z and np.array_equal(out, z)


def test_linear_flow_matches_taylor_exponential():
    rng = np.random.default_rng(5)
    for _ in range(5):
        A = rng.normal(size=(3, 3))
        A /= np.linalg.norm(A, 2)
        z0 = rng.normal(size=3)
        assert np.linalg.norm(flow(LinearField(A), z0, 1.0, 1e-3) - expm_taylor(A) @ z0) < 1e-8


def test_step_limit():
    with pytest.raises(StepTooLarge):
        flow(ConstantField(np.ones(2)), np.zeros(2), 1.0, 1e-8)


def test_equivariance_report_examples():
    base = TubeBumpField([0.5, 0.2], [1.5, 0.6], 0.3)
    for g in GROUPS:
        rep = check_equivariance(average_field(base, g), g, 500, seed=3)
        assert rep.passed and rep.residual < 1e-12
    v = np.array([0.0, 1.0])
    rep = check_equivariance(ConstantField(v), ga.mirror(2), 50)
    assert not rep.passed
    assert abs(rep.residual - np.linalg.norm(v - np.diag([1.0, -1.0]) @ v)) < 1e-12
    # a bump along the axis with a fat tube: un-averaged, it is not equivariant
    axis_bump = TubeBumpField([0.0, 0.0], [1.0, 0.3], 0.5)
    assert not check_equivariance(axis_bump, ga.mirror(2), 200).passed


def test_equivariance_sampling_is_seeded():
    f = TubeBumpField([0.0, 0.0], [1.0, 0.3], 0.5)
    a = check_equivariance(f, ga.mirror(2), 100, seed=7)
    b = check_equivariance(f, ga.mirror(2), 100, seed=7)
    assert a == b


def test_segment_distance_against_dense_sampling():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 1, 2001)
    for _ in range(20):
        a, b, c, e = rng.normal(size=(4, 3))
        P = a + t[:, None] * (b - a)
        Q = c + t[:, None] * (e - c)
        brute = np.min(np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2))
        assert segment_distance(a, b, c, e) <= brute + 1e-12
        assert brute - segment_distance(a, b, c, e) < 2e-3


def _tube(draw_pts):
    a, b, r = draw_pts
    return TubeBumpField(np.array(a), np.array(b), r)


coords = st.floats(-2, 2, allow_nan=False)
tube_strategy = st.tuples(st.tuples(coords, coords), st.tuples(coords, coords), st.floats(0.05, 1.0)).filter(
    lambda t: np.hypot(t[0][0] - t[1][0], t[0][1] - t[1][1]) > 1e-3
)


@settings(max_examples=40, deadline=None)
@given(tube_strategy, st.sampled_from(range(len(GROUPS))), st.integers(0, 2**31 - 1))
def test_averaging_is_a_projection(t, gi, seed):
    g = GROUPS[gi]
    once = average_field(_tube(t), g)
    twice = AveragedField(once, g)
    Z = np.random.default_rng(seed).uniform(-3, 3, size=(64, 2))
    assert np.abs(once(Z) - twice(Z)).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 0.5))
def test_average_equals_base_on_fixed_axis(a, b, rho):
    if abs(a - b) < 1e-3:
        return
    g = ga.mirror(2)
    base = TubeBumpField([a, 0.0], [b, 0.0], rho)
    avg = average_field(base, g)
    t = np.linspace(0, 1, 17)
    Z = np.column_stack([a + t * (b - a), np.zeros_like(t)])
    assert np.abs(avg(Z) - base(Z)).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(tube_strategy, st.sampled_from(range(len(GROUPS))), st.integers(0, 2**31 - 1))
def test_flow_commutes_with_action_and_reverses(t, gi, seed):
    g = GROUPS[gi]
    f = average_field(_tube(t), g)
    rng = np.random.default_rng(seed)
    a = np.array(t[0])
    Z = a + rng.normal(scale=0.3, size=(8, 2))
    out = flow(f, Z, 0.7, 1e-3)
    for m in g.matrices:
        assert np.abs(flow(f, Z @ m.T, 0.7, 1e-3) - out @ m.T).max() < 1e-8
    assert np.abs(flow(f, out, -0.7, 1e-3) - Z).max() < 1e-8


@settings(max_examples=25, deadline=None)
@given(tube_strategy, st.integers(0, 2**31 - 1))
def test_flow_is_support_local(t, seed):
    f = _tube(t)
    Z = np.random.default_rng(seed).uniform(-4, 4, size=(200, 2))
    a, b = np.array(t[0]), np.array(t[1])
    outside = np.array([segment_distance(z, z, a, b) >= f.tube_radius for z in Z])
    out = flow(f, Z[outside], 1.0, 1e-2)
    assert np.array_equal(out, Z[outside])


def test_rk4_single_constant_step_on_diagonal():
    v = np.array([math.sqrt(2.0), -1.0])
    f = TubeBumpField([0.0, 0.0], v, 0.5)
    assert np.abs(flow(f, np.zeros(2), 0.5, 1e-3) - 0.5 * v).max() < 1e-12
