from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import shoelace
from orbitrans import area as ar
from orbitrans.errors import InvalidCurve, ScenarioError, WindingAmbiguous
from orbitrans.orbifold import quotient, round_sphere, spindle
from orbitrans.groups import mirror

UNIFORM = ar.AreaForm.uniform()
BUMPY = ar.AreaForm(lambda s: 1.0 + np.sin(math.pi * s) ** 2, name="bumpy")


def test_area_form_primitive():
    assert UNIFORM.total == 2 * math.pi
    s = np.linspace(0, 1, 101)
    assert np.abs(UNIFORM.G(s) - s).max() < 1e-14
    # G(s) = 3s/2 - sin(2 pi s) / (4 pi)
    exact = 1.5 * s - np.sin(2 * math.pi * s) / (4 * math.pi)
    assert np.abs(BUMPY.G(s) - exact).max() < 1e-12
    assert np.all(np.diff(BUMPY.G(np.linspace(0, 1, 5000))) > 0)


def test_area_form_rejects_nonpositive_density():
    with pytest.raises(ScenarioError):
        ar.AreaForm(lambda s: s - 0.5)


def test_winding_examples():
    assert ar.winding(ar.SpindleCurve.latitude(0.4, 256)) == 1
    assert ar.winding(ar.SpindleCurve.latitude(0.4, 256, reverse=True)) == -1
    assert ar.winding(ar.SpindleCurve.circle(0.5, math.pi, 0.1)) == 0


def test_figure_eight_is_rejected():
    t = np.linspace(0, 2 * math.pi, 201)
    pts = np.column_stack([0.5 + 0.2 * np.sin(2 * t), math.pi + 0.3 * np.sin(t)])
    pts[-1] = pts[0]
    with pytest.raises(InvalidCurve):
        ar.SpindleCurve(pts)


def test_curve_invariants_enforced():
    with pytest.raises(InvalidCurve):
        ar.SpindleCurve([[0.5, 0.0], [0.6, 0.1], [0.5, 0.2], [0.4, 0.1]])  # not closed
    with pytest.raises(InvalidCurve):
        ar.SpindleCurve.latitude(5e-4)  # too close to N
    with pytest.raises(InvalidCurve):
        ar.SpindleCurve.circle(0.5, 1.0, 0.49999999)  # touches the S margin


def test_region_areas_latitude_quarter():
    r = ar.region_areas(ar.SpindleCurve.latitude(0.25), UNIFORM)
    assert r.separating
    assert abs(r.first - math.pi / 2) < 1e-6 and abs(r.second - 3 * math.pi / 2) < 1e-6
    r_rev = ar.region_areas(ar.SpindleCurve.latitude(0.25, reverse=True), UNIFORM)
    assert r_rev.first == r.first and r_rev.second == r.second


def test_tiny_square_area_against_shoelace_and_monte_carlo():
    sq = ar.SpindleCurve.square(0.5, math.pi, 0.01)
    r = ar.region_areas(sq, UNIFORM)
    # density 1: the area is the (s, phi) polygon area
    assert abs(r.second - shoelace(sq.samples)) < 1e-12
    assert abs(r.second - 1e-4) < 2e-6
    mc = ar.monte_carlo_areas(sq, UNIFORM, 10_000_000, seed=11)
    assert abs(mc.other - r.second) < 3 * mc.stderr


def test_additivity_is_exact():
    curves = [
        ar.SpindleCurve.latitude(0.1),
        ar.SpindleCurve.latitude(0.77),
        ar.SpindleCurve.circle(0.3, 2.0, 0.2),
        ar.SpindleCurve.square(0.5, 1.0, 0.3),
    ]
    for form in (UNIFORM, BUMPY):
        for c in curves:
            r = ar.region_areas(c, form)
            assert r.first + r.second == form.total


def test_displaceability_examples():
    sp = spindle(2, 3)
    v = ar.displaceability(sp, ar.SpindleCurve.latitude(0.5), UNIFORM)
    assert v.kind == "NonDisplaceable" and v.reason == "separates singular points"
    v = ar.displaceability(round_sphere(), ar.SpindleCurve.latitude(0.5), UNIFORM)
    assert v.kind == "NonDisplaceable" and v.reason == "monotone"
    loop = ar.SpindleCurve.circle(0.5, 1.0, 0.1)
    v = ar.displaceability(sp, loop, UNIFORM)
    assert v.kind == "Displaceable" and v.witness is not None
    assert ar.curve_distance(loop, v.witness.apply(loop)) > 0


def test_displaceability_area_obstruction_and_undetermined():
    sp = spindle(2, 3)
    # a fat loop enclosing more than half the area, both poles outside
    s = np.concatenate([np.full(64, 0.05), np.linspace(0.05, 0.95, 32, endpoint=False), np.full(64, 0.95), np.linspace(0.95, 0.05, 32, endpoint=False)])
    phi = np.concatenate([np.linspace(0.3, 6.0, 64, endpoint=False), np.full(32, 6.0), np.linspace(6.0, 0.3, 64, endpoint=False), np.full(32, 0.3)])
    big = ar.SpindleCurve(np.vstack([np.column_stack([s, phi]), [[0.05, 0.3]]]))
    r = ar.region_areas(big, UNIFORM)
    assert r.second > r.first
    assert ar.displaceability(sp, big, UNIFORM).kind == "NonDisplaceable"
    tol = 1.5 * abs(r.second - r.first)
    assert ar.displaceability(sp, big, UNIFORM, tol_area=tol).kind == "Undetermined"


def test_sphere_non_monotone_has_disjoint_witness():
    for s0 in (0.2, 0.35, 0.8):
        c = ar.SpindleCurve.latitude(s0)
        v = ar.displaceability(round_sphere(), c, UNIFORM)
        assert v.kind == "Displaceable"
        assert v.witness is not None and ar.witness_disjoint(c, v.witness)


def test_displaceability_needs_spindle():
    with pytest.raises(ScenarioError):
        ar.displaceability(quotient(mirror(2)), ar.SpindleCurve.latitude(0.5), UNIFORM)


def test_apply_rotation_examples():
    loop = ar.SpindleCurve.circle(0.5, 0.0, 0.1)
    assert np.array_equal(ar.apply_rotation(loop, 0.0).samples[:, 0], loop.samples[:, 0])
    dphi = ar.apply_rotation(loop, 0.0).samples[:, 1] - loop.samples[:, 1]
    assert np.abs(ar.wrap_angle(dphi)).max() < 1e-15
    lat = ar.SpindleCurve.latitude(0.3, 64)
    turned = ar.apply_rotation(lat, 2 * math.pi / 64 * 5)
    assert set(np.round(np.mod(turned.samples[:, 1], 2 * math.pi), 9)) <= set(np.round(np.mod(lat.samples[:, 1], 2 * math.pi), 9)) | {round(2 * math.pi, 9)}
    far = ar.apply_rotation(loop, math.pi)
    assert ar.curve_distance(loop, far) > 0


def test_ambiguous_winding():
    class Fake:
        def segments(self):
            return np.array([[0.5, 0.0, 0.5, 1.0], [0.5, 1.0, 0.5, 2.0000001]])

    with pytest.raises(WindingAmbiguous):
        ar.winding(Fake())


def test_separating_area_matches_monte_carlo():
    c = ar.SpindleCurve.circle(0.5, 1.0, 0.3)
    lat = ar.SpindleCurve(np.column_stack([0.4 + 0.1 * np.sin(3 * np.linspace(0, 2 * math.pi, 301)), np.linspace(0, 2 * math.pi, 301)]).tolist()[:-1] + [[0.4, 0.0]])
    for curve, form in ((lat, BUMPY), (c, BUMPY)):
        r = ar.region_areas(curve, form)
        mc = ar.monte_carlo_areas(curve, form, 1_000_000, seed=5)
        assert abs(mc.north - r.first) < 3 * mc.stderr


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0, 2 * math.pi), st.floats(0.02, 0.15), st.floats(-10, 10))
def test_rotation_invariance(s, phi, rad, angle):
    c = ar.SpindleCurve.circle(s, phi, rad, n=64)
    for form in (UNIFORM, BUMPY):
        a = ar.region_areas(c, form)
        b = ar.region_areas(ar.apply_rotation(c, angle), form)
        assert abs(a.first - b.first) < 1e-9 and abs(a.second - b.second) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0, 2 * math.pi), st.floats(0.02, 0.15), st.floats(0.05, 0.95))
def test_refinement_convergence(s, phi, rad, s0):
    for c in (ar.SpindleCurve.circle(s, phi, rad, n=128), ar.SpindleCurve.latitude(s0, 64)):
        for form in (UNIFORM, BUMPY):
            a = ar.region_areas(c, form)
            b = ar.region_areas(c.refined(2), form)
            assert abs(a.first - b.first) < 1e-6 * form.total


@settings(max_examples=20, deadline=None)
@given(st.floats(0.25, 0.75), st.floats(0, 2 * math.pi), st.floats(0.02, 0.2))
def test_displaceable_verdicts_carry_disjoint_witnesses(s, phi, rad):
    c = ar.SpindleCurve.circle(s, phi, rad, n=64)
    v = ar.displaceability(spindle(2, 3), c, UNIFORM)
    assert v.kind == "Displaceable"
    assert v.witness is not None and ar.witness_disjoint(c, v.witness)
