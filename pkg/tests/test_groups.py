from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_closure, brute_subgroups
from orbitrans.errors import AmbiguousIsotropy, ClosureExceedsCap, NotEffective, NotOrthogonal
from orbitrans.groups import (
    antipodal,
    build_group,
    cyclic,
    dihedral,
    fixed_subspace,
    isotropy,
    mirror,
    rotation_matrix,
    subgroups,
    trivial,
)

REFLECT = np.diag([1.0, -1.0])


def _groups():
    swap3 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    cyc3 = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return {
        "trivial": trivial(2),
        "mirror": mirror(2),
        "antipodal": antipodal(2),
        "Z4": cyclic(4),
        "Z6": cyclic(6),
        "D6": dihedral(3),
        "D8": dihedral(4),
        "S3 on R3": build_group([swap3, cyc3]),
        "mirror R3": mirror(3),
    }


GROUPS = _groups()


def test_cyclic_closure_order():
    assert build_group([rotation_matrix(2 * math.pi / 4)]).order == 4


def test_mirror_order():
    assert build_group([REFLECT]).order == 2


def test_dihedral_matches_brute_closure():
    gens = [rotation_matrix(2 * math.pi / 3), REFLECT]
    g = build_group(gens)
    oracle = brute_closure(gens)
    assert g.order == len(oracle) == 6
    for m in oracle:
        assert g.index_of(m) is not None


@pytest.mark.parametrize("name", sorted(GROUPS))
def test_identity_first_and_table_exact(name):
    g = GROUPS[name]
    assert np.abs(g.matrices[0] - np.eye(g.dimension)).max() < 1e-9
    for i in range(g.order):
        assert g.inverse(i) == g.mult_table[i].tolist().index(0)
        for j in range(g.order):
            assert np.abs(g.matrices[i] @ g.matrices[j] - g.matrices[g.mult_table[i, j]]).max() < 1e-9
    near_identity = [k for k in range(1, g.order) if np.abs(g.matrices[k] - np.eye(g.dimension)).max() < 1e-9]
    assert near_identity == []


def test_build_is_deterministic_and_order_independent():
    a = build_group([rotation_matrix(2 * math.pi / 3), REFLECT])
    b = build_group([REFLECT, rotation_matrix(2 * math.pi / 3)])
    assert np.array_equal(a.matrices, b.matrices)
    assert np.array_equal(a.mult_table, b.mult_table)


def test_not_orthogonal():
    with pytest.raises(NotOrthogonal):
        build_group([np.diag([2.0, 1.0])])


def test_closure_exceeds_cap():
    with pytest.raises(ClosureExceedsCap):
        build_group([rotation_matrix(1.0)], cap=64)


def test_near_coincident_elements_are_not_effective():
    with pytest.raises(NotEffective):
        build_group([rotation_matrix(1e-7)])


def test_fixed_subspace_examples():
    for p in (2, 3, 5):
        g = cyclic(p)
        assert fixed_subspace(g, range(g.order)).dimension == 0
    m = mirror(2)
    f = fixed_subspace(m, [0, 1])
    assert f.dimension == 1
    assert np.allclose(np.abs(f.basis[0]), [1.0, 0.0])
    assert fixed_subspace(m, [0]).dimension == 2


def test_isotropy_examples():
    z4 = cyclic(4)
    assert isotropy(z4, [0.0, 0.0]) == (0, 1, 2, 3)
    assert isotropy(z4, [1.0, 0.0]) == (0,)
    assert isotropy(mirror(2), [2.0, 0.0]) == (0, 1)


def test_isotropy_ambiguity_band():
    with pytest.raises(AmbiguousIsotropy):
        isotropy(mirror(2), [1.0, 3e-9])


def test_subgroup_counts():
    assert [len(h) for h in subgroups(cyclic(4))] == [1, 2, 4]
    assert len(subgroups(mirror(2))) == 2
    assert [len(h) for h in subgroups(dihedral(3))] == [1, 2, 2, 2, 3, 6]


@pytest.mark.parametrize("name", ["mirror", "Z4", "Z6", "D6", "D8", "S3 on R3"])
def test_subgroups_match_brute_subset_closure(name):
    g = GROUPS[name]
    ours = {frozenset(h) for h in subgroups(g)}
    oracle = set(brute_subgroups(list(g.matrices)))
    assert ours == oracle


@pytest.mark.parametrize("name", sorted(GROUPS))
def test_fixed_subspace_monotone_over_lattice(name):
    g = GROUPS[name]
    subs = subgroups(g)
    fixed = {h: fixed_subspace(g, h) for h in subs}
    for h in subs:
        for k in subs:
            if set(h) <= set(k):
                assert fixed[h].contains(fixed[k])
                assert fixed[h].dimension >= fixed[k].dimension


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["mirror", "Z4", "Z6", "D6", "D8"]),
    st.floats(-3, 3, allow_nan=False),
    st.floats(-3, 3, allow_nan=False),
    st.booleans(),
)
def test_isotropy_conjugates_along_orbit(name, x, y, snap):
    g = GROUPS[name]
    z = np.array([x, 0.0]) if snap else np.array([x, y])
    try:
        h = isotropy(g, z)
    except AmbiguousIsotropy:
        return
    for k in range(g.order):
        assert isotropy(g, g.act(k, z)) == g.conjugate_subgroup(k, h)
