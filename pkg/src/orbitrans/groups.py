"""Finite orthogonal matrix groups acting linearly on R^d."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AmbiguousIsotropy, ClosureExceedsCap, NotEffective, NotOrthogonal

TOL = 1e-9
DEFAULT_CAP = 512
# two closure elements closer than this but farther than TOL cannot be told apart reliably
_NEAR_COINCIDENT = 1e-6


@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray
    index: int


@dataclass(frozen=True)
class Subspace:
    dimension: int
    basis: np.ndarray  # (dimension, d), orthonormal rows
    offset: np.ndarray

    @property
    def ambient_dimension(self) -> int:
        return self.offset.shape[0]

    def coordinates(self, z):
        return (np.asarray(z, dtype=float) - self.offset) @ self.basis.T

    def embed(self, y):
        return self.offset + np.asarray(y, dtype=float) @ self.basis

    def distance(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(z - self.embed(self.coordinates(z))))

    def contains(self, other: "Subspace", tol: float = 1e-9) -> bool:
        if other.dimension > self.dimension:
            return False
        return all(self.distance(self.offset + v) < tol for v in other.basis)


class FiniteMatrixGroup:
    """A finite group of d x d orthogonal matrices with its Cayley table.

    Index 0 is always the identity. Instances are immutable after
    construction; use :func:`build_group` or the named constructors.
    """

    def __init__(self, matrices: np.ndarray, mult_table: np.ndarray, inverse_table: np.ndarray):
        self.matrices = np.array(matrices, dtype=float)
        self.mult_table = np.array(mult_table, dtype=np.int64)
        self.inverse_table = np.array(inverse_table, dtype=np.int64)
        for a in (self.matrices, self.mult_table, self.inverse_table):
            a.setflags(write=False)
        self.dimension = int(self.matrices.shape[1])

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def order(self) -> int:
        return len(self)

    @cached_property
    def elements(self) -> tuple[GroupElement, ...]:
        return tuple(GroupElement(m, i) for i, m in enumerate(self.matrices))

    def __repr__(self) -> str:
        return f"FiniteMatrixGroup(order={self.order}, dimension={self.dimension})"

    def multiply(self, i: int, j: int) -> int:
        return int(self.mult_table[i, j])

    def inverse(self, i: int) -> int:
        return int(self.inverse_table[i])

    def conjugate(self, g: int, h: int) -> int:
        """Index of ``g h g^-1``."""
        return int(self.mult_table[self.mult_table[g, h], self.inverse_table[g]])

    def index_of(self, matrix, tol: float = TOL) -> int | None:
        diff = np.abs(self.matrices - np.asarray(matrix, dtype=float)[None]).reshape(len(self), -1).max(axis=1)
        k = int(np.argmin(diff))
        return k if diff[k] < tol else None

    def closure(self, indices) -> tuple[int, ...]:
        """Subgroup generated by ``indices``, as a sorted index tuple."""
        gens = sorted(set(int(i) for i in indices) - {0})
        members = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for a in frontier:
                for g in gens:
                    b = int(self.mult_table[a, g])
                    if b not in members:
                        members.add(b)
                        nxt.append(b)
            frontier = nxt
        return tuple(sorted(members))

    def is_subgroup(self, indices) -> bool:
        s = set(int(i) for i in indices)
        if 0 not in s:
            return False
        return all(int(self.mult_table[a, b]) in s for a in s for b in s)

    def conjugate_subgroup(self, g: int, subgroup) -> tuple[int, ...]:
        return tuple(sorted(self.conjugate(g, h) for h in subgroup))

    def act(self, i: int, z):
        return np.asarray(z, dtype=float) @ self.matrices[i].T

    def orbit(self, z) -> np.ndarray:
        """All images ``g z`` as a (|G|, d) array, in element order."""
        return np.einsum("gij,j->gi", self.matrices, np.asarray(z, dtype=float))


def _orthogonality_defect(m: np.ndarray) -> float:
    return float(np.abs(m.T @ m - np.eye(m.shape[0])).max())


def _sort_key(m: np.ndarray) -> tuple:
    return tuple((np.round(m, 12) + 0.0).ravel().tolist())


def build_group(generators, cap: int = DEFAULT_CAP, dimension: int | None = None) -> FiniteMatrixGroup:
    """Close ``generators`` under multiplication.

    Elements are ordered identity first, then lexicographically on entries
    rounded to 12 decimals, so equal generator sets give identical indices.
    """
    gens = [np.array(g, dtype=float) for g in generators]
    if not gens:
        if dimension is None:
            raise NotOrthogonal("cannot infer dimension from an empty generator list")
        gens = [np.eye(dimension)]
    d = gens[0].shape[0]
    for g in gens:
        if g.ndim != 2 or g.shape != (d, d):
            raise NotOrthogonal(f"generator of shape {g.shape} is not {d}x{d}")
        if not np.all(np.isfinite(g)) or _orthogonality_defect(g) >= TOL:
            raise NotOrthogonal("generator fails the orthogonality check M^T M = I")

    elements = [np.eye(d)]
    frontier = [np.eye(d)]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                prod = g @ e
                stack = np.array(elements)
                dist = np.abs(stack - prod[None]).reshape(len(elements), -1).max(axis=1)
                k = int(np.argmin(dist))
                if dist[k] < TOL:
                    continue
                if dist[k] < _NEAR_COINCIDENT:
                    raise NotEffective(
                        f"closure elements coincide to {dist[k]:.3g}; the action is not reliably effective"
                    )
                elements.append(prod)
                nxt.append(prod)
                if len(elements) > cap:
                    raise ClosureExceedsCap(f"closure exceeds cap of {cap} elements")
        frontier = nxt

    rest = sorted(elements[1:], key=_sort_key)
    mats = np.array([np.eye(d)] + rest)
    n = len(mats)

    buckets: dict[tuple, list[int]] = {}
    for i, m in enumerate(mats):
        buckets.setdefault(tuple(np.round(m, 6).ravel() + 0.0), []).append(i)

    def lookup(m):
        for k in buckets.get(tuple(np.round(m, 6).ravel() + 0.0), ()):
            if np.abs(mats[k] - m).max() < TOL:
                return k
        diff = np.abs(mats - m[None]).reshape(n, -1).max(axis=1)
        k = int(np.argmin(diff))
        if diff[k] >= TOL:
            raise NotEffective("product left the closure; generators are numerically inconsistent")
        return k

    table = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        prods = np.einsum("ij,njk->nik", mats[i], mats)
        for j in range(n):
            table[i, j] = lookup(prods[j])
    inverse = np.array([int(np.flatnonzero(table[i] == 0)[0]) for i in range(n)])
    return FiniteMatrixGroup(mats, table, inverse)


# --------------------------------------------------------------------------
# named families


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def cyclic(n: int) -> FiniteMatrixGroup:
    """Rotations of the plane by multiples of 2 pi / n."""
    return build_group([rotation_matrix(2.0 * math.pi / n)], dimension=2)


def dihedral(n: int) -> FiniteMatrixGroup:
    """Symmetries of the regular n-gon; order 2n."""
    return build_group([rotation_matrix(2.0 * math.pi / n), np.diag([1.0, -1.0])])


def mirror(d: int = 2) -> FiniteMatrixGroup:
    """Reflection in the last coordinate."""
    m = np.eye(d)
    m[-1, -1] = -1.0
    return build_group([m])


def antipodal(d: int = 2) -> FiniteMatrixGroup:
    return build_group([-np.eye(d)])


def trivial(d: int = 2) -> FiniteMatrixGroup:
    return build_group([], dimension=d)


NAMED_FAMILIES = {
    "cyclic": cyclic,
    "dihedral": dihedral,
    "mirror": mirror,
    "antipodal": antipodal,
    "trivial": trivial,
}


# --------------------------------------------------------------------------
# operations


def fixed_subspace(group: FiniteMatrixGroup, subset) -> Subspace:
    """Orthonormal basis of the common fixed space of the listed elements."""
    d = group.dimension
    idx = [int(i) for i in subset]
    stacked = np.concatenate([group.matrices[i] - np.eye(d) for i in idx], axis=0)
    if not np.any(np.abs(stacked) >= TOL):
        return Subspace(d, np.eye(d), np.zeros(d))
    _, sing, vt = np.linalg.svd(stacked)
    sing = np.concatenate([sing, np.zeros(d - sing.shape[0])])
    basis = vt[sing < TOL]
    if basis.shape[0] == 1:
        v = basis[0]
        lead = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        basis = basis * np.sign(lead)
    return Subspace(int(basis.shape[0]), basis, np.zeros(d))


def isotropy(group: FiniteMatrixGroup, lift, tol: float = TOL) -> tuple[int, ...]:
    """Indices of the elements fixing ``lift``, relative to ``1 + |lift|``.

    Raises AmbiguousIsotropy when some element moves the point by an amount
    in ``[tol, 10 tol)``: too close to a larger stratum to classify.
    """
    z = np.asarray(lift, dtype=float)
    moved = np.linalg.norm(group.orbit(z) - z[None], axis=1) / (1.0 + np.linalg.norm(z))
    ambiguous = (moved >= tol) & (moved < 10.0 * tol)
    if np.any(ambiguous):
        raise AmbiguousIsotropy(
            f"point {z.tolist()} lies within {10 * tol:g} of a larger stratum (displacement {moved[ambiguous].min():.3g})"
        )
    result = tuple(int(i) for i in np.flatnonzero(moved < tol))
    if not group.is_subgroup(result):
        raise AmbiguousIsotropy(f"stabilizer of {z.tolist()} is not closed under multiplication")
    return result


def subgroups(group: FiniteMatrixGroup) -> list[tuple[int, ...]]:
    """Every subgroup, sorted by order then lexicographically.

    Each subgroup is a join of cyclic subgroups, so joining cyclic subgroups
    onto already-found subgroups until nothing new appears reaches them all.
    """
    cyclic_subs = sorted({group.closure([g]) for g in range(len(group))})
    found = set(cyclic_subs)
    frontier = list(cyclic_subs)
    while frontier:
        nxt = []
        for h in frontier:
            hs = set(h)
            for c in cyclic_subs:
                if hs.issuperset(c):
                    continue
                j = group.closure(hs | set(c))
                if j not in found:
                    found.add(j)
                    nxt.append(j)
        frontier = nxt
    return sorted(found, key=lambda s: (len(s), s))
