"""Orbifolds presented by linear charts, and their singular stratification.

Three families are supported, each with closed-form chart transitions:

* ``quotient``: one chart ``R^d / G`` (optionally restricted to a ball);
* ``spindle``: the (p, q) spindle, two planar charts with cyclic rotation
  groups of orders p and q around the north and south cone points;
* ``sphere``: the round sphere, i.e. the spindle with p = q = 1.

Spindle charts share the underlying coordinates ``(s, phi)`` on the smooth
part, with ``s`` in (0, 1) increasing from north to south. A north-chart lift
``z`` sits at ``s = |z| / (1 + |z|)`` and ``phi = p arg z``; a south-chart lift
``w`` at ``s = 1 / (1 + |w|)`` and ``phi = -q arg w``. The transition on the
overlap is therefore ``|w| = 1 / |z|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from . import groups as ga
from .errors import AmbiguousIsotropy, DifferentComponents, NotInAnyComponent, OutsideOverlap, ScenarioError
from .groups import TOL, FiniteMatrixGroup, Subspace

TWO_PI = 2.0 * math.pi
SPINDLE_CHART_RADIUS = 3.0


@dataclass(frozen=True, eq=False)
class Chart:
    id: int
    dimension: int
    group: FiniteMatrixGroup
    radius: float | None = None  # None: all of R^d
    center_underlying: str = "origin"

    def contains(self, lift, margin: float = 0.0) -> bool:
        if self.radius is None:
            return True
        return float(np.linalg.norm(lift)) < self.radius - margin

    def boundary_distance(self, lift) -> float:
        if self.radius is None:
            return math.inf
        return self.radius - float(np.linalg.norm(lift))


@dataclass(frozen=True, eq=False)
class OrbifoldPoint:
    chart_id: int
    lift: np.ndarray

    def __post_init__(self):
        arr = np.array(self.lift, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "lift", arr)

    def __repr__(self) -> str:
        return f"OrbifoldPoint(chart_id={self.chart_id}, lift={self.lift.tolist()})"


@dataclass(frozen=True, eq=False)
class StratumComponent:
    chart_id: int
    subgroup: tuple[int, ...]
    subspace: Subspace
    walls: np.ndarray  # (k, d) unit normals lying in the subspace
    chamber_sign_vector: tuple[int, ...]
    sdim: int
    representative: np.ndarray
    label: int = -1
    orbit: int = -1  # smallest label among components with the same image in the orbifold

    @property
    def isotropy_order(self) -> int:
        return len(self.subgroup)

    def signs(self, lift) -> np.ndarray:
        return self.walls @ np.asarray(lift, dtype=float)

    def in_chamber(self, lift, tol: float = TOL) -> bool:
        """Strict chamber test; raises when the lift is within the wall band."""
        z = np.asarray(lift, dtype=float)
        if self.walls.shape[0] == 0:
            return True
        vals = self.signs(z)
        if np.any(np.abs(vals) < 10.0 * tol * (1.0 + np.linalg.norm(z))):
            raise NotInAnyComponent(f"lift {z.tolist()} lies on a wall of its stratum")
        return bool(np.all(np.sign(vals) == np.array(self.chamber_sign_vector)))

    def wall_clearance(self, lift) -> float:
        if self.walls.shape[0] == 0:
            return math.inf
        return float(np.min(np.abs(self.signs(lift))))


@dataclass(frozen=True)
class RegularComponent:
    """Marker for the (connected) regular part of a connected orbifold."""

    dimension: int
    sdim: int = field(init=False)
    orbit: int = -1

    def __post_init__(self):
        object.__setattr__(self, "sdim", self.dimension)


class Orbifold:
    def __init__(self, family: str, charts: list[Chart], p: int | None = None, q: int | None = None):
        self.family = family
        self.charts = list(charts)
        self.p = p
        self.q = q
        self.dimension = charts[0].dimension
        if family == "quotient" and len(charts) != 1:
            raise ScenarioError("a single-chart quotient has exactly one chart")
        if family in ("spindle", "sphere"):
            if len(charts) != 2 or math.gcd(p, q) != 1 or p < 1 or q < 1:
                raise ScenarioError("spindle needs coprime positive p, q and two charts")

    def __repr__(self) -> str:
        if self.family == "quotient":
            return f"Orbifold(quotient, {self.charts[0].group!r})"
        return f"Orbifold({self.family}, p={self.p}, q={self.q})"

    def chart(self, chart_id: int) -> Chart:
        return self.charts[chart_id]

    def point(self, chart_id: int, lift) -> OrbifoldPoint:
        c = self.charts[chart_id]
        pt = OrbifoldPoint(chart_id, lift)
        if pt.lift.shape != (c.dimension,) or not np.all(np.isfinite(pt.lift)):
            raise ScenarioError(f"lift {pt.lift.tolist()} does not fit chart {chart_id}")
        if not c.contains(pt.lift):
            raise ScenarioError(f"lift {pt.lift.tolist()} lies outside chart {chart_id}")
        return pt

    @property
    def is_spindle_like(self) -> bool:
        return self.family in ("spindle", "sphere")

    # ----------------------------------------------------------------------
    # underlying coordinates

    def underlying(self, point: OrbifoldPoint) -> tuple[float, float]:
        """``(s, phi)`` of a spindle point; phi is 0 at the poles."""
        if not self.is_spindle_like:
            raise ScenarioError("underlying (s, phi) coordinates exist only on spindles")
        z = point.lift
        r = float(np.hypot(z[0], z[1]))
        if point.chart_id == 0:
            s = r / (1.0 + r)
            phi = (self.p * math.atan2(z[1], z[0])) % TWO_PI if r > 0 else 0.0
        else:
            s = 1.0 / (1.0 + r)
            phi = (-self.q * math.atan2(z[1], z[0])) % TWO_PI if r > 0 else 0.0
        return s, phi

    def from_underlying(self, s: float, phi: float, chart_id: int | None = None) -> OrbifoldPoint:
        if not self.is_spindle_like:
            raise ScenarioError("underlying (s, phi) coordinates exist only on spindles")
        if not 0.0 <= s <= 1.0:
            raise ScenarioError(f"s = {s} outside [0, 1]")
        if chart_id is None:
            chart_id = 0 if s <= 0.5 else 1
        if chart_id == 0:
            if s >= 1.0:
                raise OutsideOverlap("the south pole is not in the north chart")
            r = s / (1.0 - s)
            ang = (phi % TWO_PI) / self.p
        else:
            if s <= 0.0:
                raise OutsideOverlap("the north pole is not in the south chart")
            r = (1.0 - s) / s
            ang = (-(phi % TWO_PI) / self.q) % (TWO_PI / self.q)
        lift = np.array([r * math.cos(ang), r * math.sin(ang)])
        if not self.charts[chart_id].contains(lift):
            raise OutsideOverlap(f"(s, phi) = ({s}, {phi}) lies outside chart {chart_id}")
        return OrbifoldPoint(chart_id, lift)

    def relift(self, point: OrbifoldPoint, target_chart_id: int) -> OrbifoldPoint:
        """A lift of the same underlying point in another chart."""
        if target_chart_id == point.chart_id:
            return point
        if not self.is_spindle_like:
            raise OutsideOverlap(f"chart {target_chart_id} does not exist")
        z = point.lift
        r = float(np.hypot(z[0], z[1]))
        target = self.charts[target_chart_id]
        if r == 0.0 or not target.contains(np.array([1.0 / r, 0.0])):
            raise OutsideOverlap(f"{point!r} is outside the overlap with chart {target_chart_id}")
        alpha = math.atan2(z[1], z[0])
        if point.chart_id == 0:
            beta = (-alpha * self.p / self.q) % (TWO_PI / self.q)
        else:
            beta = (-alpha * self.q / self.p) % (TWO_PI / self.p)
        lift = np.array([math.cos(beta) / r, math.sin(beta) / r])
        return OrbifoldPoint(target_chart_id, lift)

    def try_relift(self, point: OrbifoldPoint, target_chart_id: int) -> OrbifoldPoint | None:
        try:
            return self.relift(point, target_chart_id)
        except OutsideOverlap:
            return None

    def same_point(self, x: OrbifoldPoint, y: OrbifoldPoint, tol: float = 1e-9) -> bool:
        y2 = self.try_relift(y, x.chart_id)
        if y2 is None:
            return False
        group = self.charts[x.chart_id].group
        return bool(np.min(np.linalg.norm(group.orbit(y2.lift) - x.lift[None], axis=1)) < tol * (1 + np.linalg.norm(x.lift)))

    # ----------------------------------------------------------------------
    # stratification caches

    @cached_property
    def _subgroups(self) -> dict[int, list[tuple[int, ...]]]:
        return {c.id: ga.subgroups(c.group) for c in self.charts}

    @cached_property
    def _fixed(self) -> dict[int, dict[tuple[int, ...], Subspace]]:
        return {c.id: {h: ga.fixed_subspace(c.group, h) for h in self._subgroups[c.id]} for c in self.charts}

    @cached_property
    def strata(self) -> list[StratumComponent]:
        return _stratify(self)

    def regular_walls(self, chart_id: int) -> np.ndarray:
        """Unit normals of the reflection hyperplanes of a chart group."""
        return self._regular_walls[chart_id]

    @cached_property
    def _regular_walls(self) -> dict[int, np.ndarray]:
        out = {}
        for c in self.charts:
            d = c.dimension
            trivial = ga.fixed_subspace(c.group, (0,))
            out[c.id] = _walls_within(trivial, [s for h, s in self._fixed[c.id].items() if len(h) > 1 and s.dimension == d - 1], d)
        return out


def quotient(group: FiniteMatrixGroup, radius: float | None = None) -> Orbifold:
    return Orbifold("quotient", [Chart(0, group.dimension, group, radius, "origin")])


def spindle(p: int, q: int, chart_radius: float = SPINDLE_CHART_RADIUS) -> Orbifold:
    family = "sphere" if p == q == 1 else "spindle"
    charts = [
        Chart(0, 2, ga.cyclic(p) if p > 1 else ga.trivial(2), chart_radius, "N"),
        Chart(1, 2, ga.cyclic(q) if q > 1 else ga.trivial(2), chart_radius, "S"),
    ]
    return Orbifold(family, charts, p, q)


def round_sphere(chart_radius: float = SPINDLE_CHART_RADIUS) -> Orbifold:
    return spindle(1, 1, chart_radius)


# --------------------------------------------------------------------------
# stratification


def _walls_within(fix: Subspace, hyperplanes: list[Subspace], d: int) -> np.ndarray:
    """Deduplicated unit normals (ambient coordinates, inside ``fix``) of the
    codimension-one subspaces ``hyperplanes`` of ``fix``."""
    normals: list[np.ndarray] = []
    for sub in hyperplanes:
        proj = np.eye(d) - sub.basis.T @ sub.basis
        # a vector of fix orthogonal to sub
        cand = proj @ fix.basis.T
        norms = np.linalg.norm(cand, axis=0)
        k = int(np.argmax(norms))
        n = cand[:, k] / norms[k]
        n = fix.embed(fix.coordinates(n))
        n /= np.linalg.norm(n)
        lead = n[np.flatnonzero(np.abs(n) > 1e-9)[0]]
        n = n * np.sign(lead)
        if not any(np.abs(n - m).max() < 1e-9 for m in normals):
            normals.append(n)
    if not normals:
        return np.zeros((0, d))
    return np.array(sorted(normals, key=lambda v: tuple(np.round(v, 9))))


def _chamber_center(normals_local: np.ndarray, signs) -> tuple[float, np.ndarray]:
    """Depth and center of the chamber ``sign_i <n_i, y> > 0`` inside the unit box."""
    k, m = normals_local.shape
    # variables (y_1..y_m, t); maximize t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.zeros((k, m + 1))
    for i in range(k):
        a_ub[i, :m] = -signs[i] * normals_local[i]
        a_ub[i, m] = 1.0
    bounds = [(-1.0, 1.0)] * m + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(k), bounds=bounds, method="highs")
    if res.status != 0:
        return -math.inf, np.zeros(m)
    return float(res.x[-1]), res.x[:m]


def _enumerate_chambers(normals_local: np.ndarray, m: int) -> list[tuple[tuple[int, ...], np.ndarray, float]]:
    chambers: list[tuple[tuple[int, ...], np.ndarray, float]] = [((), np.zeros(m), 1.0)]
    for i in range(normals_local.shape[0]):
        refined = []
        for signs, _, _ in chambers:
            for s in (1, -1):
                cand = signs + (s,)
                depth, y = _chamber_center(normals_local[: i + 1], cand)
                if depth > 1e-9:
                    refined.append((cand, y, depth))
        chambers = refined
    return chambers


def _representative(chart: Chart, subgroup, fix: Subspace, walls, signs, y, depth) -> np.ndarray:
    rng = np.random.default_rng(12345)
    scale = 1.0 if chart.radius is None else min(1.0, 0.5 * chart.radius)
    m = fix.dimension
    if m == 0:
        return np.zeros(chart.dimension)
    for attempt in range(64):
        cand = y if attempt == 0 else y + 0.5 * depth * rng.uniform(-1.0, 1.0, size=m) / math.sqrt(m)
        norm = np.linalg.norm(cand)
        if norm < 1e-12:
            continue
        z = fix.embed(cand / norm * scale)
        if walls.shape[0] and not np.all(np.sign(walls @ z) == np.array(signs)):
            continue
        try:
            if ga.isotropy(chart.group, z) == tuple(subgroup):
                return z
        except AmbiguousIsotropy:
            continue
    raise RuntimeError(f"no representative found for isotropy type {subgroup}")


def _stratify(orb: Orbifold) -> list[StratumComponent]:
    comps: list[StratumComponent] = []
    for chart in orb.charts:
        d = chart.dimension
        subs = orb._subgroups[chart.id]
        fixed = orb._fixed[chart.id]
        for h in subs:
            if len(h) == 1:
                continue
            fix = fixed[h]
            bigger = [k for k in subs if len(k) > len(h) and set(k).issuperset(h)]
            if any(fixed[k].dimension == fix.dimension for k in bigger):
                continue  # never an exact stabilizer
            hyper = [fixed[k] for k in bigger if fixed[k].dimension == fix.dimension - 1]
            walls = _walls_within(fix, hyper, d)
            local = walls @ fix.basis.T if walls.shape[0] else np.zeros((0, fix.dimension))
            for signs, y, depth in _enumerate_chambers(local, fix.dimension):
                rep = _representative(chart, h, fix, walls, signs, y, depth)
                comps.append(
                    StratumComponent(chart.id, tuple(h), fix, walls, tuple(signs), fix.dimension, rep)
                )
    comps.sort(key=lambda c: (c.chart_id, c.sdim, len(c.subgroup), c.subgroup, c.chamber_sign_vector))
    labelled = [
        StratumComponent(c.chart_id, c.subgroup, c.subspace, c.walls, c.chamber_sign_vector, c.sdim, c.representative, i)
        for i, c in enumerate(comps)
    ]

    # union components identified by the group action or by chart transitions
    parent = list(range(len(labelled)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        a, b = find(i), find(j)
        if a != b:
            parent[max(a, b)] = min(a, b)

    for c in labelled:
        group = orb.charts[c.chart_id].group
        for img in group.orbit(c.representative):
            j = _locate(labelled, c.chart_id, group, img)
            if j is not None:
                union(c.label, j)
        for other in orb.charts:
            if other.id == c.chart_id:
                continue
            moved = orb.try_relift(OrbifoldPoint(c.chart_id, c.representative), other.id)
            if moved is not None:
                j = _locate(labelled, other.id, other.group, moved.lift)
                if j is not None:
                    union(c.label, j)
    return [
        StratumComponent(c.chart_id, c.subgroup, c.subspace, c.walls, c.chamber_sign_vector, c.sdim, c.representative, c.label, find(c.label))
        for c in labelled
    ]


def _locate(comps, chart_id, group, lift) -> int | None:
    h = ga.isotropy(group, lift)
    if len(h) == 1:
        return None
    for c in comps:
        if c.chart_id == chart_id and c.subgroup == h and c.in_chamber(lift):
            return c.label
    return None


# --------------------------------------------------------------------------
# public operations


def stratify(orb: Orbifold) -> list[StratumComponent]:
    """Connected components of the singular strata, chart by chart.

    Components related by the chart group or by a chart transition share the
    same ``orbit`` id; they are one component of the orbifold's stratum.
    """
    return list(orb.strata)


def sdim(orb: Orbifold, point: OrbifoldPoint) -> int:
    group = orb.charts[point.chart_id].group
    return orb._fixed[point.chart_id][ga.isotropy(group, point.lift)].dimension


def component_of(orb: Orbifold, point: OrbifoldPoint):
    group = orb.charts[point.chart_id].group
    h = ga.isotropy(group, point.lift)
    if len(h) == 1:
        return RegularComponent(orb.dimension)
    for c in orb.strata:
        if c.chart_id == point.chart_id and c.subgroup == h and c.in_chamber(point.lift):
            return c
    raise NotInAnyComponent(f"{point!r} is not in any stratum component")


def same_component(orb: Orbifold, x: OrbifoldPoint, y: OrbifoldPoint) -> bool:
    cx = component_of(orb, x)
    cy = component_of(orb, y)
    if isinstance(cx, RegularComponent) or isinstance(cy, RegularComponent):
        # the regular part of R^d / G and of a spindle is connected
        return isinstance(cx, RegularComponent) and isinstance(cy, RegularComponent)
    return cx.orbit == cy.orbit


def regular_chamber(orb: Orbifold, chart_id: int, lift) -> tuple[int, ...]:
    walls = orb.regular_walls(chart_id)
    return tuple(int(v) for v in np.sign(walls @ np.asarray(lift, dtype=float)))


def aligned_lift(orb: Orbifold, x: OrbifoldPoint, y: OrbifoldPoint) -> np.ndarray:
    """Lift of ``y`` in ``x``'s chart lying in the chamber of ``x``'s lift.

    Among admissible group images the one closest to ``x`` is returned, so the
    straight segment between them is as short as possible.
    """
    y2 = orb.try_relift(y, x.chart_id)
    if y2 is None:
        raise OutsideOverlap(f"{y!r} has no lift in chart {x.chart_id}")
    group = orb.charts[x.chart_id].group
    cx = component_of(orb, x)
    candidates = []
    for img in group.orbit(y2.lift):
        if isinstance(cx, RegularComponent):
            if len(ga.isotropy(group, img)) != 1:
                continue
            if regular_chamber(orb, x.chart_id, img) != regular_chamber(orb, x.chart_id, x.lift):
                continue
        else:
            if ga.isotropy(group, img) != cx.subgroup or not cx.in_chamber(img):
                continue
        candidates.append(img)
    if not candidates:
        raise DifferentComponents(f"{x!r} and {y!r} lie in different stratum components")
    dists = [float(np.linalg.norm(c - x.lift)) for c in candidates]
    return candidates[int(np.argmin(dists))]
