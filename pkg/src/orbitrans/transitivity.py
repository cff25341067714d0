"""Compactly supported orbifold diffeomorphisms built from flow atoms.

A diffeomorphism is a word of atoms. Each atom is the flow, for a given
duration, of a group-equivariant field living in one chart: the equivariant
extension of a tube bump along a straight segment. Points outside an atom's
support are returned bit-for-bit unchanged, so words compose exactly away
from the supports and the isotopy parameter is just a rescaled duration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import groups as ga
from . import kernels
from . import orbifold as ob
from .errors import (
    AmbiguousIsotropy,
    AmbiguousMatch,
    DifferentComponents,
    MathematicalFailure,
    NoEquivariantMatch,
    NotInAnyComponent,
    OutsideAllCharts,
    PathBlocked,
    ScenarioError,
    Sigma1Collision,
    TubeTooTight,
)
from .fields import DEFAULT_MAX_STEP, AveragedField, TubeBumpField, flow, segment_distance
from .groups import FiniteMatrixGroup
from .orbifold import Orbifold, OrbifoldPoint, RegularComponent

MIN_TUBE_RADIUS = 1e-6
DETOUR_ATTEMPTS = 16
MAX_PIECES = 512
DIFFEO_FORMAT = "orbitrans.diffeo"
DIFFEO_VERSION = 1


@dataclass(frozen=True, eq=False)
class LocalDiffeoAtom:
    chart_id: int
    field: object  # AveragedField for genuine atoms; any tube field for fixtures
    duration: float = 1.0

    @property
    def segment(self) -> tuple[np.ndarray, np.ndarray]:
        base = self.field.base if isinstance(self.field, AveragedField) else self.field
        return base.start, base.end

    @property
    def tube_radius(self) -> float:
        return self.field.tube_radius

    @cached_property
    def _images(self):
        starts, ends, _, _ = self.field.tube_images()
        return starts, ends

    def images(self):
        """Segments carrying the support (all group images for averaged atoms)."""
        return self._images

    def moves_many(self, lifts) -> np.ndarray:
        """Boolean mask of the rows lying inside the support."""
        starts, ends = self._images
        Z = np.atleast_2d(np.asarray(lifts, dtype=float))
        return (kernels.point_segment_distances(Z, starts, ends) < self.tube_radius).any(axis=1)

    def moves(self, lift) -> bool:
        return bool(self.moves_many(lift)[0])


def _pt_seg(p, a, b) -> float:
    d = b - a
    dd = d @ d
    t = 0.0 if dd == 0.0 else min(1.0, max(0.0, ((p - a) @ d) / dd))
    return float(np.linalg.norm(p - a - t * d))


@dataclass(frozen=True)
class OrbifoldDiffeo:
    atoms: tuple[LocalDiffeoAtom, ...] = ()
    rounds: tuple[tuple[int, ...], ...] = ()

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def support_summary(self) -> list[tuple[int, np.ndarray, np.ndarray, float]]:
        return [(a.chart_id, *a.segment, a.tube_radius) for a in self.atoms]

    def then(self, other: "OrbifoldDiffeo") -> "OrbifoldDiffeo":
        """``other`` after ``self``."""
        shift = len(self.atoms)
        rounds = self.rounds + tuple(tuple(i + shift for i in r) for r in other.rounds)
        return OrbifoldDiffeo(self.atoms + other.atoms, rounds)


IDENTITY = OrbifoldDiffeo()


def _singleton_rounds(n: int) -> tuple[tuple[int, ...], ...]:
    return tuple((i,) for i in range(n))


def make_atom(orb: Orbifold, chart_id: int, start, end, rho: float, isotropy_order: int, duration: float = 1.0) -> LocalDiffeoAtom:
    group = orb.charts[chart_id].group
    base = TubeBumpField(start, end, rho, chart_id)
    return LocalDiffeoAtom(chart_id, AveragedField(base, group, float(isotropy_order)), duration)


# --------------------------------------------------------------------------
# geometry helpers


def _subgroup_of(orb: Orbifold, point: OrbifoldPoint) -> tuple[int, ...]:
    return ga.isotropy(orb.charts[point.chart_id].group, point.lift)


def foreign_image_distance(group: FiniteMatrixGroup, subgroup, a, b) -> float:
    """Distance from ``[a, b]`` to its images under elements outside ``subgroup``."""
    best = math.inf
    sub = set(subgroup)
    for i, m in enumerate(group.matrices):
        if i in sub:
            continue
        best = min(best, segment_distance(a, b, m @ a, m @ b))
    return best


def obstacle_distance(group: FiniteMatrixGroup, a, b, obstacles) -> float:
    best = math.inf
    for z in obstacles:
        for img in group.orbit(z):
            best = min(best, _pt_seg(img, a, b))
    return best


def tube_radius_for(orb: Orbifold, chart_id: int, subgroup, a, b, clearance: float, obstacles=()) -> float:
    chart = orb.charts[chart_id]
    bdist = min(chart.boundary_distance(a), chart.boundary_distance(b))
    wall = foreign_image_distance(chart.group, subgroup, a, b)
    obst = obstacle_distance(chart.group, a, b, obstacles)
    return 0.25 * min(clearance, bdist, wall, obst)


# --------------------------------------------------------------------------
# evaluation


def _advance(orb: Orbifold, atom: LocalDiffeoAtom, chart_ids, lifts, t: float, max_step: float):
    chart = orb.charts[atom.chart_id]
    idx, local = [], []
    for i, (c, z) in enumerate(zip(chart_ids, lifts)):
        if c == atom.chart_id:
            zc = z
        else:
            moved = orb.try_relift(OrbifoldPoint(c, z), atom.chart_id)
            if moved is None:
                continue  # outside this chart, hence outside the atom's support
            zc = moved.lift
        idx.append(i)
        local.append(zc)
    if not idx:
        return
    inside = atom.moves_many(np.array(local))
    idx = [i for i, keep in zip(idx, inside) if keep]
    local = [z for z, keep in zip(local, inside) if keep]
    if not idx:
        return
    out = flow(atom.field, np.array(local), t * atom.duration, max_step)
    for k, i in enumerate(idx):
        if not chart.contains(out[k]):
            raise OutsideAllCharts(f"trajectory left chart {atom.chart_id}")
        chart_ids[i] = atom.chart_id
        lifts[i] = out[k]


def evaluate_many(orb: Orbifold, diffeo: OrbifoldDiffeo, points, t: float = 1.0, max_step: float = DEFAULT_MAX_STEP) -> list[OrbifoldPoint]:
    if not 0.0 <= t <= 1.0:
        raise ValueError("isotopy parameter must lie in [0, 1]")
    points = list(points)
    chart_ids = [p.chart_id for p in points]
    lifts = [np.array(p.lift) for p in points]
    if t > 0.0:
        for atom in diffeo.atoms:
            _advance(orb, atom, chart_ids, lifts, t, max_step)
    out = []
    for p, c, z in zip(points, chart_ids, lifts):
        q = OrbifoldPoint(c, z)
        if c != p.chart_id:
            # report in the caller's chart whenever the image is still in it
            q = orb.try_relift(q, p.chart_id) or q
        out.append(q)
    return out


def evaluate(orb: Orbifold, diffeo: OrbifoldDiffeo, point: OrbifoldPoint, t: float = 1.0, max_step: float = DEFAULT_MAX_STEP) -> OrbifoldPoint:
    """Image of ``point`` under the isotopy slice at time ``t``."""
    return evaluate_many(orb, diffeo, [point], t, max_step)[0]


def invert(diffeo: OrbifoldDiffeo) -> OrbifoldDiffeo:
    n = len(diffeo.atoms)
    atoms = tuple(replace(a, duration=-a.duration) for a in reversed(diffeo.atoms))
    rounds = tuple(tuple(sorted(n - 1 - i for i in r)) for r in reversed(diffeo.rounds))
    return OrbifoldDiffeo(atoms, rounds)


def lift_map(orb: Orbifold, diffeo: OrbifoldDiffeo, chart_id: int, t: float = 1.0, max_step: float = DEFAULT_MAX_STEP):
    """The chart self-map of a word whose atoms all live in ``chart_id``."""
    if any(a.chart_id != chart_id for a in diffeo.atoms):
        raise ScenarioError("lift_map needs every atom in the requested chart")

    def f(Z):
        out = np.array(Z, dtype=float, ndmin=2)
        for atom in diffeo.atoms:
            out = flow(atom.field, out, t * atom.duration, max_step)
        return out

    return f


# --------------------------------------------------------------------------
# local transport


def local_transport(orb: Orbifold, x: OrbifoldPoint, y: OrbifoldPoint, clearance: float = 1.0) -> OrbifoldDiffeo:
    """One-atom diffeomorphism carrying ``x`` to ``y`` inside ``x``'s chart."""
    if not ob.same_component(orb, x, y):
        raise DifferentComponents(f"{x!r} and {y!r} lie in different stratum components")
    subgroup = _subgroup_of(orb, x)
    target = ob.aligned_lift(orb, x, y)
    a = np.array(x.lift)
    rho = tube_radius_for(orb, x.chart_id, subgroup, a, target, clearance)
    if np.array_equal(a, target):
        rho = 0.25 * min(clearance, orb.charts[x.chart_id].boundary_distance(a))
    if not rho >= MIN_TUBE_RADIUS:
        raise TubeTooTight(f"no tube of radius >= {MIN_TUBE_RADIUS:g} fits around the segment (got {rho:.3g})")
    atom = make_atom(orb, x.chart_id, a, target, rho, len(subgroup))
    return OrbifoldDiffeo((atom,), ((0,),))


# --------------------------------------------------------------------------
# n-point transport


@dataclass
class _Planner:
    orb: Orbifold
    clearance: float
    rng: np.random.Generator
    atoms: list = field(default_factory=list)

    def perpendicular(self, comp, chart_id, a, b):
        d = len(a)
        if isinstance(comp, RegularComponent):
            basis = np.eye(d)
        else:
            basis = comp.subspace.basis
        u = b - a
        u = u / np.linalg.norm(u)
        proj = basis - np.outer(basis @ u, u)
        norms = np.linalg.norm(proj, axis=1)
        keep = proj[norms > 1e-9]
        if keep.shape[0] == 0:
            return None
        coeff = self.rng.normal(size=keep.shape[0])
        v = coeff @ keep
        v -= (v @ u) * u
        n = np.linalg.norm(v)
        return None if n < 1e-12 else v / n

    def admissible(self, comp, chart_id, subgroup, z) -> bool:
        chart = self.orb.charts[chart_id]
        if not chart.contains(z, margin=1e-3 * (chart.radius or 1.0)):
            return False
        try:
            h = ga.isotropy(chart.group, z)
        except AmbiguousIsotropy:
            return False
        if h != tuple(subgroup):
            return False
        if isinstance(comp, RegularComponent):
            return True
        try:
            return comp.in_chamber(z)
        except NotInAnyComponent:
            return False

    def plan_leg(self, chart_id, comp, subgroup, a, b, obstacles, depth=0):
        """Pieces ``[(p, q, rho), ...]`` from a to b avoiding obstacles."""
        group = self.orb.charts[chart_id].group
        chart = self.orb.charts[chart_id]
        length = float(np.linalg.norm(b - a))
        if length == 0.0:
            return []
        base = 0.25 * min(
            self.clearance,
            chart.boundary_distance(a),
            chart.boundary_distance(b),
            foreign_image_distance(group, subgroup, a, b),
        )
        od = obstacle_distance(group, a, b, obstacles)
        if od >= 0.5 * base and base >= MIN_TUBE_RADIUS:
            return self.subdivide(chart_id, subgroup, a, b, obstacles)
        ends = min(obstacle_distance(group, a, a, obstacles), obstacle_distance(group, b, b, obstacles))
        if ends < 4.0 * MIN_TUBE_RADIUS:
            raise PathBlocked("an endpoint of the segment is occupied")
        if depth >= 2:
            raise PathBlocked("detour recursion exhausted")
        mid = 0.5 * (a + b)
        for _ in range(DETOUR_ATTEMPTS):
            v = self.perpendicular(comp, chart_id, a, b)
            if v is None:
                break
            w = mid + self.rng.uniform(0.25, 1.0) * length * v
            if not self.admissible(comp, chart_id, subgroup, w):
                continue
            if obstacle_distance(group, w, w, obstacles) < 0.05 * length:
                continue
            try:
                return self.plan_leg(chart_id, comp, subgroup, a, w, obstacles, depth + 1) + self.plan_leg(
                    chart_id, comp, subgroup, w, b, obstacles, depth + 1
                )
            except (PathBlocked, TubeTooTight):
                continue
        if base >= MIN_TUBE_RADIUS:
            try:
                # hug the obstacle with thin tubes rather than give up
                return self.subdivide(chart_id, subgroup, a, b, obstacles)
            except TubeTooTight:
                pass
        raise PathBlocked(f"segment {a.tolist()} -> {b.tolist()} is blocked and no detour was found")

    def subdivide(self, chart_id, subgroup, a, b, obstacles):
        """Split [a, b] into pieces no longer than twice their tube radius.

        Pieces are marched greedily from ``a``: each one is stretched while it
        still fits its own radius, so lengths grow geometrically away from a
        nearby wall instead of all shrinking to the tightest spot.
        """
        a, b = np.array(a, dtype=float), np.array(b, dtype=float)
        length = float(np.linalg.norm(b - a))

        def radius(p, q):
            return tube_radius_for(self.orb, chart_id, subgroup, p, q, self.clearance, obstacles)

        if length == 0.0:
            rho = radius(a, b)
            if not rho >= MIN_TUBE_RADIUS:
                raise TubeTooTight(f"tube radius {rho:.3g} below {MIN_TUBE_RADIUS:g}")
            return [(a, b, rho)]
        direction = (b - a) / length
        out = []
        done = 0.0
        p = a
        while True:
            remaining = length - done
            step = min(remaining, 2.0 * radius(p, b))
            q = b if step >= remaining else a + (done + step) * direction
            rho = radius(p, q)
            # length - 2 rho is increasing in the length, so the longest
            # admissible piece is bracketed by [step, 2 rho(step)]
            hi = min(remaining, 2.0 * rho)
            if hi > step * (1.0 + 1e-9):
                q_hi = b if hi >= remaining else a + (done + hi) * direction
                r_hi = radius(p, q_hi)
                if hi <= 2.0 * r_hi:
                    step, q, rho = hi, q_hi, r_hi
                else:
                    lo = step
                    for _ in range(30):
                        mid = 0.5 * (lo + hi)
                        q_mid = a + (done + mid) * direction
                        r_mid = radius(p, q_mid)
                        if mid <= 2.0 * r_mid:
                            lo, step, q, rho = mid, mid, q_mid, r_mid
                        else:
                            hi = mid
                        if hi - lo <= 1e-3 * lo:
                            break
            if not rho >= MIN_TUBE_RADIUS:
                raise TubeTooTight(f"tube radius {rho:.3g} below {MIN_TUBE_RADIUS:g}")
            out.append((p, q, rho))
            if len(out) > MAX_PIECES:
                raise TubeTooTight(f"segment needs more than {MAX_PIECES} pieces")
            if q is b:
                return out
            done += step
            p = q

    def obstacles_in(self, chart_id, positions, skip):
        out = []
        for j, p in enumerate(positions):
            if j == skip:
                continue
            q = self.orb.try_relift(p, chart_id)
            if q is not None:
                out.append(q.lift)
        return out

    def move(self, i, positions, target: OrbifoldPoint) -> list[LocalDiffeoAtom]:
        """Atoms carrying ``positions[i]`` to ``target``; raises when blocked."""
        start = positions[i]
        if self.orb.same_point(start, target):
            return []
        legs = self.route(start, target, positions, i)
        atoms = []
        for chart_id, a_pt, b_pt in legs:
            comp = ob.component_of(self.orb, a_pt)
            subgroup = _subgroup_of(self.orb, a_pt)
            b = ob.aligned_lift(self.orb, a_pt, b_pt)
            obstacles = self.obstacles_in(chart_id, positions, i)
            for p, q, rho in self.plan_leg(chart_id, comp, subgroup, np.array(a_pt.lift), b, obstacles):
                atoms.append(make_atom(self.orb, chart_id, p, q, rho, len(subgroup)))
        return atoms

    def route(self, start, target, positions, i):
        """Chart legs ``[(chart_id, from_point, to_point)]``."""
        orb = self.orb
        if not orb.is_spindle_like:
            return [(start.chart_id, start, target)]
        s0, phi0 = orb.underlying(start)
        s1, _ = orb.underlying(target)
        comfort = {0: lambda s: s <= 2.0 / 3.0, 1: lambda s: s >= 1.0 / 3.0}
        for c in (start.chart_id, 1 - start.chart_id):
            if comfort[c](s0) and comfort[c](s1):
                return [(c, orb.relift(start, c), orb.relift(target, c))]
        # cross through the middle latitude
        first = 0 if s0 < 0.5 else 1
        others = [orb.underlying(p) for j, p in enumerate(positions) if j != i]
        for k in range(DETOUR_ATTEMPTS):
            phi = phi0 if k == 0 else float(self.rng.uniform(0.0, 2.0 * math.pi))
            if all(abs(s - 0.5) + _ang(phi - ph) > 0.05 for s, ph in others):
                break
        w = orb.from_underlying(0.5, phi, first)
        return [
            (first, orb.relift(start, first), w),
            (1 - first, orb.relift(w, 1 - first), orb.relift(target, 1 - first)),
        ]


def _ang(x: float) -> float:
    return abs((x + math.pi) % (2.0 * math.pi) - math.pi)


def supports_disjoint(orb: Orbifold, a: LocalDiffeoAtom, b: LocalDiffeoAtom) -> bool:
    """Conservative: atoms in different charts are never declared disjoint."""
    if a.chart_id != b.chart_id:
        return False
    sa, ea = a.images()
    sb, eb = b.images()
    gap = a.tube_radius + b.tube_radius
    pa, qa = a.segment
    return all(segment_distance(pa, qa, s, e) > gap for s, e in zip(sb, eb)) and all(
        segment_distance(b.segment[0], b.segment[1], s, e) > gap for s, e in zip(sa, ea)
    )


def pack_rounds(orb: Orbifold, atoms) -> tuple[tuple[LocalDiffeoAtom, ...], tuple[tuple[int, ...], ...]]:
    """Reorder commuting atoms into rounds with pairwise disjoint supports.

    An atom may only move ahead of atoms whose supports it avoids; such atoms
    commute exactly, so the composed map is unchanged.
    """
    level = []
    for k, atom in enumerate(atoms):
        r = 0
        for j in range(k):
            if level[j] >= r and not supports_disjoint(orb, atoms[j], atom):
                r = level[j] + 1
        level.append(r)
    order = sorted(range(len(atoms)), key=lambda k: (level[k], k))
    new_atoms = tuple(atoms[k] for k in order)
    rounds = []
    for pos, k in enumerate(order):
        if not rounds or level[order[rounds[-1][0]]] != level[k]:
            rounds.append([pos])
        else:
            rounds[-1].append(pos)
    return new_atoms, tuple(tuple(r) for r in rounds)


def n_transport(
    orb: Orbifold,
    xs,
    ys,
    clearance: float = 1.0,
    seed: int = 0,
) -> OrbifoldDiffeo:
    """Diffeomorphism carrying each ``xs[i]`` to ``ys[i]``.

    Points are moved one at a time along straight chamber segments, each tube
    kept clear of every other marked point's current position; a point whose
    target is still occupied waits, and if nothing can move one blocker is
    parked at a free spot of its own component first.
    """
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise ScenarioError("source and target tuples differ in length")
    for pts in (xs, ys):
        for i in range(len(pts)):
            for j in range(i):
                if orb.same_point(pts[i], pts[j]):
                    raise ScenarioError(f"points {j} and {i} of a tuple coincide")
    comps = []
    for x, y in zip(xs, ys):
        if not ob.same_component(orb, x, y):
            raise DifferentComponents(f"{x!r} and {y!r} lie in different stratum components")
        comps.append(ob.component_of(orb, x))
    seen: dict[int, int] = {}
    for i, c in enumerate(comps):
        if c.sdim == 1 and not isinstance(c, RegularComponent):
            if c.orbit in seen:
                raise Sigma1Collision(f"points {seen[c.orbit]} and {i} share a one-dimensional stratum component")
            seen[c.orbit] = i

    rng = np.random.default_rng(seed)
    planner = _Planner(orb, clearance, rng)
    positions = list(xs)
    pending = [i for i in range(len(xs)) if not orb.same_point(xs[i], ys[i])]
    atoms: list[LocalDiffeoAtom] = []
    parks = 0
    while pending:
        progressed = False
        for i in list(pending):
            try:
                moved = planner.move(i, positions, ys[i])
            except (PathBlocked, TubeTooTight):
                continue
            atoms.extend(moved)
            positions[i] = ys[i]
            pending.remove(i)
            progressed = True
        if progressed:
            continue
        if parks >= DETOUR_ATTEMPTS * max(1, len(xs)):
            raise PathBlocked("could not schedule the remaining points")
        atoms.extend(_park_blocker(planner, positions, ys, pending))
        parks += 1
    atoms_t, rounds = pack_rounds(orb, atoms)
    return OrbifoldDiffeo(atoms_t, rounds)


def _park_blocker(planner: _Planner, positions, ys, pending) -> list[LocalDiffeoAtom]:
    orb = planner.orb
    i = pending[0]
    # the point sitting closest to i's target is in the way
    best, blocker = math.inf, None
    for j, p in enumerate(positions):
        if j == i:
            continue
        q = orb.try_relift(p, ys[i].chart_id)
        if q is None:
            continue
        group = orb.charts[ys[i].chart_id].group
        dist = float(np.min(np.linalg.norm(group.orbit(q.lift) - ys[i].lift[None], axis=1)))
        if dist < best:
            best, blocker = dist, j
    if blocker is None:
        blocker = i
    comp = ob.component_of(orb, positions[blocker])
    if not isinstance(comp, RegularComponent) and comp.sdim < 2:
        raise PathBlocked("a blocking point on a stratum of dimension < 2 cannot be parked")
    everyone = list(positions) + list(ys)
    for _ in range(DETOUR_ATTEMPTS):
        spot = _random_point_like(orb, positions[blocker], comp, planner.rng)
        if spot is None:
            continue
        if min(_orbit_distance(orb, spot, p) for p in everyone) < 0.1:
            continue
        try:
            moved = planner.move(blocker, positions, spot)
        except (PathBlocked, TubeTooTight, MathematicalFailure):
            continue
        positions[blocker] = spot
        return moved
    raise PathBlocked("no free parking spot found")


def _orbit_distance(orb: Orbifold, x: OrbifoldPoint, y: OrbifoldPoint) -> float:
    y2 = orb.try_relift(y, x.chart_id)
    if y2 is None:
        return math.inf
    group = orb.charts[x.chart_id].group
    return float(np.min(np.linalg.norm(group.orbit(y2.lift) - x.lift[None], axis=1)))


def _random_point_like(orb: Orbifold, x: OrbifoldPoint, comp, rng) -> OrbifoldPoint | None:
    if orb.is_spindle_like:
        s = float(rng.uniform(0.2, 0.8))
        phi = float(rng.uniform(0.0, 2.0 * math.pi))
        return orb.from_underlying(s, phi)
    chart = orb.charts[x.chart_id]
    scale = 2.0 * max(1.0, float(np.linalg.norm(x.lift)))
    if chart.radius is not None:
        scale = min(scale, 0.8 * chart.radius)
    basis = np.eye(chart.dimension) if isinstance(comp, RegularComponent) else comp.subspace.basis
    for _ in range(64):
        z = rng.uniform(-scale, scale, size=basis.shape[0]) @ basis
        p = OrbifoldPoint(x.chart_id, z)
        try:
            if chart.contains(z) and ob.same_component(orb, x, p):
                return p
        except (AmbiguousIsotropy, NotInAnyComponent):
            continue
    return None


# --------------------------------------------------------------------------
# serialization


def diffeo_to_dict(diffeo: OrbifoldDiffeo) -> dict:
    atoms = []
    for a in diffeo.atoms:
        start, end = a.segment
        averaged = isinstance(a.field, AveragedField)
        atoms.append(
            {
                "chart_id": a.chart_id,
                "start": [float(v) for v in start],
                "end": [float(v) for v in end],
                "tube_radius": float(a.tube_radius),
                "duration": float(a.duration),
                "averaged": averaged,
                "normalizer": float(a.field.normalizer) if averaged and a.field.normalizer is not None else None,
            }
        )
    return {
        "format": DIFFEO_FORMAT,
        "version": DIFFEO_VERSION,
        "atoms": atoms,
        "rounds": [list(r) for r in diffeo.rounds],
    }


def diffeo_from_dict(orb: Orbifold, record: dict) -> OrbifoldDiffeo:
    if record.get("format") != DIFFEO_FORMAT or record.get("version") != DIFFEO_VERSION:
        raise ScenarioError("unknown diffeo record format or version")
    atoms = []
    for r in record["atoms"]:
        base = TubeBumpField(r["start"], r["end"], r["tube_radius"], r["chart_id"])
        fld = AveragedField(base, orb.charts[r["chart_id"]].group, r["normalizer"]) if r["averaged"] else base
        atoms.append(LocalDiffeoAtom(r["chart_id"], fld, r["duration"]))
    rounds = tuple(tuple(x) for x in record.get("rounds", [])) or _singleton_rounds(len(atoms))
    return OrbifoldDiffeo(tuple(atoms), rounds)


def dumps_diffeo(diffeo: OrbifoldDiffeo) -> str:
    return json.dumps(diffeo_to_dict(diffeo), indent=1, sort_keys=True)


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class SdimReport:
    n_checked: int
    violations: tuple[tuple[OrbifoldPoint, int, object], ...]
    seed: int

    @property
    def passed(self) -> bool:
        return not self.violations


def sample_points(orb: Orbifold, n_samples: int, seed: int = 0, box: float = 2.0) -> list[OrbifoldPoint]:
    """Stratum representatives, random chamber points, and regular points."""
    rng = np.random.default_rng(seed)
    pts: list[OrbifoldPoint] = []
    strata = ob.stratify(orb)
    for c in strata:
        pts.append(OrbifoldPoint(c.chart_id, c.representative))
    per = max(1, n_samples // (2 * max(1, len(strata)))) if strata else 0
    for c in strata:
        if c.sdim == 0:
            continue
        chart = orb.charts[c.chart_id]
        lim = box if chart.radius is None else min(box, 0.9 * chart.radius)
        got = 0
        for _ in range(per * 20):
            if got >= per:
                break
            z = c.subspace.embed(rng.uniform(-lim, lim, size=c.sdim))
            if not chart.contains(z):
                continue
            try:
                if ga.isotropy(chart.group, z) == c.subgroup and c.in_chamber(z):
                    pts.append(OrbifoldPoint(c.chart_id, z))
                    got += 1
            except (AmbiguousIsotropy, NotInAnyComponent):
                continue
    while len(pts) < n_samples:
        cid = int(rng.integers(len(orb.charts)))
        chart = orb.charts[cid]
        lim = box if chart.radius is None else min(box, 0.9 * chart.radius)
        z = rng.uniform(-lim, lim, size=chart.dimension)
        if not chart.contains(z):
            continue
        try:
            ga.isotropy(chart.group, z)
        except AmbiguousIsotropy:
            continue
        pts.append(OrbifoldPoint(cid, z))
    return pts[:max(n_samples, len(strata))]


def verify_sdim_preservation(
    orb: Orbifold,
    diffeo: OrbifoldDiffeo,
    n_samples: int = 500,
    seed: int = 0,
    t: float = 1.0,
    max_step: float = DEFAULT_MAX_STEP,
    points=None,
) -> SdimReport:
    pts = list(points) if points is not None else sample_points(orb, n_samples, seed, box=_diffeo_extent(diffeo))
    images = evaluate_many(orb, diffeo, pts, t, max_step)
    bad = []
    for p, q in zip(pts, images):
        before = ob.sdim(orb, p)
        try:
            after = ob.sdim(orb, q)
        except AmbiguousIsotropy:
            after = "ambiguous"
        if after != before:
            bad.append((p, before, after))
    return SdimReport(len(pts), tuple(bad), seed)


def endpoint_error(orb: Orbifold, got: OrbifoldPoint, want: OrbifoldPoint) -> float:
    """Lift distance between two points, minimised over the chart group."""
    return _orbit_distance(orb, want, got)


def support_mask(orb: Orbifold, diffeo: OrbifoldDiffeo, points) -> np.ndarray:
    """Which points lie inside the support of at least one atom."""
    points = list(points)
    mask = np.zeros(len(points), dtype=bool)
    for atom in diffeo.atoms:
        idx, lifts = [], []
        for i, p in enumerate(points):
            if mask[i]:
                continue
            q = p if p.chart_id == atom.chart_id else orb.try_relift(p, atom.chart_id)
            if q is not None:
                idx.append(i)
                lifts.append(q.lift)
        if idx:
            mask[np.array(idx)[atom.moves_many(np.array(lifts))]] = True
    return mask


def in_support(orb: Orbifold, diffeo: OrbifoldDiffeo, point: OrbifoldPoint) -> bool:
    return bool(support_mask(orb, diffeo, [point])[0])


@dataclass(frozen=True)
class SupportReport:
    n_checked: int
    n_changed: int
    seed: int

    @property
    def passed(self) -> bool:
        return self.n_checked > 0 and self.n_changed == 0


def verify_support(
    orb: Orbifold,
    diffeo: OrbifoldDiffeo,
    n_samples: int = 1000,
    seed: int = 0,
    max_step: float = DEFAULT_MAX_STEP,
) -> SupportReport:
    """Points outside every atom's support must come back bit-for-bit."""
    rng = np.random.default_rng(seed)
    box = _diffeo_extent(diffeo)
    pts: list[OrbifoldPoint] = []
    for _ in range(200):
        if len(pts) >= n_samples:
            break
        batch = []
        for _ in range(n_samples):
            cid = int(rng.integers(len(orb.charts)))
            chart = orb.charts[cid]
            lim = box if chart.radius is None else min(box, 0.95 * chart.radius)
            p = OrbifoldPoint(cid, rng.uniform(-lim, lim, size=chart.dimension))
            if chart.contains(p.lift):
                batch.append(p)
        outside = ~support_mask(orb, diffeo, batch)
        pts.extend(p for p, keep in zip(batch, outside) if keep)
    pts = pts[:n_samples]
    images = evaluate_many(orb, diffeo, pts, 1.0, max_step)
    changed = sum(1 for p, q in zip(pts, images) if q.chart_id != p.chart_id or not np.array_equal(q.lift, p.lift))
    return SupportReport(len(pts), changed, seed)


def _diffeo_extent(diffeo: OrbifoldDiffeo) -> float:
    ext = 2.0
    for a in diffeo.atoms:
        s, e = a.segment
        ext = max(ext, 1.25 * (max(np.abs(s).max(), np.abs(e).max()) + a.tube_radius))
    return ext


@dataclass(frozen=True)
class ThetaIso:
    source_group: FiniteMatrixGroup
    target_group: FiniteMatrixGroup
    mapping: tuple[int, ...]
    residuals: tuple[float, ...] = ()

    def __call__(self, i: int) -> int:
        return self.mapping[i]

    def is_homomorphism(self) -> bool:
        s, t, m = self.source_group.mult_table, self.target_group.mult_table, self.mapping
        n = len(m)
        return all(m[s[i, j]] == t[m[i], m[j]] for i in range(n) for j in range(n))

    def is_bijective(self) -> bool:
        return sorted(self.mapping) == list(range(self.target_group.order))

    def compose(self, other: "ThetaIso") -> "ThetaIso":
        """``other`` after ``self``."""
        return ThetaIso(self.source_group, other.target_group, tuple(other.mapping[k] for k in self.mapping))


def extract_theta(
    lift,
    group: FiniteMatrixGroup,
    n_samples: int = 64,
    tol: float = 1e-8,
    seed: int = 0,
    target_group: FiniteMatrixGroup | None = None,
    box: float = 1.0,
) -> ThetaIso:
    """Recover the isomorphism a lift intertwines: ``f(g z) = theta(g) f(z)``."""
    target = target_group if target_group is not None else group
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-box, box, size=(n_samples, group.dimension))
    FZ = np.atleast_2d(lift(Z))
    mapping, residuals = [], []
    for i, g in enumerate(group.matrices):
        FgZ = np.atleast_2d(lift(Z @ g.T))
        res = np.array([np.max(np.linalg.norm(FgZ - FZ @ mu.T, axis=1)) for mu in target.matrices])
        order = np.argsort(res, kind="stable")
        best = float(res[order[0]])
        if best >= tol:
            raise NoEquivariantMatch(f"no target element intertwines element {i} (best residual {best:.3g})")
        if len(order) > 1 and res[order[1]] <= 10.0 * tol:
            raise AmbiguousMatch(f"element {i} matches several target elements within {10 * tol:g}")
        mapping.append(int(order[0]))
        residuals.append(best)
    theta = ThetaIso(group, target, tuple(mapping), tuple(residuals))
    if not theta.is_bijective() or not theta.is_homomorphism():
        raise NoEquivariantMatch("the matched elements do not form a group isomorphism")
    return theta
