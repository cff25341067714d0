"""Simple closed curves on spindles and the round sphere, and their areas.

Curves live in the underlying ``(s, phi)`` coordinates of the smooth part
(``s = 0`` is the north cone point N, ``s = 1`` the south one S). An area form
``g(s) ds ^ dphi`` has primitive ``G(s) dphi`` with ``G(s) = int_0^s g``, so the
area north of a curve that winds once around is the line integral of
``G dphi`` along it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidCurve, ScenarioError, WindingAmbiguous
from .fields import smoothstep7
from .orbifold import Orbifold

TWO_PI = 2.0 * math.pi
POLE_MARGIN = 1e-3
SIMPLE_TOL = 1e-9
WINDING_TOL = 1e-6

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def wrap_angle(x):
    """Map to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(y == -math.pi, math.pi, y)


# --------------------------------------------------------------------------
# area forms


@dataclass(frozen=True, eq=False)
class AreaForm:
    """Rotation-invariant area form ``g(s) ds ^ dphi`` on the smooth part.

    ``G`` is tabulated by 5-point Gauss-Legendre on ``n_panels`` panels and
    evaluated by cubic Hermite interpolation using ``g`` as the slope.
    """

    density: Callable = field(default=lambda s: np.ones_like(np.asarray(s, dtype=float)))
    n_panels: int = 4096
    name: str = "custom"

    def __post_init__(self):
        n = self.n_panels
        nodes = np.linspace(0.0, 1.0, n + 1)
        h = 1.0 / n
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        quad_s = mids[:, None] + 0.5 * h * _GL5_X[None, :]
        gq = self._g(quad_s)
        if np.any(gq <= 0.0) or not np.all(np.isfinite(gq)):
            raise ScenarioError("area density must be positive and finite on (0, 1)")
        panel = 0.5 * h * (gq @ _GL5_W)
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_slope", self._g(nodes))

    def _g(self, s):
        return np.broadcast_to(np.asarray(self.density(np.asarray(s, dtype=float)), dtype=float), np.shape(s)).astype(float)

    @classmethod
    def uniform(cls, n_panels: int = 4096) -> "AreaForm":
        return cls(lambda s: np.ones_like(np.asarray(s, dtype=float)), n_panels, "uniform")

    def g(self, s):
        return self._g(s)

    def G(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        n = self.n_panels
        h = 1.0 / n
        k = np.minimum((s * n).astype(np.int64), n - 1)
        t = (s - self._nodes[k]) / h
        t2, t3 = t * t, t * t * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return h00 * self._cum[k] + h10 * h * self._slope[k] + h01 * self._cum[k + 1] + h11 * h * self._slope[k + 1]

    @property
    def total(self) -> float:
        return TWO_PI * float(self._cum[-1])

    def inverse_G(self, u):
        """``s`` with ``G(s) = u`` (table inversion plus two Newton steps)."""
        u = np.asarray(u, dtype=float)
        s = np.interp(u, self._cum, self._nodes)
        for _ in range(2):
            s = np.clip(s - (self.G(s) - u) / self._g(s), 0.0, 1.0)
        return s


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class SpindleCurve:
    """Closed polyline of ``(s, phi)`` samples; orientation is sample order."""

    samples: np.ndarray

    def __post_init__(self):
        pts = np.array(self.samples, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise InvalidCurve("a curve needs at least three distinct (s, phi) samples plus closure")
        if not np.all(np.isfinite(pts)):
            raise InvalidCurve("curve samples must be finite")
        if np.abs(pts[0, 0] - pts[-1, 0]) > 1e-12 or abs(float(wrap_angle(pts[0, 1] - pts[-1, 1]))) > 1e-12:
            raise InvalidCurve("curve is not closed: first and last samples differ")
        if pts[:, 0].min() <= POLE_MARGIN or pts[:, 0].max() >= 1.0 - POLE_MARGIN:
            raise InvalidCurve("curve passes too close to a cone point")
        pts.setflags(write=False)
        object.__setattr__(self, "samples", pts)
        if not _is_simple(self.segments()):
            raise InvalidCurve("curve is not simple")

    def __len__(self) -> int:
        return self.samples.shape[0] - 1

    def segments(self) -> np.ndarray:
        """Rows ``(s1, phi1, s2, phi2)`` with ``phi1`` in [0, 2 pi) and ``phi2`` unwrapped."""
        s, phi = self.samples[:, 0], self.samples[:, 1]
        p1 = np.mod(phi[:-1], TWO_PI)
        dphi = wrap_angle(phi[1:] - phi[:-1])
        return np.column_stack([s[:-1], p1, s[1:], p1 + dphi])

    @classmethod
    def latitude(cls, s0: float, n: int = 256, reverse: bool = False) -> "SpindleCurve":
        phi = np.linspace(0.0, TWO_PI, n + 1)
        phi[-1] = 0.0
        if reverse:
            phi = -phi
        return cls(np.column_stack([np.full(n + 1, s0), phi]))

    @classmethod
    def circle(cls, center_s: float, center_phi: float, radius: float, n: int = 256) -> "SpindleCurve":
        """A round loop in the (s, phi) coordinate plane."""
        t = np.linspace(0.0, TWO_PI, n + 1)
        pts = np.column_stack([center_s + radius * np.sin(t), center_phi + radius * np.cos(t)])
        pts[-1] = pts[0]
        return cls(pts)

    @classmethod
    def square(cls, center_s: float, center_phi: float, side: float, per_side: int = 16) -> "SpindleCurve":
        h = 0.5 * side
        corners = np.array([[-h, -h], [-h, h], [h, h], [h, -h], [-h, -h]])
        pts = []
        for a, b in zip(corners[:-1], corners[1:]):
            for k in range(per_side):
                pts.append(a + (b - a) * k / per_side)
        pts.append(pts[0])
        pts = np.array(pts) + np.array([center_s, center_phi])
        return cls(pts)

    def refined(self, factor: int = 2) -> "SpindleCurve":
        seg = self.segments()
        out = []
        for k in range(factor):
            w = k / factor
            out.append(np.column_stack([seg[:, 0] + w * (seg[:, 2] - seg[:, 0]), seg[:, 1] + w * (seg[:, 3] - seg[:, 1])]))
        pts = np.stack(out, axis=1).reshape(-1, 2)
        pts = np.vstack([pts, pts[:1]])
        return SpindleCurve(pts)


def _shifted(seg: np.ndarray, shift: float) -> np.ndarray:
    out = seg.copy()
    out[:, 1] += shift
    out[:, 3] += shift
    return out


def _planar(seg: np.ndarray) -> np.ndarray:
    """(s, phi) segments as planar rows (x1, y1, x2, y2) with x = phi."""
    return seg[:, [1, 0, 3, 2]]


def _is_simple(seg: np.ndarray) -> bool:
    d = np.column_stack([seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1]])
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths == 0.0):
        return False
    nxt = np.roll(d, -1, axis=0)
    cos = np.sum(d * nxt, axis=1) / (lengths * np.roll(lengths, -1))
    if np.any(cos < -1.0 + 1e-12):
        return False  # immediate backtracking
    P = _planar(seg)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        if kernels.min_segment_distance(P, _planar(_shifted(seg, shift)), skip_adjacent=True) < SIMPLE_TOL:
            return False
    return True


def curve_distance(a: SpindleCurve, b: SpindleCurve) -> float:
    """Distance between two curves in the (s, phi) cylinder metric."""
    sa, sb = a.segments(), b.segments()
    P = _planar(sa)
    return min(kernels.min_segment_distance(P, _planar(_shifted(sb, sh))) for sh in (-TWO_PI, 0.0, TWO_PI))


def winding(curve: SpindleCurve) -> int:
    """Net number of turns of the curve around the poles (in phi)."""
    seg = curve.segments()
    total = float(np.sum(seg[:, 3] - seg[:, 1])) / TWO_PI
    w = round(total)
    if abs(total - w) >= WINDING_TOL:
        raise WindingAmbiguous(f"phi winding {total!r} is not an integer")
    return int(w)


def primitive_integral(curve: SpindleCurve, form: AreaForm) -> float:
    """Line integral of ``G(s) dphi`` along the polyline."""
    seg = curve.segments()
    x = 0.5 * (_GL8_X + 1.0)
    s = seg[:, 0:1] + x[None, :] * (seg[:, 2:3] - seg[:, 0:1])
    mean_g = 0.5 * (form.G(s) @ _GL8_W)
    return float(np.sum((seg[:, 3] - seg[:, 1]) * mean_g))


def _split_exact(total: float, part: float) -> tuple[float, float]:
    """``(a, b)`` near ``(part, total - part)`` with ``a + b == total`` in floats."""
    if part <= 0.5 * total:
        big = total - part
        small = total - big  # exact: big lies in [total/2, total]
        return small, big
    small = total - part
    return total - small, small


@dataclass(frozen=True)
class RegionAreas:
    """``first``/``second``: (north, south) side of a separating curve, or
    (outside, inside) of a non-separating one, where ``outside`` holds both poles."""

    first: float
    second: float
    separating: bool
    winding: int

    @property
    def total(self) -> float:
        return self.first + self.second


def region_areas(curve: SpindleCurve, form: AreaForm) -> RegionAreas:
    w = winding(curve)
    integral = primitive_integral(curve, form)
    total = form.total
    if w in (1, -1):
        a_north = w * integral
        if not 0.0 < a_north < total:
            raise WindingAmbiguous(f"north area {a_north} outside (0, {total})")
        a, b = _split_exact(total, a_north)
        return RegionAreas(a, b, True, w)
    if w == 0:
        inside = abs(integral)
        outside, inside = _split_exact(total, total - inside)
        return RegionAreas(outside, inside, False, 0)
    raise InvalidCurve(f"a simple closed curve cannot wind {w} times")


# --------------------------------------------------------------------------
# area-preserving witnesses


def apply_rotation(curve: SpindleCurve, angle: float) -> SpindleCurve:
    pts = np.array(curve.samples)
    pts[:, 1] = np.mod(pts[:, 1] + angle, TWO_PI)
    pts[-1] = pts[0]
    return SpindleCurve(pts)


def apply_shear(curve: SpindleCurve, amount: float, s_lo: float, s_hi: float) -> SpindleCurve:
    """``phi -> phi + amount * smoothstep((s - s_lo) / (s_hi - s_lo))``.

    A rotation on each latitude, constant near both poles, so it preserves
    every rotation-invariant area form.
    """
    pts = np.array(curve.samples)
    ramp = smoothstep7((pts[:, 0] - s_lo) / (s_hi - s_lo))
    pts[:, 1] = np.mod(pts[:, 1] + amount * ramp, TWO_PI)
    pts[-1] = pts[0]
    return SpindleCurve(pts)


def _to_sphere(samples: np.ndarray) -> np.ndarray:
    z = 1.0 - 2.0 * samples[:, 0]
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(samples[:, 1]), r * np.sin(samples[:, 1]), z])


def _from_sphere(xyz: np.ndarray) -> np.ndarray:
    s = 0.5 * (1.0 - np.clip(xyz[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), TWO_PI)
    return np.column_stack([s, phi])


def apply_tilt(curve: SpindleCurve, angle: float) -> SpindleCurve:
    """Rigid rotation of the round sphere about the x axis.

    Area preserving for the uniform form only (Archimedes: uniform in s is
    uniform on the round sphere).
    """
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    pts = _from_sphere(_to_sphere(curve.samples) @ rot.T)
    pts[-1] = pts[0]
    return SpindleCurve(pts)


@dataclass(frozen=True)
class Witness:
    kind: str  # "rotation" | "shear" | "tilt"
    angle: float
    s_lo: float = 0.0
    s_hi: float = 1.0

    def apply(self, curve: SpindleCurve) -> SpindleCurve:
        if self.kind == "rotation":
            return apply_rotation(curve, self.angle)
        if self.kind == "shear":
            return apply_shear(curve, self.angle, self.s_lo, self.s_hi)
        if self.kind == "tilt":
            return apply_tilt(curve, self.angle)
        raise ValueError(self.kind)


def chord_sag(curve: SpindleCurve) -> float:
    """Bound on how far a smooth non-rotational image strays from its polyline."""
    seg = curve.segments()
    return float(np.max((seg[:, 2] - seg[:, 0]) ** 2 + (seg[:, 3] - seg[:, 1]) ** 2))


def witness_disjoint(curve: SpindleCurve, witness: Witness) -> bool:
    try:
        image = witness.apply(curve)
    except InvalidCurve:
        return False
    gap = curve_distance(curve, image)
    # phi-rotations map polylines to polylines exactly
    margin = 1e-12 if witness.kind == "rotation" else 10.0 * chord_sag(curve)
    return gap > margin


def _rotation_angles(n: int = 64):
    ks = sorted(range(1, n), key=lambda k: (abs(k - n / 2), k))
    return [TWO_PI * k / n for k in ks]


def find_witness(curve: SpindleCurve, allow_tilt: bool = False) -> Witness | None:
    for angle in _rotation_angles():
        w = Witness("rotation", angle)
        if witness_disjoint(curve, w):
            return w
    s = curve.samples[:, 0]
    lo, hi = max(POLE_MARGIN, float(s.min()) - 1e-3), min(1 - POLE_MARGIN, float(s.max()) + 1e-3)
    for amount in (math.pi, 0.5 * math.pi, 1.5 * math.pi):
        w = Witness("shear", amount, lo, hi)
        if witness_disjoint(curve, w):
            return w
    if allow_tilt:
        for k in range(16, 0, -1):
            w = Witness("tilt", math.pi * k / 16)
            if witness_disjoint(curve, w):
                return w
    return None


# --------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class DisplaceVerdict:
    kind: str  # "Displaceable" | "NonDisplaceable" | "Undetermined"
    reason: str
    areas: RegionAreas
    witness: Witness | None = None

    @property
    def displaceable(self) -> bool:
        return self.kind == "Displaceable"


def displaceability(orb: Orbifold, curve: SpindleCurve, form: AreaForm, tol_area: float | None = None) -> DisplaceVerdict:
    """Decide whether an area-preserving orbifold diffeomorphism can move the
    curve off itself, and supply a witness map when it can."""
    if not orb.is_spindle_like:
        raise ScenarioError("displaceability is defined for spindles and the round sphere")
    tol = 1e-6 * form.total if tol_area is None else tol_area
    areas = region_areas(curve, form)
    a1, a2 = areas.first, areas.second
    if orb.family == "sphere":
        if abs(a1 - a2) <= tol:
            return DisplaceVerdict("NonDisplaceable", "monotone", areas)
        witness = find_witness(curve, allow_tilt=form.name == "uniform")
        return DisplaceVerdict("Displaceable", "not monotone", areas, witness)
    if areas.separating:
        return DisplaceVerdict("NonDisplaceable", "separates singular points", areas)
    if a2 < a1 - tol:
        return DisplaceVerdict("Displaceable", "disc without cone points is the smaller region", areas, find_witness(curve))
    if a2 > a1 + tol:
        return DisplaceVerdict("NonDisplaceable", "area obstruction", areas)
    return DisplaceVerdict("Undetermined", "equal areas with both cone points on one side", areas)


# --------------------------------------------------------------------------
# Monte-Carlo oracle


@dataclass(frozen=True)
class MonteCarloAreas:
    north: float  # area on the N side (outside, for a non-separating curve)
    other: float
    stderr: float
    n_samples: int
    seed: int


def monte_carlo_areas(
    curve: SpindleCurve,
    form: AreaForm,
    n_samples: int = 10_000_000,
    seed: int = 0,
    shard: int = 1_000_000,
    threads: int = 1,
) -> MonteCarloAreas:
    """Point-in-region estimate by crossing parity along meridians.

    A sample is on N's side iff the meridian arc from it up to N crosses the
    curve an even number of times. Independent of the ``G dphi`` route.
    Each shard draws from its own child seed, so the result does not depend
    on ``threads``.
    """
    seg = curve.segments()
    sizes = [min(shard, n_samples - k) for k in range(0, n_samples, shard)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    mass = float(form._cum[-1])

    def count(job) -> int:
        ss, m = job
        rng = np.random.default_rng(ss)
        s = form.inverse_G(rng.uniform(0.0, 1.0, size=m) * mass)
        phi = rng.uniform(0.0, TWO_PI, size=m)
        order = np.argsort(phi, kind="stable")
        parity = kernels.crossing_parity(s[order], phi[order], seg)
        return int(m - parity.sum(dtype=np.int64))

    jobs = list(zip(seqs, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            north = sum(pool.map(count, jobs))
    else:
        north = sum(count(j) for j in jobs)
    total = form.total
    p = north / n_samples
    return MonteCarloAreas(total * p, total * (1.0 - p), total * math.sqrt(p * (1.0 - p) / n_samples), n_samples, seed)
