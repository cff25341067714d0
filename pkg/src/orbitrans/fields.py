"""Chart-local vector fields: tube bumps, group averaging, RK4 flows."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import StepTooLarge
from .groups import FiniteMatrixGroup

MAX_STEPS = 10**7
DEFAULT_MAX_STEP = 1e-3


def smoothstep7(x):
    """Degree-7 smoothstep clamped to [0, 1]; C^3 at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))


def cutoff(t):
    """1 on [0, 1/2], 0 on [1, inf), smooth in between."""
    return 1.0 - smoothstep7(2.0 * np.asarray(t, dtype=float) - 1.0)


def segment_distance(a, b, c, e) -> float:
    """Euclidean distance between segments [a, b] and [c, e] in R^d."""
    a, b, c, e = (np.asarray(v, dtype=float) for v in (a, b, c, e))
    u, v, w = b - a, e - c, a - c
    uu, uv, vv, uw, vw = u @ u, u @ v, v @ v, u @ w, v @ w
    best = math.inf
    # endpoint-to-segment distances cover every degenerate and boundary case
    for p, q0, q1 in ((a, c, e), (b, c, e), (c, a, b), (e, a, b)):
        best = min(best, point_segment_distance(p, q0, q1))
    den = uu * vv - uv * uv
    if den > 1e-300:
        s = (uv * vw - vv * uw) / den
        t = (uu * vw - uv * uw) / den
        if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
            best = min(best, float(np.linalg.norm(w + s * u - t * v)))
    return best


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    d = b - a
    dd = d @ d
    t = 0.0 if dd == 0.0 else min(1.0, max(0.0, ((p - a) @ d) / dd))
    return float(np.linalg.norm(p - a - t * d))


def _box_image(lo, hi, matrix):
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    img = corners @ matrix.T
    return img.min(axis=0), img.max(axis=0)


@dataclass(frozen=True, eq=False)
class TubeBumpField:
    """``cutoff(dist(z, [start, end]) / rho) * (end - start)``.

    Identically ``end - start`` on the rho/2 tube, so the time-one flow carries
    ``start`` to ``end`` along the segment at constant speed.
    """

    start: np.ndarray
    end: np.ndarray
    tube_radius: float
    chart_id: int = 0

    def __post_init__(self):
        for name in ("start", "end"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.tube_radius > 0.0:
            raise ValueError("tube radius must be positive")

    @property
    def dimension(self) -> int:
        return self.start.shape[0]

    @property
    def velocity(self) -> np.ndarray:
        return self.end - self.start

    def tube_images(self):
        return self.start[None], self.end[None], self.velocity[None], 1.0

    def __call__(self, Z):
        starts, ends, vels, scale = self.tube_images()
        return _reshape_like(Z, kernels.tube_field(_rows(Z), starts, ends, vels, self.tube_radius, scale))

    def bounding_box(self):
        lo = np.minimum(self.start, self.end) - self.tube_radius
        hi = np.maximum(self.start, self.end) + self.tube_radius
        return lo, hi


@dataclass(frozen=True, eq=False)
class ConstantField:
    vector: np.ndarray
    box: float = 1.0

    @property
    def dimension(self) -> int:
        return len(self.vector)

    def __call__(self, Z):
        rows = _rows(Z)
        return _reshape_like(Z, np.broadcast_to(np.asarray(self.vector, dtype=float), rows.shape).copy())

    def bounding_box(self):
        return -self.box * np.ones(self.dimension), self.box * np.ones(self.dimension)


@dataclass(frozen=True, eq=False)
class LinearField:
    matrix: np.ndarray
    box: float = 1.0

    @property
    def dimension(self) -> int:
        return np.asarray(self.matrix).shape[0]

    def __call__(self, Z):
        return _reshape_like(Z, _rows(Z) @ np.asarray(self.matrix, dtype=float).T)

    def bounding_box(self):
        return -self.box * np.ones(self.dimension), self.box * np.ones(self.dimension)


@dataclass(frozen=True, eq=False)
class AveragedField:
    """``(1 / normalizer) * sum_g g . base(g^-1 z)`` over the whole group.

    With the default normalizer ``|G|`` this is the group average. Transport
    atoms use the isotropy order instead, which keeps the field equal to the
    base tube near a segment whose foreign group images stay clear of it.
    """

    base: object
    group: FiniteMatrixGroup
    normalizer: float | None = None

    @property
    def dimension(self) -> int:
        return self.group.dimension

    @property
    def scale(self) -> float:
        return 1.0 / (self.normalizer if self.normalizer is not None else self.group.order)

    def tube_images(self):
        if not isinstance(self.base, TubeBumpField):
            return None
        mats = self.group.matrices
        starts = np.einsum("gij,j->gi", mats, self.base.start)
        ends = np.einsum("gij,j->gi", mats, self.base.end)
        vels = np.einsum("gij,j->gi", mats, self.base.velocity)
        return starts, ends, vels, self.scale

    @property
    def tube_radius(self) -> float:
        return self.base.tube_radius

    def __call__(self, Z):
        imgs = self.tube_images()
        rows = _rows(Z)
        if imgs is not None:
            starts, ends, vels, scale = imgs
            out = kernels.tube_field(rows, starts, ends, vels, self.base.tube_radius, scale)
        else:
            out = np.zeros_like(rows)
            for m in self.group.matrices:
                # g . base(g^-1 z) with g^-1 = g^T
                out += self.base(rows @ m) @ m.T
            out *= self.scale
        return _reshape_like(Z, out)

    def bounding_box(self):
        lo, hi = self.base.bounding_box()
        boxes = [_box_image(lo, hi, m) for m in self.group.matrices]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


def _rows(Z) -> np.ndarray:
    return np.atleast_2d(np.asarray(Z, dtype=float))


def _reshape_like(Z, out):
    return out[0] if np.ndim(Z) == 1 else out


def average_field(field, group: FiniteMatrixGroup, normalizer: float | None = None) -> AveragedField:
    return AveragedField(field, group, normalizer)


def _tube_form(field):
    images = getattr(field, "tube_images", None)
    return images() if images is not None else None


def step_count(duration: float, max_step: float) -> int:
    if not max_step > 0.0:
        raise ValueError("max_step must be positive")
    n = math.ceil(abs(duration) / max_step)
    if n > MAX_STEPS:
        raise StepTooLarge(f"{n} steps exceed the limit of {MAX_STEPS}")
    return n


def flow(field, z0, duration: float, max_step: float = DEFAULT_MAX_STEP):
    """Classical RK4 with ``ceil(|duration| / max_step)`` equal steps.

    Accepts a single point or an (n, d) batch. Tube-type fields go through the
    compiled kernel; any other callable field uses a vectorised numpy loop.
    """
    nsteps = step_count(duration, max_step)
    rows = _rows(z0)
    tube = _tube_form(field)
    if tube is not None:
        starts, ends, vels, scale = tube
        out = kernels.flow_tubes(rows, starts, ends, vels, field.tube_radius, scale, duration, nsteps)
    else:
        out = rows.copy()
        if nsteps:
            h = duration / nsteps
            for _ in range(nsteps):
                k1 = field(out)
                k2 = field(out + 0.5 * h * k1)
                k3 = field(out + 0.5 * h * k2)
                k4 = field(out + h * k3)
                out = out + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return _reshape_like(z0, out)


@dataclass(frozen=True)
class EquivarianceReport:
    residual: float
    tol: float
    n_samples: int
    seed: int
    worst_element: int

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def check_equivariance(field, group: FiniteMatrixGroup, n_samples: int = 1000, seed: int = 0, tol: float = 1e-10) -> EquivarianceReport:
    """Max over samples and group of ``|field(g z) - g field(z)|``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    lo, hi = field.bounding_box()
    rng = np.random.default_rng(seed)
    Z = rng.uniform(lo, hi, size=(n_samples, len(lo)))
    FZ = field(Z)
    worst, arg = 0.0, 0
    for i, m in enumerate(group.matrices):
        r = float(np.max(np.linalg.norm(field(Z @ m.T) - FZ @ m.T, axis=1)))
        if r > worst:
            worst, arg = r, i
    return EquivarianceReport(worst, tol, n_samples, seed, arg)
