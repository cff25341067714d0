"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``flow_tubes``, ``tube_field``, ``crossing_parity``,
``min_segment_distance``) dispatch to whichever backend ``_backend`` selected.
Both flavours stay importable as ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so the
benchmark and the cross-backend tests can call them side by side.

Tube fields are passed in "image" form: for an averaged field
``X(z) = scale * sum_g g . Y(g^-1 z)`` with ``Y`` a tube bump along ``[a, b]``,
the caller supplies the segment images ``g a``, ``g b`` and velocity images
``g (b - a)``, which turns every group term into a point-segment distance.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, njit

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# pure numpy


def _chi_np(u):
    x = np.clip(2.0 * u - 1.0, 0.0, 1.0)
    smooth = x**4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))
    return 1.0 - smooth


def _segment_dist_np(Z, starts, ends):
    # Z (n, d); starts/ends (g, d) -> (n, g)
    D = ends - starts
    dd = np.einsum("gd,gd->g", D, D)
    diff = Z[:, None, :] - starts[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("ngd,gd->ng", diff, D) / dd
    t = np.where(dd > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    rel = diff - t[..., None] * D[None, :, :]
    return np.sqrt(np.einsum("ngd,ngd->ng", rel, rel))


def point_segment_distances(Z, starts, ends):
    """Distances from each row of ``Z`` to each segment, shape (n, g)."""
    return _segment_dist_np(Z, starts, ends)


def _tube_field_np(Z, starts, ends, vels, rho, scale):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    dist = _segment_dist_np(Z, starts, ends)
    weights = _chi_np(dist / rho)
    return scale * (weights @ vels)


def _flow_tubes_np(Z, starts, ends, vels, rho, scale, duration, nsteps):
    Z = np.array(Z, dtype=float, ndmin=2)
    out = Z.copy()
    if nsteps == 0 or duration == 0.0:
        return out
    active = np.min(_segment_dist_np(Z, starts, ends), axis=1) < rho
    if not np.any(active):
        return out
    z = Z[active]
    h = duration / nsteps
    for _ in range(nsteps):
        k1 = _tube_field_np(z, starts, ends, vels, rho, scale)
        k2 = _tube_field_np(z + 0.5 * h * k1, starts, ends, vels, rho, scale)
        k3 = _tube_field_np(z + 0.5 * h * k2, starts, ends, vels, rho, scale)
        k4 = _tube_field_np(z + h * k3, starts, ends, vels, rho, scale)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[active] = z
    return out


def _crossing_parity_np(s, phi_sorted, segs):
    n = s.shape[0]
    parity = np.zeros(n, dtype=np.uint8)
    for k in range(segs.shape[0]):
        s1, p1, s2, p2 = segs[k]
        if p1 == p2:
            continue
        lo, hi = (p1, p2) if p1 < p2 else (p2, p1)
        for shift in (-TWO_PI, 0.0, TWO_PI):
            a, b = lo + shift, hi + shift
            if b <= 0.0 or a >= TWO_PI:
                continue
            i0 = np.searchsorted(phi_sorted, a, side="left")
            i1 = np.searchsorted(phi_sorted, b, side="left")
            if i1 <= i0:
                continue
            ph = phi_sorted[i0:i1] - shift
            sc = s1 + (ph - p1) / (p2 - p1) * (s2 - s1)
            parity[i0:i1] ^= (sc < s[i0:i1]).astype(np.uint8)
    return parity


def _point_seg_dist_np(P, A, B):
    D = B - A
    dd = np.sum(D * D, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.sum((P - A) * D, axis=-1) / dd
    t = np.where(dd > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    R = P - (A + t[..., None] * D)
    return np.sqrt(np.sum(R * R, axis=-1))


def _cross2(ax, ay, bx, by):
    return ax * by - ay * bx


def _min_segment_distance_np(P, Q, skip_adjacent):
    # P (n, 4), Q (m, 4): rows (x1, y1, x2, y2)
    n, m = P.shape[0], Q.shape[0]
    best = np.inf
    chunk = max(1, 2_000_000 // max(m, 1))
    jj = np.arange(m)
    for i0 in range(0, n, chunk):
        ii = np.arange(i0, min(n, i0 + chunk))
        p1 = P[ii, None, 0:2]
        p2 = P[ii, None, 2:4]
        q1 = Q[None, :, 0:2]
        q2 = Q[None, :, 2:4]
        d = np.minimum.reduce(
            [
                _point_seg_dist_np(p1, q1, q2),
                _point_seg_dist_np(p2, q1, q2),
                _point_seg_dist_np(q1, p1, p2),
                _point_seg_dist_np(q2, p1, p2),
            ]
        )
        r = p2 - p1
        sv = q2 - q1
        o1 = _cross2(r[..., 0], r[..., 1], q1[..., 0] - p1[..., 0], q1[..., 1] - p1[..., 1])
        o2 = _cross2(r[..., 0], r[..., 1], q2[..., 0] - p1[..., 0], q2[..., 1] - p1[..., 1])
        o3 = _cross2(sv[..., 0], sv[..., 1], p1[..., 0] - q1[..., 0], p1[..., 1] - q1[..., 1])
        o4 = _cross2(sv[..., 0], sv[..., 1], p2[..., 0] - q1[..., 0], p2[..., 1] - q1[..., 1])
        crossing = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
        d = np.where(crossing, 0.0, d)
        if skip_adjacent:
            gap = np.abs(ii[:, None] - jj[None, :])
            adjacent = (gap <= 1) | (gap == n - 1)
            d = np.where(adjacent, np.inf, d)
        if d.size:
            best = min(best, float(d.min()))
    return best


NUMPY_KERNELS = {
    "tube_field": _tube_field_np,
    "flow_tubes": _flow_tubes_np,
    "crossing_parity": _crossing_parity_np,
    "min_segment_distance": _min_segment_distance_np,
}


# --------------------------------------------------------------------------
# numba


@njit(cache=True, nogil=True)
def _chi_nb(u):
    if u <= 0.5:
        return 1.0
    if u >= 1.0:
        return 0.0
    x = 2.0 * u - 1.0
    return 1.0 - x**4 * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))


@njit(cache=True, nogil=True)
def _seg_dist_nb(z, a, b):
    d = z.shape[0]
    dd = 0.0
    dot = 0.0
    for k in range(d):
        dk = b[k] - a[k]
        dd += dk * dk
        dot += (z[k] - a[k]) * dk
    t = 0.0
    if dd > 0.0:
        t = dot / dd
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    acc = 0.0
    for k in range(d):
        r = z[k] - (a[k] + t * (b[k] - a[k]))
        acc += r * r
    return math.sqrt(acc)


@njit(cache=True, nogil=True)
def _field_at_nb(z, starts, ends, vels, rho, scale, out):
    d = z.shape[0]
    for k in range(d):
        out[k] = 0.0
    for g in range(starts.shape[0]):
        w = _chi_nb(_seg_dist_nb(z, starts[g], ends[g]) / rho)
        if w != 0.0:
            for k in range(d):
                out[k] += w * vels[g, k]
    for k in range(d):
        out[k] *= scale


@njit(cache=True, nogil=True)
def _tube_field_nb(Z, starts, ends, vels, rho, scale):
    n, d = Z.shape
    out = np.zeros((n, d))
    buf = np.zeros(d)
    for i in range(n):
        _field_at_nb(Z[i], starts, ends, vels, rho, scale, buf)
        out[i, :] = buf
    return out


@njit(cache=True, nogil=True)
def _flow_tubes_nb(Z, starts, ends, vels, rho, scale, duration, nsteps):
    n, d = Z.shape
    out = Z.copy()
    if nsteps == 0 or duration == 0.0:
        return out
    h = duration / nsteps
    k1 = np.zeros(d)
    k2 = np.zeros(d)
    k3 = np.zeros(d)
    k4 = np.zeros(d)
    tmp = np.zeros(d)
    for i in range(n):
        z = Z[i].copy()
        inside = False
        for g in range(starts.shape[0]):
            if _seg_dist_nb(z, starts[g], ends[g]) < rho:
                inside = True
                break
        if not inside:
            continue
        for _ in range(nsteps):
            _field_at_nb(z, starts, ends, vels, rho, scale, k1)
            for k in range(d):
                tmp[k] = z[k] + 0.5 * h * k1[k]
            _field_at_nb(tmp, starts, ends, vels, rho, scale, k2)
            for k in range(d):
                tmp[k] = z[k] + 0.5 * h * k2[k]
            _field_at_nb(tmp, starts, ends, vels, rho, scale, k3)
            for k in range(d):
                tmp[k] = z[k] + h * k3[k]
            _field_at_nb(tmp, starts, ends, vels, rho, scale, k4)
            for k in range(d):
                z[k] = z[k] + (h / 6.0) * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        out[i, :] = z
    return out


@njit(cache=True, nogil=True)
def _crossing_parity_nb(s, phi_sorted, segs):
    n = s.shape[0]
    parity = np.zeros(n, dtype=np.uint8)
    two_pi = 2.0 * math.pi
    for k in range(segs.shape[0]):
        s1 = segs[k, 0]
        p1 = segs[k, 1]
        s2 = segs[k, 2]
        p2 = segs[k, 3]
        if p1 == p2:
            continue
        lo = min(p1, p2)
        hi = max(p1, p2)
        for m in range(3):
            shift = (m - 1) * two_pi
            a = lo + shift
            b = hi + shift
            if b <= 0.0 or a >= two_pi:
                continue
            i0 = np.searchsorted(phi_sorted, a)
            i1 = np.searchsorted(phi_sorted, b)
            for i in range(i0, i1):
                ph = phi_sorted[i] - shift
                sc = s1 + (ph - p1) / (p2 - p1) * (s2 - s1)
                if sc < s[i]:
                    parity[i] ^= 1
    return parity


@njit(cache=True, nogil=True)
def _pt_seg_2d(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    dd = dx * dx + dy * dy
    t = 0.0
    if dd > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / dd
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    rx = px - (ax + t * dx)
    ry = py - (ay + t * dy)
    return math.sqrt(rx * rx + ry * ry)


@njit(cache=True, nogil=True)
def _min_segment_distance_nb(P, Q, skip_adjacent):
    n = P.shape[0]
    m = Q.shape[0]
    best = np.inf
    for i in range(n):
        ax, ay, bx, by = P[i, 0], P[i, 1], P[i, 2], P[i, 3]
        rx = bx - ax
        ry = by - ay
        for j in range(m):
            if skip_adjacent:
                gap = abs(i - j)
                if gap <= 1 or gap == n - 1:
                    continue
            cx, cy, ex, ey = Q[j, 0], Q[j, 1], Q[j, 2], Q[j, 3]
            sx = ex - cx
            sy = ey - cy
            o1 = rx * (cy - ay) - ry * (cx - ax)
            o2 = rx * (ey - ay) - ry * (ex - ax)
            o3 = sx * (ay - cy) - sy * (ax - cx)
            o4 = sx * (by - cy) - sy * (bx - cx)
            if o1 * o2 < 0.0 and o3 * o4 < 0.0:
                return 0.0
            d = min(
                _pt_seg_2d(ax, ay, cx, cy, ex, ey),
                _pt_seg_2d(bx, by, cx, cy, ex, ey),
                _pt_seg_2d(cx, cy, ax, ay, bx, by),
                _pt_seg_2d(ex, ey, ax, ay, bx, by),
            )
            if d < best:
                best = d
    return best


NUMBA_KERNELS = (
    {
        "tube_field": _tube_field_nb,
        "flow_tubes": _flow_tubes_nb,
        "crossing_parity": _crossing_parity_nb,
        "min_segment_distance": _min_segment_distance_nb,
    }
    if HAVE_NUMBA
    else None
)

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def tube_field(Z, starts, ends, vels, rho, scale):
    """Evaluate an image-form tube field at the rows of ``Z``."""
    Z = np.atleast_2d(_f64(Z))
    return _ACTIVE["tube_field"](Z, _f64(starts), _f64(ends), _f64(vels), float(rho), float(scale))


def flow_tubes(Z, starts, ends, vels, rho, scale, duration, nsteps):
    """Fixed-step RK4 flow of an image-form tube field for every row of ``Z``.

    Rows that start outside the support are returned bit-for-bit unchanged.
    """
    Z = np.atleast_2d(_f64(Z))
    return _ACTIVE["flow_tubes"](
        Z, _f64(starts), _f64(ends), _f64(vels), float(rho), float(scale), float(duration), int(nsteps)
    )


def crossing_parity(s, phi_sorted, segs):
    """Parity of crossings between each sample and the ``s = 0`` pole.

    ``phi_sorted`` must be ascending in ``[0, 2 pi)``; ``segs`` rows are
    ``(s1, phi1, s2, phi2)`` with ``phi1`` in ``[0, 2 pi)`` and ``phi2``
    unwrapped relative to it.
    """
    return _ACTIVE["crossing_parity"](_f64(s), _f64(phi_sorted), _f64(segs))


def min_segment_distance(P, Q, skip_adjacent=False):
    """Minimum distance between planar segment sets (rows ``x1, y1, x2, y2``).

    With ``skip_adjacent`` the two sets are the same closed polyline and pairs
    sharing a vertex are ignored.
    """
    return float(_ACTIVE["min_segment_distance"](_f64(P), _f64(Q), bool(skip_adjacent)))
