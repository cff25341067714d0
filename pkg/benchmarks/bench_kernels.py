"""Compare the numba and pure-numpy kernels on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each backend and the
maximum absolute difference between their outputs.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from orbitrans import kernels
from orbitrans.area import SpindleCurve
from orbitrans.groups import dihedral


def _best(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(rng):
    g = dihedral(3)
    a, b = np.array([1.0, 0.3]), np.array([1.6, 0.5])
    starts, ends = g.orbit(a), g.orbit(b)
    vels = g.orbit(b - a)
    Z = rng.uniform(-2, 2, size=(2000, 2))
    Zflow = a + rng.uniform(0, 1, size=(64, 1)) * (b - a) + rng.normal(scale=0.03, size=(64, 2))
    curve = SpindleCurve.circle(0.5, 1.0, 0.2, n=512)
    seg = curve.segments()
    s = rng.uniform(0, 1, size=200_000)
    phi = np.sort(rng.uniform(0, 2 * math.pi, size=200_000))
    P = seg[:, [1, 0, 3, 2]]
    return {
        "tube_field (2000 pts, |G|=6)": lambda k: k["tube_field"](Z, starts, ends, vels, 0.2, 0.5),
        "flow_tubes (64 pts, 1000 RK4 steps)": lambda k: k["flow_tubes"](Zflow, starts, ends, vels, 0.2, 0.5, 1.0, 1000),
        "crossing_parity (2e5 samples, 512 segs)": lambda k: k["crossing_parity"](s, phi, seg),
        "min_segment_distance (512 x 512)": lambda k: k["min_segment_distance"](P, P, True),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if kernels.NUMBA_KERNELS is None:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':42s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, job in workloads(rng).items():
        job(kernels.NUMBA_KERNELS)  # compile outside the timing
        t_np, out_np = _best(lambda: job(kernels.NUMPY_KERNELS), args.repeat)
        t_nb, out_nb = _best(lambda: job(kernels.NUMBA_KERNELS), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np, dtype=float) - np.asarray(out_nb, dtype=float))))
        print(f"{name:42s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:11.3g}")


if __name__ == "__main__":
    main()
