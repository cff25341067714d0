from __future__ import annotations

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from orbitrans import kernels
from orbitrans._backend import ENV_FLAG
from orbitrans.area import SpindleCurve
from orbitrans.groups import dihedral

needs_numba = pytest.mark.skipif(kernels.NUMBA_KERNELS is None, reason="numba not installed")


def _jobs():
    rng = np.random.default_rng(0)
    g = dihedral(3)
    a, b = np.array([1.0, 0.3]), np.array([1.6, 0.5])
    starts, ends, vels = g.orbit(a), g.orbit(b), g.orbit(b - a)
    Z = rng.uniform(-2, 2, size=(500, 2))
    Zflow = a + rng.uniform(0, 1, size=(16, 1)) * (b - a) + rng.normal(scale=0.03, size=(16, 2))
    seg = SpindleCurve.circle(0.5, 1.0, 0.2, n=128).segments()
    s = rng.uniform(0, 1, size=20_000)
    phi = np.sort(rng.uniform(0, 2 * math.pi, size=20_000))
    P = seg[:, [1, 0, 3, 2]]
    Q = P + np.array([0.05, 0.01, 0.05, 0.01])
    return {
        "tube_field": lambda k: k["tube_field"](Z, starts, ends, vels, 0.2, 0.5),
        "flow_tubes": lambda k: k["flow_tubes"](Zflow, starts, ends, vels, 0.2, 0.5, 1.0, 200),
        "crossing_parity": lambda k: k["crossing_parity"](s, phi, seg),
        "min_segment_distance": lambda k: k["min_segment_distance"](P, P, True),
        "min_segment_distance_pair": lambda k: k["min_segment_distance"](P, Q, False),
    }


@needs_numba
@pytest.mark.parametrize("name", sorted(_jobs()))
def test_backends_agree(name):
    job = _jobs()[name]
    a = np.asarray(job(kernels.NUMPY_KERNELS), dtype=float)
    b = np.asarray(job(kernels.NUMBA_KERNELS), dtype=float)
    assert a.shape == b.shape
    assert np.abs(a - b).max() < 1e-12


def test_crossing_parity_against_python_loop():
    seg = SpindleCurve.circle(0.5, 1.0, 0.2, n=32).segments()
    rng = np.random.default_rng(3)
    s = rng.uniform(0, 1, 2000)
    phi = np.sort(rng.uniform(0, 2 * math.pi, 2000))
    got = np.asarray(kernels.crossing_parity(s, phi, seg))
    # the loop is a disc of radius 0.2 in the (s, phi) plane: inside points cross the meridian
    # from N an odd number of times
    inside = (s - 0.5) ** 2 + (phi - 1.0) ** 2 < 0.2**2
    far = np.abs(np.hypot(s - 0.5, phi - 1.0) - 0.2) > 1e-3
    assert np.array_equal(got[far].astype(bool), inside[far])


def test_pure_numpy_flag_switches_backend():
    env = dict(os.environ, **{ENV_FLAG: "1"})
    code = "from orbitrans._backend import backend_name; print(backend_name())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
