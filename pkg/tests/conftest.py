"""Independent oracles shared by the test modules.

None of these call into the code under test beyond reading group matrices:
closure is recomputed by plain matrix products, components by a grid flood
fill, and the matrix exponential by a Taylor series.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


def brute_closure(generators, tol=1e-9, limit=600):
    """Multiply everything by everything until nothing new appears."""
    d = np.asarray(generators[0]).shape[0]
    mats = [np.eye(d)] + [np.asarray(g, dtype=float) for g in generators]
    changed = True
    while changed:
        changed = False
        for a, b in itertools.product(list(mats), repeat=2):
            p = a @ b
            if not any(np.abs(p - m).max() < tol for m in mats):
                mats.append(p)
                changed = True
                if len(mats) > limit:
                    raise RuntimeError("closure too large")
    return mats


def _find(mats, m, tol=1e-9):
    for k, x in enumerate(mats):
        if np.abs(x - m).max() < tol:
            return k
    return None


def brute_subgroups(mats):
    """All subsets containing the identity that are closed under products."""
    n = len(mats)
    ident = _find(mats, np.eye(mats[0].shape[0]))
    others = [k for k in range(n) if k != ident]
    prod = [[_find(mats, mats[i] @ mats[j]) for j in range(n)] for i in range(n)]
    found = []
    for r in range(len(others) + 1):
        for combo in itertools.combinations(others, r):
            s = set(combo) | {ident}
            if all(prod[i][j] in s for i in s for j in s):
                found.append(frozenset(s))
    return found


def expm_taylor(A, terms=30):
    """exp(A) by scaling and squaring of a truncated Taylor series."""
    A = np.asarray(A, dtype=float)
    norm = np.abs(A).sum(axis=1).max()
    k = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    B = A / (2**k)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for j in range(1, terms):
        term = term @ B / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def _subgroup_key(mats, idx):
    return frozenset(idx)


def grid_components(group_mats, extent=1.0, n=200, band=2.5):
    """Flood-fill components of the singular set on an n x n grid.

    A grid point's isotropy is every element moving it by less than
    ``band`` grid spacings, closed under products; 8-neighbours with the
    same nontrivial isotropy belong to the same component. Returns
    ``(labels, isotropy_keys, coords, components)`` where ``components`` maps
    a label to its isotropy key.
    """
    mats = [np.asarray(m, dtype=float) for m in group_mats]
    xs = np.linspace(-extent, extent, n)
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    moved = np.stack([np.linalg.norm(P @ m.T - P, axis=1) for m in mats], axis=1) < band * h
    closure_cache: dict[tuple, frozenset] = {}
    keys = np.empty(P.shape[0], dtype=object)
    for i, row in enumerate(moved):
        raw = tuple(np.flatnonzero(row))
        if raw not in closure_cache:
            members = set(raw)
            grew = True
            while grew:
                grew = False
                for a, b in itertools.product(list(members), repeat=2):
                    k = _find(mats, mats[a] @ mats[b])
                    if k not in members:
                        members.add(k)
                        grew = True
            closure_cache[raw] = frozenset(members)
        keys[i] = closure_cache[raw]
    keys = keys.reshape(n, n)
    labels = -np.ones((n, n), dtype=int)
    components = {}
    nxt = 0
    for i in range(n):
        for j in range(n):
            if labels[i, j] >= 0 or len(keys[i, j]) == 1:
                continue
            labels[i, j] = nxt
            components[nxt] = keys[i, j]
            queue = deque([(i, j)])
            while queue:
                a, b = queue.popleft()
                for da in (-1, 0, 1):
                    for db in (-1, 0, 1):
                        u, v = a + da, b + db
                        if 0 <= u < n and 0 <= v < n and labels[u, v] < 0 and keys[u, v] == keys[a, b]:
                            labels[u, v] = nxt
                            queue.append((u, v))
            nxt += 1
    return labels, keys, xs, components


def nearest_cell(xs, z):
    return int(np.argmin(np.abs(xs - z[0]))), int(np.argmin(np.abs(xs - z[1])))


def shoelace(points):
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1])))


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
