"""Backend selection for the compiled kernels.

Set ``ORBITRANS_PURE_NUMPY=1`` to force the pure-numpy code paths even when
numba is importable. The choice is read once at import time.
"""

from __future__ import annotations

import os

ENV_FLAG = "ORBITRANS_PURE_NUMPY"


def _have_numba() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _have_numba()
USE_NUMBA = HAVE_NUMBA and os.environ.get(ENV_FLAG, "").strip().lower() in ("", "0", "false", "no")

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised only without numba installed

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(f):
            return f

        return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
