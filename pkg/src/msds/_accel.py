"""Numba toggle.

Hot kernels are compiled with ``numba.njit`` when numba is importable and
``MSDS_NUMBA`` is not set to ``0``; otherwise the pure-numpy implementations
are used.  The choice is made once, at import time.
"""

import os

_FLAG = os.environ.get("MSDS_NUMBA", "1").strip().lower()

try:  # pragma: no cover - depends on the environment
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(func):
    """Compile ``func`` in nopython mode with the package defaults."""
    return numba.njit(func, **NUMBA_OPTS)
