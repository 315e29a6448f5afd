"""Numeric backend selection.

The hot kernels in :mod:`hotspot_sim.kernels` exist in two flavours: a
numba ``@njit`` implementation and a pure-numpy one.  The active flavour is
chosen by the ``HOTSPOT_SIM_BACKEND`` environment variable:

* ``numba``  -- JIT kernels (default when numba imports cleanly)
* ``numpy``  -- vectorised numpy fallback

Both backends compute the same quantities; they may differ in the last few
ulps because summation order differs.
"""

import os

BACKEND_ENV = "HOTSPOT_SIM_BACKEND"

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dep, belt and braces
    NUMBA_AVAILABLE = False


def active_backend() -> str:
    """Resolve the backend name for the current call ("numba" or "numpy")."""
    choice = os.environ.get(BACKEND_ENV, "").strip().lower()
    if choice in ("numba", "numpy"):
        if choice == "numba" and not NUMBA_AVAILABLE:
            raise RuntimeError(
                f"{BACKEND_ENV}=numba requested but numba is not importable"
            )
        return choice
    return "numba" if NUMBA_AVAILABLE else "numpy"


def use_numba() -> bool:
    return active_backend() == "numba"
