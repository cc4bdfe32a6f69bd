"""Numba switch.

Set ``INSTRACK_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
debugging or on platforms without an LLVM toolchain.
"""
import os

_FLAG = os.environ.get("INSTRACK_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")

JIT_OPTIONS = {"nogil": True, "cache": True}


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it as is."""
    if not HAS_NUMBA:
        return func
    return numba.njit(**JIT_OPTIONS)(func)
