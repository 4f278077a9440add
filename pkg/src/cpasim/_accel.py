"""Numba switch.

Hot kernels are written once in numba-compatible Python. Setting
``CPASIM_DISABLE_NUMBA=1`` (or numba being unavailable) makes :func:`jit`
a no-op so the same source runs as plain Python/NumPy.
"""
import os

_DISABLED = os.environ.get("CPASIM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def jit(func):
    if HAS_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name():
    return "numba" if HAS_NUMBA else "numpy"
