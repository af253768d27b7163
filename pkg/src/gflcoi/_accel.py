"""Optional numba acceleration.

Set ``GFLCOI_PURE_NUMPY=1`` to force the vectorized numpy kernels even when
numba is importable.
"""
import os

PURE_NUMPY = os.environ.get("GFLCOI_PURE_NUMPY", "0").lower() in ("1", "true", "yes")

try:
    if PURE_NUMPY:
        raise ImportError("numba disabled by GFLCOI_PURE_NUMPY")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
