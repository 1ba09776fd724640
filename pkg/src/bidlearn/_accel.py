"""Backend selection for the hot loops.

Set ``BIDLEARN_NUMBA=0`` to run every kernel as plain Python over numpy
arrays. Both paths consume identical random draws, so they produce the
same trajectories.
"""
import os

_FLAG = os.environ.get("BIDLEARN_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def backend_name():
    return "numba" if USE_NUMBA else "python"
