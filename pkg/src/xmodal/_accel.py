"""Numba switch for the hot kernels.

Set ``XMODAL_DISABLE_NUMBA=1`` to force the pure-numpy paths. Both paths are
kept bit-compatible and are cross-checked in the test suite.
"""

import os

_DISABLED = os.environ.get("XMODAL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    # error_model='numpy' keeps division semantics identical to the numpy path
    return _numba.njit(cache=True, nogil=True, error_model="numpy")(func)


def select(numba_impl, numpy_impl, backend=None):
    """Pick an implementation; ``backend`` may force 'numba' or 'numpy'."""
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba_impl
    if backend == "numpy":
        return numpy_impl
    raise ValueError(f"unknown backend {backend!r}")
