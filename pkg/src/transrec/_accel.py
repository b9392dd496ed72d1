"""Optional numba acceleration.

Kernels are written once as plain Python over numpy arrays and compiled with
``numba.njit`` when available. Set ``TRANSREC_DISABLE_NUMBA=1`` to run the
interpreted path (useful for debugging and for the benchmark comparison).
"""

import os

# numba's default TBB layer warns on some installs; the workqueue layer is
# always present and good enough for the per-row kernels here.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

_DISABLED = os.environ.get("TRANSREC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - exercised via env flag
    _numba = None

NUMBA_ENABLED = _numba is not None


def jit(fn):
    """Compile ``fn`` in nopython mode if numba is enabled, else return it unchanged."""
    if _numba is None:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)


def jit_parallel(fn):
    if _numba is None:
        return fn
    return _numba.njit(cache=True, nogil=True, parallel=True)(fn)


if _numba is not None:
    prange = _numba.prange
else:
    prange = range


def set_threads(n):
    """Cap the worker threads used by parallel kernels. No-op without numba."""
    if _numba is None or n is None:
        return
    n = max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS))
    _numba.set_num_threads(n)
