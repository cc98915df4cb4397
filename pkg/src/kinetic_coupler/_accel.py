"""Backend selection for the hot kernels.

``KINETIC_COUPLER_BACKEND`` picks ``numba`` (default when importable) or
``numpy``. ``KINETIC_COUPLER_THREADS`` caps the numba worker count.
"""
import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the TBB layer in this environment may be too old; try it last
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range

BACKENDS = ("numba", "numpy")


def active_backend(override=None):
    """Return the backend name to use, honouring an explicit override first."""
    name = override or os.environ.get("KINETIC_COUPLER_BACKEND", "")
    name = name.strip().lower()
    if not name:
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        logger.warning("numba requested but not importable; using numpy")
        return "numpy"
    return name


def thread_cap():
    """Worker cap from ``KINETIC_COUPLER_THREADS`` (None means hardware default)."""
    raw = os.environ.get("KINETIC_COUPLER_THREADS", "").strip()
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("KINETIC_COUPLER_THREADS must be >= 1")
    return n


def apply_thread_cap():
    cap = thread_cap()
    if cap is None or not HAVE_NUMBA:
        return
    numba.set_num_threads(min(cap, numba.config.NUMBA_NUM_THREADS))
