"""Optional numba acceleration.

Hot kernels are written twice: a loop version compiled with ``njit`` and a
vectorised numpy version.  ``USE_NUMBA`` picks which one the public
dispatchers call.  Set ``FOCKHANKEL_NUMBA=0`` in the environment to force the
numpy path (useful for debugging and for the benchmark).
"""
import os

_flag = os.environ.get("FOCKHANKEL_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _numba_njit = None

USE_NUMBA = HAVE_NUMBA and _wanted


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    Compilation is lazy, so decorating a kernel costs nothing when the numpy
    path is selected.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)
