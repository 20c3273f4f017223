"""Kernel dispatch between numba-compiled loops and pure numpy fallbacks.

Every hot kernel in this package exists twice: a scalar-loop version that
numba compiles, and a vectorized numpy version with identical semantics.
The env var LAYERFIELD_NUMBA selects the path at import time:

    LAYERFIELD_NUMBA=0   force the pure numpy fallback
    LAYERFIELD_NUMBA=1   require numba (ImportError if missing)
    unset                use numba when importable, else fall back

Both paths are exercised by the test suite and compared by the benchmark
in layerfield.bench.
"""

from __future__ import annotations

import os
import warnings


def _resolve() -> bool:
    raw = os.environ.get("LAYERFIELD_NUMBA", "").strip().lower()
    if raw in ("0", "false", "off", "no"):
        return False
    try:
        import numba  # noqa: F401
        return True
    except ImportError:
        if raw in ("1", "true", "on", "yes"):
            raise
        warnings.warn("numba unavailable, falling back to pure numpy kernels")
        return False


NUMBA_ENABLED = _resolve()


def njit(**kwargs):
    """numba.njit when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        import numba
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(**kwargs)

    def passthrough(fn):
        return fn

    return passthrough
