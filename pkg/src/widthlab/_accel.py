"""Optional numba acceleration.

Set ``WIDTHLAB_NUMBA=0`` to force the pure-numpy code paths. When numba is
not importable the numpy paths are used regardless of the flag.
"""

from __future__ import annotations

import os

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn

    prange = range

ENV_FLAG = "WIDTHLAB_NUMBA"


def numba_enabled() -> bool:
    if not HAVE_NUMBA:
        return False
    return os.environ.get(ENV_FLAG, "1").strip().lower() not in ("0", "false", "no", "off")


__all__ = ["HAVE_NUMBA", "ENV_FLAG", "njit", "prange", "numba_enabled"]
