"""Numba availability and the switch between compiled and pure-numpy kernels.

Set ``MVGEOSTAT_NUMBA=0`` in the environment before import to force the
numpy fallback path even when numba is installed.
"""

import os
from typing import Any, Callable

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_enabled(value: str) -> bool:
    return value.strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _flag_enabled(os.environ.get("MVGEOSTAT_NUMBA", "1"))


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` with on-disk caching, or a no-op decorator without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
