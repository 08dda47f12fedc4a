"""Hot inner loops (NLM accumulation, 8-connected labeling).

Two interchangeable implementations live here: ``_numba`` (JIT-compiled
loops) and ``_numpy`` (vectorized over pixels). The active one is picked
once at import time from the ``STEMSEG_BACKEND`` environment variable
(``numba`` or ``numpy``); when unset, numba is used if it imports.
Both produce identical labelings and NLM sums in the same per-pixel
order, so outputs agree to the last few ulps of ``exp``.
"""

import importlib
import os
from types import ModuleType

_VALID = ("numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _select() -> str:
    requested = os.environ.get("STEMSEG_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ImportError(
            f"STEMSEG_BACKEND={requested!r} is not one of {', '.join(_VALID)}"
        )
    if requested == "numpy":
        return "numpy"
    if requested == "numba" or _numba_available():
        return "numba"
    return "numpy"


def load(name: str) -> ModuleType:
    """Import a specific backend module regardless of the env flag."""
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    return importlib.import_module(f"{__name__}._{name}")


BACKEND = _select()
_impl = load(BACKEND)

nlm_filter = _impl.nlm_filter
label_8conn = _impl.label_8conn

__all__ = ["BACKEND", "load", "nlm_filter", "label_8conn"]
