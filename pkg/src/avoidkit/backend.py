"""Hot-loop backend selection.

The sequential samplers and scan loops have two interchangeable
implementations: numba @njit kernels and a numpy/Python fallback.  Both
consume identical pre-generated random draws, so the backend never
changes any output, only speed.

Selection: the AVOIDKIT_BACKEND environment variable ("auto", "numba",
"numpy"; default "auto" = numba when importable), overridable at runtime
with set_backend().
"""

from __future__ import annotations

import os

_VALID = ("auto", "numba", "numpy")
_requested = os.environ.get("AVOIDKIT_BACKEND", "auto").strip().lower() or "auto"
_numba_ok: bool | None = None


def numba_available() -> bool:
    global _numba_ok
    if _numba_ok is None:
        try:
            import numba  # noqa: F401
            _numba_ok = True
        except ImportError:
            _numba_ok = False
    return _numba_ok


def set_backend(name: str) -> None:
    global _requested
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not numba_available():
        raise RuntimeError("numba backend requested but numba is not importable")
    _requested = name


def active_backend() -> str:
    if _requested == "auto":
        return "numba" if numba_available() else "numpy"
    return _requested


def use_numba() -> bool:
    return active_backend() == "numba"
