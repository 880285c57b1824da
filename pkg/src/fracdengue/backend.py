"""Selection of the time-march kernel: compiled extension or NumPy fallback.

The compiled core is used when importable; set FRACDENGUE_BACKEND=python|compiled
to force a choice (forcing "compiled" raises if the extension is missing).
"""
from __future__ import annotations

import os

from . import _core_py

try:
    from . import _core  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _core = None

_FORCED = os.environ.get("FRACDENGUE_BACKEND", "auto").lower()
if _FORCED == "python":
    DEFAULT = _core_py
elif _FORCED == "compiled":
    if _core is None:
        raise ImportError(
            "FRACDENGUE_BACKEND=compiled but the fracdengue._core extension is not built"
        )
    DEFAULT = _core
else:
    DEFAULT = _core if _core is not None else _core_py


def available_backends() -> dict:
    out = {"python": _core_py}
    if _core is not None:
        out["compiled"] = _core
    return out


def get_backend(name: str = "auto"):
    if name in (None, "auto"):
        return DEFAULT
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; have {sorted(available_backends())}")
