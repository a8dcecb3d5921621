"""Kernel backend selection.

The hot loops (tabular-game episode engine, surrogate dynamics step) exist
twice: a Cython extension (advgait._core) and a pure-Python twin
(advgait._purepy).  The compiled module is preferred when importable; the
environment variable ``ADVGAIT_BACKEND=pure|compiled`` forces a choice, and
``set_backend`` switches at runtime (used by the equivalence tests and the
benchmark).
"""

from __future__ import annotations

import os

from . import _purepy

try:
    from . import _core
except ImportError:   # extension not built; fall back silently
    _core = None

_active = None


def _resolve(name: str):
    if name == "pure":
        return _purepy
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled backend requested but advgait._core "
                               "is not built (pip install -e . rebuilds it)")
        return _core
    if name == "auto":
        return _core if _core is not None else _purepy
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name: str) -> None:
    global _active
    _active = _resolve(name)


def kernels():
    global _active
    if _active is None:
        _active = _resolve(os.environ.get("ADVGAIT_BACKEND", "auto"))
    return _active


def backend_name() -> str:
    return kernels().BACKEND_NAME


def available_backends() -> list[str]:
    names = ["pure"]
    if _core is not None:
        names.append("compiled")
    return names
