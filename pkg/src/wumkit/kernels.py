"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``WUMKIT_BACKEND=python`` forces the fallback and
``WUMKIT_BACKEND=native`` makes a missing extension an import error.
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

GINI = python_backend.GINI
MSE = python_backend.MSE

_choice = os.environ.get("WUMKIT_BACKEND", "auto").lower()

native_backend = None
if _choice != "python":
    try:
        from . import _native as native_backend  # type: ignore[no-redef]
    except ImportError:
        if _choice == "native":
            raise
        native_backend = None

_active = native_backend if native_backend is not None else python_backend
BACKEND = "native" if _active is native_backend else "python"

build_tree = _active.build_tree
apply_tree = _active.apply_tree
build_itree = _active.build_itree
forest_path_length = _active.forest_path_length


def backends() -> dict:
    """Available backends by name, for benchmarks and parity tests."""
    out = {"python": python_backend}
    if native_backend is not None:
        out["native"] = native_backend
    return out
