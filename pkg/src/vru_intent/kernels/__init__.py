"""Kernel backend selection.

The compiled extension (_native, Cython) and the NumPy reference
(_python) expose the same three routines and are interchangeable; the
forest kernels are bit-identical by construction.  The compiled one is
picked when importable.  Set VRU_INTENT_BACKEND=python or =native to
force a choice; forcing native without the built extension is an error.
"""

from __future__ import annotations

import os

from . import _python

_forced = os.environ.get("VRU_INTENT_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _python
elif _forced == "native":
    from . import _native as _impl
elif _forced in ("", "auto"):
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _python
else:
    raise ImportError(f"VRU_INTENT_BACKEND={_forced!r}: expected 'python' or 'native'")

BACKEND = _impl.BACKEND
frame_blocks = _impl.frame_blocks
build_tree = _impl.build_tree
tree_leaf_values = _impl.tree_leaf_values


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _native  # noqa: F401

        out.append("native")
    except ImportError:
        pass
    return out
