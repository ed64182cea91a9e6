"""Kernel backend selection.

Prefers the compiled Cython extension; falls back to pure numpy.  Set
TLTARNET_BACKEND=pure or TLTARNET_BACKEND=compiled to force a choice
(forcing "compiled" raises if the extension was not built).
"""

import os

from . import _purepy

_forced = os.environ.get("TLTARNET_BACKEND", "").strip().lower()

if _forced == "pure":
    _impl = _purepy
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _purepy

BACKEND_NAME = _impl.BACKEND_NAME
forward_stack = _impl.forward_stack
backward_stack = _impl.backward_stack
adam_update = _impl.adam_update


def get_backend(name=None):
    """Return the kernel module for `name` ("pure"/"compiled"/None=active)."""
    if name in (None, BACKEND_NAME):
        return _impl
    if name == "pure":
        return _purepy
    from . import _core

    return _core
