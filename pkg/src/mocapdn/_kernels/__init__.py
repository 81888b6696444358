"""Kernel backend selection.

The compiled extension (cyk) is preferred when importable; the numpy
lane (pyk) is the fallback. Set MOCAPDN_BACKEND=python or =cython to
force a lane (forcing cython raises if the extension is missing).
"""

import os

from . import pyk

_forced = os.environ.get("MOCAPDN_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = pyk
elif _forced == "cython":
    from . import cyk as _impl
elif _forced:
    raise ValueError(f"unknown MOCAPDN_BACKEND {_forced!r} (use python or cython)")
else:
    try:
        from . import cyk as _impl
    except ImportError:
        _impl = pyk

BACKEND = _impl.BACKEND
softmax_rows = _impl.softmax_rows
softmax_rows_grad = _impl.softmax_rows_grad
layer_norm_rows = _impl.layer_norm_rows
layer_norm_rows_grad = _impl.layer_norm_rows_grad
adam_update = _impl.adam_update
