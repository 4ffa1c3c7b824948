"""Hot-path kernels with backend selection.

The compiled Cython extension is preferred; the numpy implementation is the
fallback when the extension was not built or when ``PPN_PURE=1`` is set in
the environment (used by the benchmark and the backend-equivalence tests).
"""

import os

from . import gru_numpy

if os.environ.get("PPN_PURE") == "1":
    _impl = gru_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _gru_cy as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = gru_numpy
        BACKEND = "numpy"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward

__all__ = ["BACKEND", "gru_forward", "gru_backward", "gru_numpy"]
