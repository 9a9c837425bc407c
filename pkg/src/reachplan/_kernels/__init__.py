"""Hot kernels: compiled extension when available, NumPy fallback otherwise.

Set REACHPLAN_PURE_PYTHON=1 to force the fallback implementations.
"""

import os

from reachplan._kernels import _fallback

if os.environ.get("REACHPLAN_PURE_PYTHON") == "1":
    _impl = _fallback
    HAVE_COMPILED = False
else:
    try:
        from reachplan._kernels import _core as _impl
        HAVE_COMPILED = True
    except ImportError:
        _impl = _fallback
        HAVE_COMPILED = False

khachiyan_weights = _impl.khachiyan_weights
polar_targets = _impl.polar_targets

__all__ = ["HAVE_COMPILED", "khachiyan_weights", "polar_targets"]
