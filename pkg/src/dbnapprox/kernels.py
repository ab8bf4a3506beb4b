"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Setting ``DBNAPPROX_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DBNAPPROX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

GAUSSIAN = _pykernels.GAUSSIAN
TRUNCATED_EXPONENTIAL = _pykernels.TRUNCATED_EXPONENTIAL

mixture_density = _impl.mixture_density
log_esf = _impl.log_esf
visible_log_weights = _impl.visible_log_weights

__all__ = [
    "BACKEND",
    "GAUSSIAN",
    "TRUNCATED_EXPONENTIAL",
    "mixture_density",
    "log_esf",
    "visible_log_weights",
]
