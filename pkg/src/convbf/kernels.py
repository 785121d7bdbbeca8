"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting
``CONVBF_BACKEND=python`` forces the numpy fallback.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("CONVBF_BACKEND", "").lower() not in ("python", "numpy"):
    try:
        from . import _ext as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback

stack_frames = _impl.stack_frames
weighted_covariance = _impl.weighted_covariance
apply_filter = _impl.apply_filter
levinson = _impl.levinson
lpc_cepstrum = _impl.lpc_cepstrum

BACKENDS = {"python": _fallback}
try:
    from . import _ext
    BACKENDS["compiled"] = _ext
except ImportError:
    pass
