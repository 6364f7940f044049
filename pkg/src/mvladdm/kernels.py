"""Hot-loop kernels, compiled when available.

The Cython extension is preferred; when it is missing (source checkout
without a build, or ``MVLADDM_PURE_PYTHON=1``) the numpy fallback is used.
``BACKEND`` names the active implementation.
"""
import os
import warnings

from . import _fallback

_compiled = None
if os.environ.get("MVLADDM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError as exc:  # pragma: no cover - depends on build
        warnings.warn(f"mvladdm: compiled kernels unavailable ({exc}); using numpy fallback")
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "python"

crf_forward_backward = _impl.crf_forward_backward
viterbi = _impl.viterbi
nonmax3d = _impl.nonmax3d
median_flow_track = _impl.median_flow_track


def backends():
    """Map of backend name to kernel module, for benchmarks and parity tests."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
