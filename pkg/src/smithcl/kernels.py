"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``SMITHCL_PURE=1`` to
force the numpy fallback.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("SMITHCL_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback
else:
    _impl = _fallback

frechet_terms = _impl.frechet_terms
rt_terms = _impl.rt_terms
storm_batch = _impl.storm_batch

__all__ = ["BACKEND", "frechet_terms", "rt_terms", "storm_batch"]
