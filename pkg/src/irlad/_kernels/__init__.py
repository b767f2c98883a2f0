"""Dense MLP kernels with a compiled fast path.

The Cython extension is preferred when importable; set IRLAD_PURE_PYTHON=1
to force the numpy fallback (useful for benchmarking and debugging).
"""
import os

from . import dense_py

if os.environ.get("IRLAD_PURE_PYTHON", "") not in ("", "0"):
    _impl = dense_py
else:
    try:
        from . import dense_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = dense_py

forward = _impl.forward
backward = _impl.backward
IMPL = _impl.IMPL

__all__ = ["forward", "backward", "IMPL", "dense_py"]
