"""Backend selection for the hot kernels.

The compiled ``_speedups`` extension is used when it imports; otherwise the
pure-Python ``_fallback`` module is used. Setting ``DPBANDIT_PURE=1`` forces
the fallback.
"""
import os

from . import _fallback

_force_pure = os.environ.get("DPBANDIT_PURE", "").strip().lower() in {"1", "true", "yes"}

_impl = _fallback
if not _force_pure:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _fallback

BACKEND = "python" if _impl is _fallback else "cython"

DyadicCounter = _impl.DyadicCounter
dyadic_nodes = _impl.dyadic_nodes
locate_cell = _impl.locate_cell
first_below = _impl.first_below
argmax_first = _impl.argmax_first
exp_sample = _impl.exp_sample


def backends():
    """Map of backend name to kernel module, for benchmarks and parity tests."""
    found = {"python": _fallback}
    try:
        from . import _speedups
    except ImportError:
        pass
    else:
        found["cython"] = _speedups
    return found
