"""Kernel backend selection.

At import time we try the compiled Cython extension and fall back to the
NumPy implementation when it is not available.  The FOVEATE_KERNELS
environment variable overrides the choice:

    FOVEATE_KERNELS=python   force the NumPy fallback
    FOVEATE_KERNELS=cython   require the extension (ImportError if missing)
    FOVEATE_KERNELS=auto     default behaviour

Both backends expose the same functions and are interchangeable to within
floating-point round-off.
"""

import os

_choice = os.environ.get("FOVEATE_KERNELS", "auto").strip().lower()

if _choice not in ("auto", "python", "cython"):
    raise ValueError(
        "FOVEATE_KERNELS must be one of auto/python/cython, got %r" % _choice
    )

if _choice == "python":
    from . import _python as _impl
elif _choice == "cython":
    from . import _ckernels as _impl  # noqa: F401  (raises if not built)
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        from . import _python as _impl

BACKEND_NAME = _impl.BACKEND_NAME

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward


def backend():
    """Name of the active kernel backend ('python' or 'cython')."""
    return BACKEND_NAME
