"""Select the kernel implementation at import time.

The compiled extension is used when it was built; set ``GEOSMD_PURE_PYTHON=1``
to force the numpy/pure-Python fallback.
"""

import importlib
import os

AVAILABLE = ["python"]

try:
    from . import _kernels  # noqa: F401
except ImportError:
    _kernels = None
else:
    AVAILABLE.insert(0, "compiled")

if _kernels is not None and not os.environ.get("GEOSMD_PURE_PYTHON"):
    impl = _kernels
else:
    from . import _fallback as impl

BACKEND = impl.BACKEND


def get(name=None):
    """Return the kernel module for ``name`` ("compiled"/"python"), or the default."""
    if name is None:
        return impl
    if name == "compiled":
        if _kernels is None:
            raise ImportError("the compiled geosmd._kernels extension is not built")
        return _kernels
    if name == "python":
        return importlib.import_module("geosmd._fallback")
    raise ValueError(f"unknown backend {name!r}")
