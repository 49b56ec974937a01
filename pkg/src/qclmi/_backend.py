"""Kernel backend chosen at import: compiled extension if present, NumPy otherwise.

Set ``QCLMI_BACKEND=python`` to force the NumPy fallback.
"""

import os

from . import _fallback

if os.environ.get("QCLMI_BACKEND", "").lower() in ("python", "numpy", "fallback"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _fallback
        BACKEND = "python"
    else:
        BACKEND = "cython"

fallback = _fallback
