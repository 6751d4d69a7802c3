"""Kernel backend selection.

The compiled module is used when it imports; setting ``SKSFEM_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("SKSFEM_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.NAME
