"""Kernel selection: compiled core when importable, else pure Python.

Set ``ANNSCOPE_PURE_PYTHON=1`` to force the fallback.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

python_kernels = _pykernels
compiled_kernels = None
try:
    from . import _kernels as compiled_kernels  # type: ignore[no-redef]
except ImportError:  # pragma: no cover - depends on the build
    log.debug("compiled kernels unavailable, using pure Python")

if compiled_kernels is not None and not os.environ.get("ANNSCOPE_PURE_PYTHON"):
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = _pykernels
    BACKEND = "python"
