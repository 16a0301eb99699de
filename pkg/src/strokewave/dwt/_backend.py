"""Kernel backend selection: compiled extension if importable, numpy otherwise.

Set STROKEWAVE_PURE_PY=1 to force the numpy kernels (used by the benchmark
and by tests that compare the two backends).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("STROKEWAVE_PURE_PY") == "1":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py


def active_backend() -> str:
    """Name of the kernel backend in use: "compiled" or "python"."""
    return kernels.BACKEND
