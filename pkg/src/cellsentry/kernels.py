"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when
``CELLSENTRY_PURE_PYTHON`` is set to a non-empty value) the pure-Python
implementations are used. Both produce identical results.
"""

from __future__ import annotations

import os

from cellsentry import _kernels_py

if os.environ.get("CELLSENTRY_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from cellsentry import _kernels as _impl  # type: ignore[attr-defined, no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
tarjan_scc = _impl.tarjan_scc
reachable = _impl.reachable
line_outliers = _impl.line_outliers

__all__ = ["BACKEND", "tarjan_scc", "reachable", "line_outliers"]
