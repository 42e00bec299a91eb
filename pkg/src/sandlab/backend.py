"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python
module is the fallback and the executable reference.  Set
SANDLAB_BACKEND=python to force the fallback (used by the benchmark and
the equivalence tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SANDLAB_BACKEND", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py

KIND_DISAPPEAR = _kernels_py.KIND_DISAPPEAR
KIND_CREATE_ORIGIN = _kernels_py.KIND_CREATE_ORIGIN
KIND_CREATE_RB = _kernels_py.KIND_CREATE_RB
KIND_MOVE = _kernels_py.KIND_MOVE


def backend_name():
    return "compiled" if _impl.COMPILED else "python"


def stabilize_padded(h, t, budget):
    """Stabilize the interior of a padded array in place; returns
    (steps, status) with status 0 = stabilized, 1 = budget exceeded."""
    if h.ndim == 1:
        return _impl.stabilize_padded_1d(h, t, budget)
    if h.ndim == 2:
        return _impl.stabilize_padded_2d(h, t, budget)
    return _kernels_py.stabilize_padded_nd(h, t, budget)


def onesided_run(samples, want_topples=True):
    return _impl.onesided_run(samples, want_topples)
