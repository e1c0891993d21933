"""Selects the convolution kernel at import time.

The compiled extension is preferred. Setting ``X3D_FORGE_BACKEND=python``
forces the numpy fallback; ``native`` makes a missing extension an error.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _fallback

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _native
except ImportError:  # extension not built
    _native = None

_requested = os.environ.get("X3D_FORGE_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "native", "python"):
    raise ImportError(f"X3D_FORGE_BACKEND must be auto, native or python, not {_requested!r}")
if _requested == "native" and _native is None:
    raise ImportError("X3D_FORGE_BACKEND=native but the compiled kernel is not built")

BACKENDS = {"python": _fallback.conv3d}
if _native is not None:
    BACKENDS["native"] = _native.conv3d

NAME = "python" if (_requested == "python" or _native is None) else "native"
if NAME == "python" and _requested == "auto":
    logger.debug("compiled conv kernel unavailable, using numpy fallback")


def default_threads() -> int:
    env = os.environ.get("X3D_FORGE_THREADS")
    if env:
        return max(1, int(env))
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def conv3d_raw(x, w, stride, padding, groups, threads=None, backend=None):
    fn = BACKENDS[backend or NAME]
    x = np.ascontiguousarray(x, dtype=np.float32)
    w = np.ascontiguousarray(w, dtype=np.float32)
    threads = default_threads() if threads is None else int(threads)
    return fn(x, w, tuple(int(s) for s in stride), tuple(int(p) for p in padding), int(groups), threads)
