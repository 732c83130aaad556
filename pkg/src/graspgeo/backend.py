"""Kernel backend selection: compiled extension if built, numpy otherwise.

Set GRASPGEO_KERNELS=numpy or =cython before import to force a backend
(cython raises if the extension is missing).  `kernels` is the selected
module; `KERNEL_BACKEND` names it.
"""

from __future__ import annotations

import os

import numpy as np

from ._plan import build_plan


def load_backend(name: str):
    """Load a kernel implementation by name ('cython' or 'numpy')."""
    if name == "cython":
        from . import _kernels
        return _kernels
    if name == "numpy":
        from . import _kernels_np
        return _kernels_np
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list:
    out = ["numpy"]
    try:
        load_backend("cython")
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


def _select():
    choice = os.environ.get("GRASPGEO_KERNELS", "auto")
    if choice == "auto":
        try:
            return load_backend("cython"), "cython"
        except ImportError:
            return load_backend("numpy"), "numpy"
    return load_backend(choice), choice


kernels, KERNEL_BACKEND = _select()


def gather(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear gather at (N, 3) index-space coords using the active backend."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    idx, w = build_plan(values.shape, coords)
    return kernels.gather_plan(values.reshape(-1), idx, w)
