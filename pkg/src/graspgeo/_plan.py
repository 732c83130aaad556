"""Precomputed trilinear sampling plans.

A plan freezes, for a batch of continuous index-space coordinates, the
eight neighbor cell indices and tent-kernel weights of each sample.  The
sampling geometry of a projection depends only on the grid frame and the
camera, so a plan is built once and reused across every evaluation with
new cell values (the shape-fitting loop re-gathers thousands of times).

Weight arithmetic is pinned to a canonical evaluation order, matching the
scalar reference ray marcher bit for bit:

    weight(dy, dx, dz) = (wx[dx] * wy[dy]) * wz[dz]

with neighbors enumerated in (dy, dx, dz) binary-counting order and the
gather accumulating the eight products left-associatively.  Out-of-range
neighbors get weight 0 and a clamped (harmless) index.
"""

from __future__ import annotations

import numpy as np

# neighbor enumeration order; index k = dy*4 + dx*2 + dz
NEIGHBOR_OFFSETS = tuple((dy, dx, dz) for dy in (0, 1) for dx in (0, 1) for dz in (0, 1))


def build_plan(shape: tuple, coords: np.ndarray):
    """Return (idx, w): (N, 8) flat cell indices and tent weights.

    `shape` is the (H, W, D) value-array shape; `coords` is (N, 3) in
    (x, y, z) index-space order.  Coordinates may lie anywhere; samples
    fully outside the grid support end up with all-zero weights.
    """
    h, w_dim, d = shape
    coords = np.asarray(coords, dtype=np.float64)
    gx, gy, gz = coords[:, 0], coords[:, 1], coords[:, 2]

    with np.errstate(invalid="ignore"):
        fx0 = np.floor(gx)
        fy0 = np.floor(gy)
        fz0 = np.floor(gz)
        ix0 = np.clip(fx0, -2, w_dim).astype(np.int64)
        iy0 = np.clip(fy0, -2, h).astype(np.int64)
        iz0 = np.clip(fz0, -2, d).astype(np.int64)
    tx = gx - fx0
    ty = gy - fy0
    tz = gz - fz0

    wx = (1.0 - tx, tx)
    wy = (1.0 - ty, ty)
    wz = (1.0 - tz, tz)

    n = coords.shape[0]
    idx = np.empty((n, 8), dtype=np.int64)
    weights = np.empty((n, 8), dtype=np.float64)
    for k, (dy, dx, dz) in enumerate(NEIGHBOR_OFFSETS):
        iy = iy0 + dy
        ix = ix0 + dx
        iz = iz0 + dz
        valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w_dim) & (iz >= 0) & (iz < d)
        wk = (wx[dx] * wy[dy]) * wz[dz]
        weights[:, k] = np.where(valid, wk, 0.0)
        idx[:, k] = (np.clip(iy, 0, h - 1) * w_dim + np.clip(ix, 0, w_dim - 1)) * d \
            + np.clip(iz, 0, d - 1)
    return idx, weights
