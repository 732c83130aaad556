"""Numpy implementation of the hot kernels.

This is the fallback selected when the compiled extension is unavailable
(and the reference the extension is tested against).  Evaluation order of
every floating-point reduction mirrors the compiled kernels so that exact
projection mode produces bit-identical rasters on either backend:

- gather accumulates the 8 neighbor products left-associatively,
- scatter adds contributions in (sample, neighbor) order (np.bincount
  sums its input sequentially),
- ray compositing walks samples front to back.
"""

from __future__ import annotations

import numpy as np


def gather_plan(values_flat: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted 8-neighbor gather: out[i] = sum_k values[idx[i,k]] * w[i,k]."""
    v = values_flat[idx]
    out = v[:, 0] * w[:, 0]
    for k in range(1, 8):
        out = out + v[:, k] * w[:, k]
    return out


def scatter_plan(grad_flat: np.ndarray, idx: np.ndarray, w: np.ndarray,
                 upstream: np.ndarray) -> None:
    """Transpose of gather_plan: grad_flat[idx[i,k]] += upstream[i] * w[i,k]."""
    contrib = upstream[:, None] * w
    grad_flat += np.bincount(idx.ravel(), weights=contrib.ravel(),
                             minlength=grad_flat.size)


def composite_exact(u: np.ndarray, depth_table: np.ndarray, z_near: float,
                    z_far: float, threshold: float = 0.5):
    """Flatten per-pixel ray samples into (mask, depth), first-crossing rule.

    mask = max over samples; depth = z_far when max < threshold, else the
    precomputed slab depth of the first sample exceeding threshold, else
    z_near (max at exactly the threshold with no strict crossing).
    """
    mask = u.max(axis=1)
    hit = u > threshold
    has_hit = hit.any(axis=1)
    first = hit.argmax(axis=1)
    depth = np.where(mask < threshold, z_far,
                     np.where(has_hit, depth_table[first], z_near))
    return mask, depth


def composite_soft_forward(u: np.ndarray, depth_table: np.ndarray, z_far: float):
    """Differentiable first-hit compositing.

    Returns (mask, depth, trans) where trans[:, l] is the transmittance
    before sample l (trans[:, 0] = 1); mask = 1 - trans[:, -1] and
    depth = sum_l u_l * trans_l * d_l + trans[:, -1] * z_far.
    """
    p, dp = u.shape
    trans = np.empty((p, dp + 1), dtype=np.float64)
    trans[:, 0] = 1.0
    for l in range(dp):
        trans[:, l + 1] = trans[:, l] * (1.0 - u[:, l])
    mask = 1.0 - trans[:, dp]
    acc = (u[:, 0] * trans[:, 0]) * depth_table[0]
    for l in range(1, dp):
        acc = acc + (u[:, l] * trans[:, l]) * depth_table[l]
    depth = acc + trans[:, dp] * z_far
    return mask, depth, trans


def composite_soft_backward(u: np.ndarray, trans: np.ndarray, depth_table: np.ndarray,
                            z_far: float, d_mask: np.ndarray,
                            d_depth: np.ndarray) -> np.ndarray:
    """Reverse accumulation through composite_soft_forward; returns dL/du."""
    p, dp = u.shape
    du = np.empty((p, dp), dtype=np.float64)
    tbar = d_depth * z_far - d_mask
    for l in range(dp - 1, -1, -1):
        wbar = d_depth * depth_table[l]
        du[:, l] = wbar * trans[:, l] - tbar * trans[:, l]
        tbar = wbar * u[:, l] + tbar * (1.0 - u[:, l])
    return du
