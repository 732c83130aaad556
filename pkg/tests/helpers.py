"""Shared test helpers.

`reference_march` is the independent scalar ray marcher used as the oracle
for exact projection: per pixel it walks the NDC depth samples, back-projects
each through the inverse camera matrix, applies the tent kernel by hand, and
flattens with the literal first-crossing cases.  It shares no code with the
package kernels; arithmetic follows the same canonical evaluation order
(left-associated sums, (wx*wy)*wz weights) so results must match bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from graspgeo.geometry import CameraModel, look_at, perspective
from graspgeo.voxel import OccupancyGrid


def reference_march(grid: OccupancyGrid, cam: CameraModel, width: int, height: int,
                    d_samples: int, threshold: float = 0.5):
    """Literal per-pixel ray marcher; returns (depth, mask) float64 images."""
    p_inv = np.linalg.inv(cam.intrinsics @ cam.view).tolist()
    vals = grid.values
    hg, wg, dg = vals.shape
    ox, oy, oz = (float(v) for v in grid.origin)
    cs = float(grid.cell_size)
    z_near, z_far = cam.z_near, cam.z_far
    alpha = (z_near - z_far) / (2.0 * z_near * z_far)
    beta = (z_near + z_far) / (2.0 * z_near * z_far)

    def tent_sample(gx, gy, gz):
        fx0 = math.floor(gx)
        fy0 = math.floor(gy)
        fz0 = math.floor(gz)
        tx = gx - fx0
        ty = gy - fy0
        tz = gz - fz0
        acc = 0.0
        started = False
        for dy in (0, 1):
            iy = int(fy0) + dy
            if iy < 0 or iy >= hg:
                continue
            wy = 1.0 - ty if dy == 0 else ty
            for dx in (0, 1):
                ix = int(fx0) + dx
                if ix < 0 or ix >= wg:
                    continue
                wx = 1.0 - tx if dx == 0 else tx
                for dz in (0, 1):
                    iz = int(fz0) + dz
                    if iz < 0 or iz >= dg:
                        continue
                    wz = 1.0 - tz if dz == 0 else tz
                    term = float(vals[iy, ix, iz]) * ((wx * wy) * wz)
                    acc = term if not started else acc + term
                    started = True
        return acc

    depth_img = np.empty((height, width), dtype=np.float64)
    mask_img = np.empty((height, width), dtype=np.float64)
    for n in range(height):
        yn = (2.0 * n + 1.0) / height - 1.0
        for m in range(width):
            xn = (2.0 * m + 1.0) / width - 1.0
            max_u = -1.0
            first = -1
            for l in range(d_samples):
                zn = (2.0 * l + 1.0) / d_samples - 1.0
                hx = p_inv[0][0] * xn + p_inv[0][1] * yn + p_inv[0][2] * zn + p_inv[0][3]
                hy = p_inv[1][0] * xn + p_inv[1][1] * yn + p_inv[1][2] * zn + p_inv[1][3]
                hz = p_inv[2][0] * xn + p_inv[2][1] * yn + p_inv[2][2] * zn + p_inv[2][3]
                hw = p_inv[3][0] * xn + p_inv[3][1] * yn + p_inv[3][2] * zn + p_inv[3][3]
                px = hx / hw
                py = hy / hw
                pz = hz / hw
                gx = (px - ox) / cs - 0.5
                gy = (py - oy) / cs - 0.5
                gz = (pz - oz) / cs - 0.5
                u = tent_sample(gx, gy, gz)
                if u > max_u:
                    max_u = u
                if first < 0 and u > threshold:
                    first = l
            mask_img[n, m] = max_u
            if max_u < threshold:
                depth_img[n, m] = z_far
            elif first >= 0:
                zl = 2.0 * first / d_samples - 1.0
                depth_img[n, m] = abs(-1.0 / (alpha * zl + beta))
            else:
                depth_img[n, m] = z_near
    return depth_img, mask_img


def random_grid(rng: np.random.Generator, dims=(8, 8, 8), origin=(-0.2, -0.2, -0.2),
                cell_size=0.05, low=0.0, high=1.0) -> OccupancyGrid:
    vals = rng.uniform(low, high, dims)
    return OccupancyGrid(vals, np.array(origin, dtype=float), cell_size)


def random_camera(rng: np.random.Generator, target=(0.0, 0.0, 0.0), width=32, height=32,
                  z_near=0.1, z_far=2.0, dist_range=(0.5, 0.9)) -> CameraModel:
    azim = rng.uniform(0.0, 2.0 * np.pi)
    elev = rng.uniform(np.radians(10.0), np.radians(70.0))
    dist = rng.uniform(*dist_range)
    eye = np.asarray(target) + dist * np.array([
        np.cos(elev) * np.cos(azim), np.cos(elev) * np.sin(azim), np.sin(elev)])
    k = perspective(60.0, width / height, z_near, z_far)
    return CameraModel(k, look_at(eye, target, (0.0, 0.0, 1.0)),
                       z_near, z_far, width, height)


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise relative error with an absolute floor for near-zero pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / scale


def slab_span(d_samples: int, z_near: float, z_far: float) -> float:
    """Largest metric depth difference between consecutive ray samples."""
    alpha = (z_near - z_far) / (2.0 * z_near * z_far)
    beta = (z_near + z_far) / (2.0 * z_near * z_far)
    z = 2.0 * np.arange(d_samples + 1) / d_samples - 1.0
    table = np.abs(-1.0 / (alpha * z + beta))
    return float(np.max(np.abs(np.diff(table))))
