"""Weakly supervised shape recovery from multi-view depth + mask images.

Optimizes the occupancy grid directly: per view, an L1 penalty on soft
depth over ground-truth foreground pixels plus an L2 penalty on the soft
mask over all pixels, averaged per pixel and per view so coefficients
transfer across resolutions and view counts.  Cells are driven through a
logit parameterization by momentum gradient descent, which keeps every
iterate inside [0, 1] by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .geometry import CameraModel
from .projection import (DepthMap, MaskMap, ProjectionPlan, ProjectionSpec,
                         build_projection_plan, project_soft)
from .voxel import OccupancyGrid

FOREGROUND_THRESHOLD = 0.5


@dataclass
class FitConfig:
    """Supervision views plus optimization hyperparameters."""

    views: list                      # (CameraModel, DepthMap, MaskMap) triples
    lambda_depth: float = 0.5
    lambda_mask: float = 10.0
    iterations: int = 2000
    step_size: float = 30.0
    momentum: float = 0.9
    logit_param: bool = True
    d_samples: int = 128
    init_value: float = 0.15

    def __post_init__(self):
        if not self.views:
            raise ValueError("at least one supervision view is required")
        if self.lambda_depth < 0.0 or self.lambda_mask < 0.0:
            raise ValueError("loss coefficients must be nonnegative")
        if not 0.0 < self.init_value < 1.0:
            raise ValueError("init_value must lie strictly inside (0, 1)")
        for cam, dmap, mmap in self.views:
            if (cam.z_near, cam.z_far) != (dmap.z_near, dmap.z_far):
                raise ValueError(
                    f"view clip planes {(dmap.z_near, dmap.z_far)} disagree with "
                    f"camera {(cam.z_near, cam.z_far)}")
            if dmap.values.shape != mmap.values.shape:
                raise ValueError("depth and mask resolutions disagree")


@dataclass
class LossParts:
    total: float
    depth: float
    mask: float


def _view_plans(grid: OccupancyGrid, cfg: FitConfig) -> list:
    plans = []
    for cam, dmap, _ in cfg.views:
        spec = ProjectionSpec(cam, d_samples=cfg.d_samples, mode="soft",
                              width=dmap.width, height=dmap.height)
        plans.append(build_projection_plan(grid, spec))
    return plans


def shape_loss(grid: OccupancyGrid, cfg: FitConfig, plans: list = None):
    """Multi-view reconstruction loss and its gradient w.r.t. cell values.

    Returns (parts, grad) with parts.total = lambda_depth * depth_term +
    lambda_mask * mask_term, both terms averaged over views.  A view with
    no foreground pixels contributes only its mask term.
    """
    if plans is None:
        plans = _view_plans(grid, cfg)
    n_views = len(cfg.views)
    grad = np.zeros_like(grid.values)
    depth_term = 0.0
    mask_term = 0.0
    for (cam, dmap, mmap), plan in zip(cfg.views, plans):
        soft = project_soft(grid, plan=plan)
        fg = mmap.values >= FOREGROUND_THRESHOLD
        n_fg = int(np.count_nonzero(fg))
        n_px = mmap.values.size

        resid_depth = soft.depth.values - dmap.values
        resid_mask = soft.mask.values - mmap.values

        d_depth = np.zeros_like(resid_depth)
        if n_fg > 0:
            depth_term += float(np.sum(np.abs(resid_depth[fg]))) / n_fg
            d_depth[fg] = np.sign(resid_depth[fg]) * (cfg.lambda_depth / (n_views * n_fg))
        mask_term += float(np.sum(resid_mask * resid_mask)) / n_px
        d_mask = resid_mask * (2.0 * cfg.lambda_mask / (n_views * n_px))

        grad += soft.backward(d_depth, d_mask)

    depth_term /= n_views
    mask_term /= n_views
    total = cfg.lambda_depth * depth_term + cfg.lambda_mask * mask_term
    return LossParts(total, depth_term, mask_term), grad


@dataclass
class FitResult:
    grid: OccupancyGrid
    history: list                       # (iteration, total, depth, mask) rows
    best_iteration: int

    @property
    def final_loss(self) -> float:
        return self.history[-1][1]


def uniform_grid(dims: tuple, origin, cell_size: float, value: float) -> OccupancyGrid:
    return OccupancyGrid(np.full(dims, value, dtype=np.float64), origin, cell_size)


def fit_shape(cfg: FitConfig, init: OccupancyGrid) -> FitResult:
    """Momentum descent on (logit-parameterized) cell values.

    `init` fixes the fitting frame; use `uniform_grid(...)` for the
    standard flat start at cfg.init_value.  The returned grid is the
    best-loss iterate, so its loss never exceeds the initial loss.
    Raises DivergenceError if the loss turns non-finite.
    """
    eps = 1e-6
    v = np.clip(init.values, eps, 1.0 - eps)
    theta = np.log(v / (1.0 - v)) if cfg.logit_param else v.copy()
    velocity = np.zeros_like(theta)
    plans = _view_plans(init, cfg)

    def current_values(t):
        if cfg.logit_param:
            return 1.0 / (1.0 + np.exp(-t))
        return np.clip(t, 0.0, 1.0)

    history = []
    best = (np.inf, theta.copy(), 0)
    for it in range(cfg.iterations + 1):
        values = current_values(theta)
        grid = init.copy_with(values)
        parts, grad_v = shape_loss(grid, cfg, plans)
        if not np.isfinite(parts.total):
            raise DivergenceError(it)
        history.append((it, parts.total, parts.depth, parts.mask))
        if parts.total < best[0]:
            best = (parts.total, theta.copy(), it)
        if it == cfg.iterations:
            break
        if cfg.logit_param:
            grad_t = grad_v * values * (1.0 - values)
        else:
            grad_t = grad_v
        velocity = cfg.momentum * velocity - cfg.step_size * grad_t
        theta = theta + velocity

    return FitResult(init.copy_with(current_values(best[1])), history, best[2])
