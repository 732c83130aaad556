"""Dataset assembly: scenes to renders, grasp records, and feature matrices.

These helpers stitch the lower modules into the experiment protocol used
by the CLI and the acceptance suite: balanced perturbation datasets per
scene, per-record observation cameras drawn from the training elevations,
and feature matrices for the baseline and geometry-aware predictors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import STREAM_SPLIT, derived_rng
from .grasp import (DEFAULT_GRIPPER, GripperSpec, Scene, SceneSpec,
                    TRAIN_ELEVATIONS, assign_observation_cameras,
                    balanced_grasp_set, find_seed_grasp, generate_scene)
from .predictor import featurize
from .projection import ProjectionSpec, project_exact
from .shapefit import FitConfig, fit_shape, uniform_grid
from .voxel import OccupancyGrid


def render_views(grid: OccupancyGrid, cameras: dict, d_samples: int = 64) -> dict:
    """Exact-mode (DepthMap, MaskMap) per camera name."""
    out = {}
    for name, cam in cameras.items():
        out[name] = project_exact(grid, ProjectionSpec(cam, d_samples=d_samples))
    return out


@dataclass
class SceneDataset:
    """One scene's balanced grasp records plus cached renders."""

    scene: Scene
    records: list
    renders: dict            # camera name -> (DepthMap, MaskMap)

    def observation(self, record, camera_name: str = ""):
        name = camera_name or record.camera_name
        dmap, mmap = self.renders[name]
        return (dmap, mmap, self.scene.cameras[name])


def build_scene_dataset(seed: int, per_class: int = 50,
                        gripper: GripperSpec = DEFAULT_GRIPPER,
                        category: str = "", d_samples: int = 0,
                        spec: SceneSpec = None) -> SceneDataset:
    """Scene + seed grasp + balanced perturbation set + all renders."""
    scene = generate_scene(spec or SceneSpec(seed=seed, category=category))
    seed_pose = find_seed_grasp(scene.grid, gripper)
    if seed_pose is None:
        raise ValueError(f"scene seed {seed}: no graspable pose found")
    records = balanced_grasp_set(scene.grid, seed_pose, gripper, per_class,
                                 seed=seed, scene=scene.name)
    records = assign_observation_cameras(records, scene, seed=seed,
                                         elevations=TRAIN_ELEVATIONS)
    renders = render_views(scene.grid, scene.cameras,
                           d_samples or scene.spec.d_samples)
    return SceneDataset(scene, records, renders)


def fitted_grid(dataset: SceneDataset, elevations=TRAIN_ELEVATIONS,
                iterations: int = 600, d_samples: int = 0) -> OccupancyGrid:
    """Shape recovered from the scene's own renders (the realistic grid source).

    Supervision masks are binarized: the fit consumes silhouettes, not the
    fractional tent values the exact projector reports on grazing rays.
    """
    from .projection import binarize_mask

    scene = dataset.scene
    views = []
    for name in scene.camera_names(elevations):
        dmap, mmap = dataset.renders[name]
        views.append((scene.cameras[name], dmap, binarize_mask(mmap)))
    cfg = FitConfig(views, iterations=iterations,
                    d_samples=d_samples or scene.spec.d_samples)
    init = uniform_grid(scene.grid.values.shape, scene.grid.origin,
                        scene.grid.cell_size, cfg.init_value)
    return fit_shape(cfg, init).grid


def feature_matrix(dataset: SceneDataset, kind: str,
                   grid: OccupancyGrid = None,
                   gripper: GripperSpec = DEFAULT_GRIPPER,
                   camera_override: dict = None):
    """(X, y) over the dataset's records.

    `grid` supplies the geometry-aware source (ground truth or fitted);
    `camera_override` remaps record camera names (novel-viewpoint protocol:
    same grasps, different observation elevation).
    """
    rows, labels = [], []
    for rec in dataset.records:
        name = rec.camera_name
        if camera_override:
            name = camera_override[name]
        obs = dataset.observation(rec, name)
        feat = featurize(obs, rec.pose, grid if kind == "geometry" else None,
                         kind=kind, gripper=gripper)
        rows.append(feat.values)
        labels.append(1.0 if rec.outcome else 0.0)
    return np.array(rows), np.array(labels)


def holdout_split(n: int, seed: int, held_fraction: float = 0.2):
    """Deterministic shuffle split; returns (train_idx, held_idx)."""
    rng = derived_rng(seed, STREAM_SPLIT)
    order = rng.permutation(n)
    n_held = max(1, int(round(held_fraction * n)))
    return np.sort(order[n_held:]), np.sort(order[:n_held])


def elevation_swap(scene: Scene, seen=TRAIN_ELEVATIONS) -> dict:
    """Map each seen-elevation camera to its novel-elevation counterpart
    (same azimuth, 15 <-> 30 and 45 <-> 60)."""
    swap = {15: 30, 45: 60, 30: 15, 60: 45}
    mapping = {}
    for name in scene.camera_names(seen):
        _, az, el = name.split("_")
        mapping[name] = f"cam_{az}_{swap[int(el)]}"
    return mapping
