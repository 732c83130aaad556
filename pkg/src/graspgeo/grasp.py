"""Parallel-jaw gripper model, analytic grasp oracle, synthetic scenes,
and perturbation-based grasp data generation.

Gripper frame convention: the palm center is the origin, the approach
axis is local -z (so the gripper pose doubles as the local-view camera
pose), fingers close along local x, finger length runs along the approach.
At the pre-grasp pose the fingers sit fully open at +-max_opening/2.

The oracle classifies a pre-grasp pose against the occupancy grid:

  collision -- an occupied cell center lies inside a finger or palm solid,
  success   -- no collision, the closing volume (the box swept between the
               fingers) holds at least `min_cells` occupied cells, and
               material sits on both sides of the closing plane x = 0,
  failure   -- anything else.

Cell-center containment stands in for exact cell/solid intersection; it is
exact under the cell-preserving rigid motions used by the invariance tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .config import (STREAM_AUGMENT, STREAM_BALANCE, STREAM_OBSCAM,
                     STREAM_SCENE, derived_rng)
from .errors import FormatError
from .geometry import (CameraModel, euler_xyz_deg_to_quat, quat_from_matrix,
                       quat_to_euler_xyz_deg, rotation_from_quat, translation)
from .voxel import (OCCUPIED_THRESHOLD, OccupancyGrid, PrimitiveShape,
                    rasterize_primitive)


@dataclass(frozen=True)
class GraspPose:
    """6-DOF pre-grasp pose: palm-center position + unit quaternion (x,y,z,w)."""

    position: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "quat", np.asarray(self.quat, dtype=np.float64))
        norm = np.linalg.norm(self.quat)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} is not 1")

    @classmethod
    def from_euler_deg(cls, position, euler_xyz_deg) -> "GraspPose":
        return cls(position, euler_xyz_deg_to_quat(euler_xyz_deg))

    @property
    def euler_xyz_deg(self) -> np.ndarray:
        return quat_to_euler_xyz_deg(self.quat)

    @property
    def matrix(self) -> np.ndarray:
        """Gripper-to-world rigid transform."""
        return translation(self.position) @ rotation_from_quat(self.quat)

    def perturbed(self, rng: np.random.Generator, sigma_pos: float,
                  sigma_rot_deg: float) -> "GraspPose":
        """Gaussian jitter: per-axis position noise, then per-axis Euler noise."""
        pos = self.position + rng.normal(0.0, sigma_pos, 3)
        euler = self.euler_xyz_deg + rng.normal(0.0, sigma_rot_deg, 3)
        return GraspPose(pos, euler_xyz_deg_to_quat(euler))

    def transformed(self, rigid: np.ndarray) -> "GraspPose":
        m = np.asarray(rigid, dtype=np.float64) @ self.matrix
        return GraspPose(m[:3, 3], quat_from_matrix(m))


@dataclass(frozen=True)
class GripperSpec:
    """Analytic parallel-jaw gripper dimensions (meters)."""

    finger_length: float = 0.06
    finger_width: float = 0.02
    finger_thickness: float = 0.01
    max_opening: float = 0.08
    palm_depth: float = 0.04

    def __post_init__(self):
        vals = (self.finger_length, self.finger_width, self.finger_thickness,
                self.max_opening, self.palm_depth)
        if any(v <= 0.0 for v in vals):
            raise ValueError("gripper dimensions must all be > 0")
        if not self.max_opening > self.finger_thickness:
            raise ValueError("max_opening must exceed finger_thickness")


DEFAULT_GRIPPER = GripperSpec()


class GraspOutcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    COLLISION = "collision"

    @property
    def binary_success(self) -> bool:
        """Binary label: collision folds into failure."""
        return self is GraspOutcome.SUCCESS


def grasp_oracle(grid: OccupancyGrid, pose: GraspPose, gripper: GripperSpec = DEFAULT_GRIPPER,
                 min_cells: int = 3) -> GraspOutcome:
    pts = grid.occupied_centers()
    if pts.shape[0] == 0:
        return GraspOutcome.FAILURE
    rot = rotation_from_quat(pose.quat)[:3, :3]
    local = (pts - pose.position) @ rot        # R^T (p - t)
    x, y, z = local[:, 0], local[:, 1], local[:, 2]

    half_open = gripper.max_opening / 2.0
    in_y = np.abs(y) <= gripper.finger_width / 2.0
    in_finger_z = (z >= -gripper.finger_length) & (z <= 0.0)

    fingers = in_y & in_finger_z & (np.abs(x) >= half_open) & \
        (np.abs(x) <= half_open + gripper.finger_thickness)
    palm = in_y & (z >= 0.0) & (z <= gripper.palm_depth) & \
        (np.abs(x) <= half_open + gripper.finger_thickness)
    if np.any(fingers) or np.any(palm):
        return GraspOutcome.COLLISION

    closing = in_y & in_finger_z & (np.abs(x) < half_open)
    if np.count_nonzero(closing) >= min_cells and \
            np.any(closing & (x <= 0.0)) and np.any(closing & (x >= 0.0)):
        return GraspOutcome.SUCCESS
    return GraspOutcome.FAILURE


def orientation_from_axes(approach, closing) -> np.ndarray:
    """Quaternion with local -z along `approach` and local +x along `closing`."""
    zax = -np.asarray(approach, dtype=np.float64)
    zax = zax / np.linalg.norm(zax)
    xax = np.asarray(closing, dtype=np.float64)
    xax = xax - np.dot(xax, zax) * zax
    n = np.linalg.norm(xax)
    if n < 1e-9:
        raise ValueError("closing axis parallel to approach axis")
    xax = xax / n
    yax = np.cross(zax, xax)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2] = xax, yax, zax
    return quat_from_matrix(m)


# ---------------------------------------------------------------------------
# Synthetic scenes

SCENE_CATEGORIES = ("box", "cylinder", "sphere", "tube", "plate")
TRAIN_ELEVATIONS = (15, 45)
EVAL_ELEVATIONS = (30, 60)


@dataclass(frozen=True)
class SceneSpec:
    """Seeded description of one single-object scene and its camera rig."""

    seed: int
    category: str = ""                     # empty = seeded choice
    grid_dims: int = 32
    grid_origin: tuple = (-0.2, -0.2, -0.05)
    grid_extent: float = 0.4
    image_size: int = 32
    fov_y_deg: float = 60.0
    # clip planes hug the workspace: perspective depth samples are ~1 cell
    # apart at the object, which 0.1/1.0 planes would not give (tunneling)
    z_near: float = 0.15
    z_far: float = 0.7
    d_samples: int = 128
    distance_range: tuple = (0.35, 0.45)
    azimuths_deg: tuple = (0, 45, 90, 135, 180, 225, 270, 315)
    elevations_deg: tuple = (15, 30, 45, 60)
    target_jitter_std: float = 0.03

    @property
    def cell_size(self) -> float:
        return self.grid_extent / self.grid_dims


@dataclass
class Scene:
    spec: SceneSpec
    grid: OccupancyGrid
    shape: PrimitiveShape
    cameras: dict                           # name -> CameraModel, insertion-ordered
    category: str
    target: np.ndarray                      # jittered camera aim point

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def name(self) -> str:
        return f"scene_{self.spec.seed}"

    def camera_names(self, elevations=None) -> list:
        if elevations is None:
            return list(self.cameras)
        keep = set(int(e) for e in elevations)
        return [n for n in self.cameras if int(n.rsplit("_", 1)[1]) in keep]


def camera_name(azimuth_deg: int, elevation_deg: int) -> str:
    return f"cam_{int(azimuth_deg)}_{int(elevation_deg)}"


def _draw_shape(rng: np.random.Generator, category: str) -> PrimitiveShape:
    """Seeded object geometry; every category stays graspable by the default gripper."""
    center = np.array([rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), 0.15])
    yaw = rng.uniform(0.0, 360.0)
    quat = euler_xyz_deg_to_quat([0.0, 0.0, yaw])
    if category == "box":
        size = (rng.uniform(0.04, 0.065), rng.uniform(0.06, 0.14), rng.uniform(0.05, 0.12))
    elif category == "cylinder":
        size = (rng.uniform(0.02, 0.032), rng.uniform(0.06, 0.14))
    elif category == "sphere":
        size = (rng.uniform(0.022, 0.034),)
    elif category == "tube":
        r_out = rng.uniform(0.055, 0.08)
        wall = rng.uniform(0.018, 0.024)
        size = (r_out, r_out - wall, rng.uniform(0.05, 0.09))
    elif category == "plate":
        size = (rng.uniform(0.10, 0.16), rng.uniform(0.10, 0.16), rng.uniform(0.018, 0.028))
    else:
        raise ValueError(f"unknown category {category!r}")
    return PrimitiveShape(category, size, center, quat)


def generate_scene(spec: SceneSpec) -> Scene:
    """One randomized primitive plus the azimuth/elevation camera protocol.

    Draw order (frozen): category, object size/pose, camera target jitter,
    then one viewing distance per camera in (azimuth-major, elevation-minor)
    order.  Identical seeds reproduce the scene bit for bit.
    """
    rng = derived_rng(spec.seed, STREAM_SCENE)
    category = spec.category or SCENE_CATEGORIES[int(rng.integers(len(SCENE_CATEGORIES)))]
    shape = _draw_shape(rng, category)
    dims = (spec.grid_dims,) * 3
    grid = rasterize_primitive(shape, dims, np.array(spec.grid_origin), spec.cell_size)

    target = shape.position + rng.normal(0.0, spec.target_jitter_std, 3)
    cameras = {}
    for az in spec.azimuths_deg:
        for el in spec.elevations_deg:
            dist = rng.uniform(*spec.distance_range)
            a, e = np.radians(az), np.radians(el)
            eye = target + dist * np.array([np.cos(e) * np.cos(a),
                                            np.cos(e) * np.sin(a),
                                            np.sin(e)])
            cameras[camera_name(az, el)] = CameraModel.from_look_at(
                eye, target, (0.0, 0.0, 1.0), spec.fov_y_deg, spec.z_near,
                spec.z_far, spec.image_size, spec.image_size)
    return Scene(spec, grid, shape, cameras, category, target)


# ---------------------------------------------------------------------------
# Scripted seed-grasp search (stands in for a human demonstration)

def _principal_axes(pts: np.ndarray) -> np.ndarray:
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / max(len(pts), 1)
    _, vecs = np.linalg.eigh(cov)
    axes = []
    for k in range(3):
        v = vecs[:, k]
        lead = np.argmax(np.abs(v))
        axes.append(v if v[lead] >= 0 else -v)   # canonical sign
    return np.array(axes[::-1])                  # largest variance first


def find_seed_grasp(grid: OccupancyGrid, gripper: GripperSpec = DEFAULT_GRIPPER,
                    min_cells: int = 3):
    """Deterministic antipodal sweep; returns the first oracle-verified
    success pose, or None when the object is not graspable.

    Candidates pair approach directions (top-down first, then horizontal)
    with closing axes from the occupied cells' principal directions, local
    radial directions, and fixed azimuth fallbacks, applied at top-band,
    centroid, and extreme target points.
    """
    pts = grid.occupied_centers()
    if pts.shape[0] == 0:
        return None
    centroid = pts.mean(axis=0)
    axes = _principal_axes(pts)

    z_top = pts[:, 2].max()
    band = pts[pts[:, 2] >= z_top - 2.5 * grid.cell_size]
    order = np.lexsort((band[:, 1], band[:, 0]))
    rim = band[order][:: max(1, len(band) // 8)][:8]

    horiz = []
    for v in axes:
        h = np.array([v[0], v[1], 0.0])
        n = np.linalg.norm(h)
        if n > 1e-6:
            horiz.append(h / n)
    fixed = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
             np.array([np.sqrt(0.5), np.sqrt(0.5), 0.0]),
             np.array([-np.sqrt(0.5), np.sqrt(0.5), 0.0])]

    down = np.array([0.0, 0.0, -1.0])
    reach = 0.6 * gripper.finger_length
    candidates = []

    # top-down grasps at rim points and the centroid
    for target in [*rim, centroid, np.array([centroid[0], centroid[1], z_top])]:
        radial = np.array([target[0] - centroid[0], target[1] - centroid[1], 0.0])
        closings = []
        if np.linalg.norm(radial) > 1e-6:
            closings.append(radial / np.linalg.norm(radial))
        closings += horiz + fixed
        for c in closings:
            candidates.append((down, c, target))

    # horizontal approaches: side pinches and vertical-closing edge grasps
    for az in range(0, 360, 45):
        a = np.radians(az)
        approach = np.array([np.cos(a), np.sin(a), 0.0])
        proj = pts @ approach
        near_edge = pts[np.argmin(proj)]
        side = np.array([-approach[1], approach[0], 0.0])
        for target in (centroid, near_edge):
            candidates.append((approach, side, target))                  # horizontal pinch
            candidates.append((approach, np.array([0.0, 0.0, 1.0]), target))  # edge grasp

    for approach, closing, target in candidates:
        try:
            quat = orientation_from_axes(approach, closing)
        except ValueError:
            continue
        pose = GraspPose(np.asarray(target) - approach * reach, quat)
        if grasp_oracle(grid, pose, gripper, min_cells) is GraspOutcome.SUCCESS:
            return pose
    return None


# ---------------------------------------------------------------------------
# Grasp records and the perturbation protocol

@dataclass(frozen=True)
class GraspRecord:
    """One labeled grasp.  `outcome` is the binary label; `detail` keeps the
    oracle's three-way result for diagnostics (not serialized)."""

    pose: GraspPose
    outcome: bool
    scene: str
    source: str                  # "seed" or "perturbed"
    draw: int
    detail: GraspOutcome = field(default=GraspOutcome.FAILURE, compare=False)
    camera_name: str = field(default="", compare=False)


def seed_record(grid: OccupancyGrid, pose: GraspPose, gripper: GripperSpec = DEFAULT_GRIPPER,
                scene: str = "", min_cells: int = 3) -> GraspRecord:
    result = grasp_oracle(grid, pose, gripper, min_cells)
    return GraspRecord(pose, result.binary_success, scene, "seed", -1, result)


def augment_grasps(grid: OccupancyGrid, seed_pose: GraspPose,
                   gripper: GripperSpec = DEFAULT_GRIPPER, n: int = 100,
                   seed: int = 0, scene: str = "", min_cells: int = 3,
                   sigma_pos: float = 0.05, sigma_rot_deg: float = 20.0,
                   start_draw: int = 0) -> list:
    """Draw n perturbed poses around `seed_pose` and label each by the oracle.

    Each draw uses an independently derived sub-generator (seed, draw index),
    so batches are reproducible and order-independent.
    """
    records = []
    for i in range(start_draw, start_draw + n):
        rng = derived_rng(seed, STREAM_AUGMENT, i)
        pose = seed_pose.perturbed(rng, sigma_pos, sigma_rot_deg)
        result = grasp_oracle(grid, pose, gripper, min_cells)
        records.append(GraspRecord(pose, result.binary_success, scene, "perturbed", i, result))
    return records


def balance_records(records: list, ratio: float = 0.5, seed: int = 0) -> list:
    """Subsample the majority class to the target success ratio (+-1 record).

    Original record order is preserved.  Raises ValueError on single-class
    input.
    """
    pos = [r for r in records if r.outcome]
    neg = [r for r in records if not r.outcome]
    if not pos or not neg:
        raise ValueError("balance_records requires both classes present")
    if ratio != 0.5:
        raise ValueError("only the 50/50 target ratio is supported")
    keep = min(len(pos), len(neg))
    rng = derived_rng(seed, STREAM_BALANCE)

    def subsample(group):
        if len(group) <= keep:
            return group
        chosen = rng.choice(len(group), size=keep, replace=False)
        chosen.sort()
        return [group[i] for i in chosen]

    kept = subsample(pos) + subsample(neg)
    kept.sort(key=lambda r: (r.draw, r.source))
    return kept


def balanced_grasp_set(grid: OccupancyGrid, seed_pose: GraspPose,
                       gripper: GripperSpec = DEFAULT_GRIPPER, per_class: int = 50,
                       seed: int = 0, scene: str = "", min_cells: int = 3,
                       max_draws: int = 20000) -> list:
    """Keep drawing perturbations until each class holds `per_class` records.

    Returns exactly 2 * per_class records in draw order.  Raises ValueError
    if `max_draws` perturbations cannot fill both classes.
    """
    pos, neg = [], []
    drawn = 0
    batch = max(4 * per_class, 64)
    while (len(pos) < per_class or len(neg) < per_class) and drawn < max_draws:
        for rec in augment_grasps(grid, seed_pose, gripper, batch, seed, scene,
                                  min_cells, start_draw=drawn):
            (pos if rec.outcome else neg).append(rec)
        drawn += batch
    if len(pos) < per_class or len(neg) < per_class:
        raise ValueError(
            f"could not balance: {len(pos)} successes / {len(neg)} failures "
            f"after {drawn} draws")
    kept = pos[:per_class] + neg[:per_class]
    kept.sort(key=lambda r: r.draw)
    return kept


def assign_observation_cameras(records: list, scene: Scene, seed: int = 0,
                               elevations=TRAIN_ELEVATIONS) -> list:
    """Attach a seeded observation camera (by name) to every record."""
    names = scene.camera_names(elevations)
    rng = derived_rng(seed, STREAM_OBSCAM)
    picks = rng.integers(len(names), size=len(records))
    return [replace(r, camera_name=names[int(k)]) for r, k in zip(records, picks)]


# ---------------------------------------------------------------------------
# JSON Lines record file

_JSONL_KEYS = ("scene", "px", "py", "pz", "qx", "qy", "qz", "qw",
               "outcome", "source", "draw")


def write_grasp_records(records: list, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        for r in records:
            row = {
                "scene": r.scene,
                "px": float(r.pose.position[0]),
                "py": float(r.pose.position[1]),
                "pz": float(r.pose.position[2]),
                "qx": float(r.pose.quat[0]),
                "qy": float(r.pose.quat[1]),
                "qz": float(r.pose.quat[2]),
                "qw": float(r.pose.quat[3]),
                "outcome": 1 if r.outcome else 0,
                "source": r.source,
                "draw": r.draw,
            }
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_grasp_records(path) -> list:
    records = []
    offset = 0
    with open(path, "rb") as f:
        for raw in f:
            line = raw.decode("ascii", errors="replace").strip()
            if line:
                try:
                    row = json.loads(line)
                    pose = GraspPose([row["px"], row["py"], row["pz"]],
                                     [row["qx"], row["qy"], row["qz"], row["qw"]])
                    detail = GraspOutcome.SUCCESS if row["outcome"] else GraspOutcome.FAILURE
                    records.append(GraspRecord(pose, bool(row["outcome"]), row["scene"],
                                               row["source"], int(row["draw"]), detail))
                except (KeyError, ValueError) as exc:
                    raise FormatError(f"bad grasp record: {exc}", offset) from exc
            offset += len(raw)
    return records


# ---------------------------------------------------------------------------
# Scene directory layout:
#   scene_<seed>/
#     scene.txt                         key=value metadata (seed, category)
#     object.voxl                       ground-truth occupancy
#     cam_<az>_<el>.txt                 camera rig
#     depth_<az>_<el>.dpth              written by `render`
#     mask_<az>_<el>.pgm                written by `render`
#     grasps.jsonl                      written by `gen-grasps`

def write_scene(scene: Scene, outdir) -> None:
    import os

    from .geometry import write_camera
    from .voxel import write_voxl

    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "scene.txt"), "w", encoding="ascii") as f:
        f.write(f"seed={scene.spec.seed}\ncategory={scene.category}\n")
    write_voxl(scene.grid, os.path.join(outdir, "object.voxl"))
    for name, cam in scene.cameras.items():
        write_camera(cam, os.path.join(outdir, f"{name}.txt"))


@dataclass
class SceneDir:
    """On-disk scene: ground-truth grid plus the camera rig (renders optional)."""

    path: str
    grid: OccupancyGrid
    cameras: dict
    category: str
    seed: int

    @property
    def name(self) -> str:
        return f"scene_{self.seed}"

    def camera_names(self, elevations=None) -> list:
        if elevations is None:
            return list(self.cameras)
        keep = set(int(e) for e in elevations)
        return [n for n in self.cameras if int(n.rsplit("_", 1)[1]) in keep]


def load_scene_dir(path) -> SceneDir:
    import os

    from .config import load_kv_file
    from .geometry import read_camera
    from .voxel import read_voxl

    meta = load_kv_file(os.path.join(path, "scene.txt"))
    grid = read_voxl(os.path.join(path, "object.voxl"))
    cameras = {}
    for fn in sorted(os.listdir(path)):
        if fn.startswith("cam_") and fn.endswith(".txt"):
            cameras[fn[:-4]] = read_camera(os.path.join(path, fn))
    return SceneDir(str(path), grid, cameras, meta.get("category", ""),
                    int(meta.get("seed", "0")))
