"""Learning-free projection of occupancy volumes into depth and mask maps.

The operator resamples the world-anchored volume onto the camera's NDC
cube (one boxed ray of D' samples per output pixel, pixel-center sampling
at (2i+1)/N - 1) and flattens the ray dimension:

  exact mode  -- mask is the per-ray max; depth is the precomputed slab
                 depth of the first sample strictly above the occupancy
                 threshold, z_far for background rays, z_near when only
                 the degenerate max-equals-threshold case remains.
  soft mode   -- differentiable surrogate: the ray "hits" with probability
                 1 - prod(1 - U_l), and depth is the expectation over
                 first-hit weights w_l = U_l * prod_{j<l}(1 - U_j), with
                 the leftover transmittance assigned to z_far.  Gradients
                 with respect to every grid cell come from reverse
                 accumulation (SoftProjection.backward).

Slab depths are the magnitudes of the eye-space depths f(2l/D' - 1) of
the NDC depth grid, precomputed once per projection plan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._plan import build_plan
from .errors import FormatError
from .geometry import CameraModel, perspective, rigid_inverse
from .voxel import OCCUPIED_THRESHOLD, OccupancyGrid


@dataclass(frozen=True)
class ProjectionSpec:
    """Resolution, ray sampling density, and mode of one projection."""

    camera: CameraModel
    d_samples: int = 64
    width: int = 0            # 0 means "use the camera's"
    height: int = 0
    mode: str = "exact"
    sharpness: float = 1.0    # reserved; the soft compositor is parameter-free

    def __post_init__(self):
        if self.d_samples < 2:
            raise ValueError("d_samples must be >= 2")
        if self.mode not in ("exact", "soft"):
            raise ValueError(f"unknown projection mode {self.mode!r}")
        if not self.sharpness > 0.0:
            raise ValueError("sharpness must be > 0")
        if self.width == 0:
            object.__setattr__(self, "width", self.camera.width)
        if self.height == 0:
            object.__setattr__(self, "height", self.camera.height)
        if self.width < 1 or self.height < 1:
            raise ValueError("output resolution must be at least 1x1")


@dataclass
class SampledVolume:
    """Ray-aligned resampled volume U, shape (H', W', D')."""

    values: np.ndarray

    @property
    def dims(self) -> tuple:
        return self.values.shape


@dataclass
class DepthMap:
    """Metric depth raster (positive meters); background pixels hold z_far."""

    values: np.ndarray      # (H, W) float64
    z_near: float
    z_far: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("depth map must be 2D")
        if not (0.0 < self.z_near < self.z_far):
            raise ValueError("require 0 < z_near < z_far")
        lo, hi = self.values.min(), self.values.max()
        if lo < self.z_near - 1e-9 or hi > self.z_far + 1e-9:
            raise ValueError(f"depth values [{lo}, {hi}] escape [z_near, z_far]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass
class MaskMap:
    """Foreground raster in [0, 1]."""

    values: np.ndarray      # (H, W) float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("mask map must be 2D")
        if self.values.min() < -1e-12 or self.values.max() > 1.0 + 1e-12:
            raise ValueError("mask values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Projection plan: everything about a (grid frame, spec) pair that does not
# depend on cell values.

@dataclass
class ProjectionPlan:
    spec: ProjectionSpec
    grid_shape: tuple
    idx: np.ndarray          # (N, 8) int64, N = H'*W'*D'
    weights: np.ndarray      # (N, 8) float64
    depth_table: np.ndarray  # (D',) metric slab depths

    @property
    def n_pixels(self) -> int:
        return self.spec.height * self.spec.width


def _ndc_axis(n: int) -> np.ndarray:
    # pixel centers: (2i + 1) / n - 1
    return (2.0 * np.arange(n, dtype=np.float64) + 1.0) / n - 1.0


def _slab_depth_table(d_samples: int, z_near: float, z_far: float) -> np.ndarray:
    # magnitude of the eye-space depth at NDC z = 2l/D' - 1
    alpha = (z_near - z_far) / (2.0 * z_near * z_far)
    beta = (z_near + z_far) / (2.0 * z_near * z_far)
    z = 2.0 * np.arange(d_samples, dtype=np.float64) / d_samples - 1.0
    return np.abs(-1.0 / (alpha * z + beta))


def build_projection_plan(grid: OccupancyGrid, spec: ProjectionSpec) -> ProjectionPlan:
    """Precompute sample indices/weights and the slab depth table.

    Raises np.linalg.LinAlgError when the camera's composed matrix is not
    invertible.
    """
    cam = spec.camera
    p_inv = np.linalg.inv(cam.matrix)

    xs = _ndc_axis(spec.width)
    ys = _ndc_axis(spec.height)
    zs = _ndc_axis(spec.d_samples)
    yy, xx, zz = np.meshgrid(ys, xs, zs, indexing="ij")  # (H', W', D')

    # homogeneous back-projection, written elementwise so the arithmetic is
    # reproducible against the scalar reference marcher
    wx = p_inv[0, 0] * xx + p_inv[0, 1] * yy + p_inv[0, 2] * zz + p_inv[0, 3]
    wy = p_inv[1, 0] * xx + p_inv[1, 1] * yy + p_inv[1, 2] * zz + p_inv[1, 3]
    wz = p_inv[2, 0] * xx + p_inv[2, 1] * yy + p_inv[2, 2] * zz + p_inv[2, 3]
    ww = p_inv[3, 0] * xx + p_inv[3, 1] * yy + p_inv[3, 2] * zz + p_inv[3, 3]
    px = wx / ww
    py = wy / ww
    pz = wz / ww

    gx = (px - grid.origin[0]) / grid.cell_size - 0.5
    gy = (py - grid.origin[1]) / grid.cell_size - 0.5
    gz = (pz - grid.origin[2]) / grid.cell_size - 0.5
    coords = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)

    idx, weights = build_plan(grid.values.shape, coords)
    table = _slab_depth_table(spec.d_samples, cam.z_near, cam.z_far)
    return ProjectionPlan(spec, grid.values.shape, idx, weights, table)


def _gather_u(values: np.ndarray, plan: ProjectionPlan) -> np.ndarray:
    flat = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    u = backend.kernels.gather_plan(flat, plan.idx, plan.weights)
    return u.reshape(plan.n_pixels, plan.spec.d_samples)


def resample_to_ndc(grid: OccupancyGrid, spec: ProjectionSpec) -> SampledVolume:
    """Dense trilinear resampling of the grid onto the camera's NDC cube."""
    plan = build_projection_plan(grid, spec)
    u = _gather_u(grid.values, plan)
    return SampledVolume(u.reshape(spec.height, spec.width, spec.d_samples))


def project_exact(grid: OccupancyGrid, spec: ProjectionSpec = None, *,
                  plan: ProjectionPlan = None) -> tuple:
    """Forward projection, first-crossing depth rule.  Returns (DepthMap, MaskMap)."""
    if plan is None:
        if spec is None:
            raise TypeError("project_exact needs a spec or a prebuilt plan")
        if spec.mode != "exact":
            raise ValueError("project_exact requires an exact-mode spec")
        plan = build_projection_plan(grid, spec)
    spec = plan.spec
    u = _gather_u(grid.values, plan)
    mask, depth = backend.kernels.composite_exact(
        u, plan.depth_table, spec.camera.z_near, spec.camera.z_far, OCCUPIED_THRESHOLD)
    shape = (spec.height, spec.width)
    return (DepthMap(depth.reshape(shape), spec.camera.z_near, spec.camera.z_far),
            MaskMap(mask.reshape(shape)))


@dataclass
class SoftProjection:
    """Soft projection outputs plus the state needed for the backward pass."""

    depth: DepthMap
    mask: MaskMap
    _plan: ProjectionPlan = field(repr=False)
    _u: np.ndarray = field(repr=False)
    _trans: np.ndarray = field(repr=False)

    def backward(self, d_depth: np.ndarray, d_mask: np.ndarray) -> np.ndarray:
        """Gradient of (d_depth . depth + d_mask . mask) w.r.t. every grid cell."""
        plan = self._plan
        du = backend.kernels.composite_soft_backward(
            self._u, self._trans, plan.depth_table, plan.spec.camera.z_far,
            np.ascontiguousarray(d_mask, dtype=np.float64).reshape(-1),
            np.ascontiguousarray(d_depth, dtype=np.float64).reshape(-1))
        grad_flat = np.zeros(int(np.prod(plan.grid_shape)), dtype=np.float64)
        backend.kernels.scatter_plan(grad_flat, plan.idx, plan.weights, du.reshape(-1))
        return grad_flat.reshape(plan.grid_shape)


def project_soft(grid: OccupancyGrid, spec: ProjectionSpec = None, *,
                 plan: ProjectionPlan = None) -> SoftProjection:
    """Differentiable projection; gradients via SoftProjection.backward."""
    if plan is None:
        if spec is None:
            raise TypeError("project_soft needs a spec or a prebuilt plan")
        if spec.mode != "soft":
            raise ValueError("project_soft requires a soft-mode spec")
        plan = build_projection_plan(grid, spec)
    spec = plan.spec
    u = _gather_u(grid.values, plan)
    mask, depth, trans = backend.kernels.composite_soft_forward(
        u, plan.depth_table, spec.camera.z_far)
    shape = (spec.height, spec.width)
    return SoftProjection(
        DepthMap(depth.reshape(shape), spec.camera.z_near, spec.camera.z_far),
        MaskMap(np.clip(mask.reshape(shape), 0.0, 1.0)),
        plan, u, trans)


def binarize_mask(mask: MaskMap, threshold: float = OCCUPIED_THRESHOLD) -> MaskMap:
    """Silhouette from a continuous mask: 1 where >= threshold, else 0.

    Supervision masks are binarized before fitting; the fractional values a
    grazing ray picks up from the tent kernel would otherwise act as depth
    information (and as down-pressure on every cell along the ray).
    """
    return MaskMap((mask.values >= threshold).astype(np.float64))


# ---------------------------------------------------------------------------
# Gripper-perspective local view

@dataclass(frozen=True)
class LocalViewSpec:
    """Virtual camera at the gripper palm looking along the approach axis.

    The sample count is higher than the global default because the wide
    near/far ratio (1 cm / 30 cm) spreads perspective depth samples thin
    toward the far end of the finger workspace.
    """

    resolution: int = 48
    fov_y_deg: float = 90.0
    z_near: float = 0.01
    z_far: float = 0.30
    d_samples: int = 192


DEFAULT_LOCAL_VIEW = LocalViewSpec()


def local_view_camera(pose_matrix: np.ndarray, local: LocalViewSpec = DEFAULT_LOCAL_VIEW) -> CameraModel:
    """CameraModel equivalent of the gripper-as-virtual-camera placement."""
    k = perspective(local.fov_y_deg, 1.0, local.z_near, local.z_far)
    return CameraModel(k, rigid_inverse(np.asarray(pose_matrix, dtype=np.float64)),
                       local.z_near, local.z_far, local.resolution, local.resolution)


def project_local(grid: OccupancyGrid, pose, local: LocalViewSpec = DEFAULT_LOCAL_VIEW) -> tuple:
    """Exact projection from the gripper's viewpoint.  `pose` is a GraspPose
    or a 4x4 gripper-to-world matrix; the camera looks along the gripper's
    local -z (the approach axis)."""
    m = pose.matrix if hasattr(pose, "matrix") else np.asarray(pose, dtype=np.float64)
    cam = local_view_camera(m, local)
    spec = ProjectionSpec(cam, d_samples=local.d_samples, mode="exact")
    return project_exact(grid, spec)


# ---------------------------------------------------------------------------
# Raster file formats

def write_depth(dmap: DepthMap, path) -> None:
    header = "DPTH {} {} {:.17g} {:.17g}\n".format(
        dmap.width, dmap.height, dmap.z_near, dmap.z_far)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(dmap.values.astype("<f4").tobytes())


def read_depth(path) -> DepthMap:
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("DPTH header line missing", 0)
    fields = data[:nl].decode("ascii", errors="replace").split()
    if len(fields) != 5 or fields[0] != "DPTH":
        raise FormatError("malformed DPTH header", 0)
    try:
        w, h = int(fields[1]), int(fields[2])
        z_near, z_far = float(fields[3]), float(fields[4])
    except ValueError as exc:
        raise FormatError(f"unparseable DPTH header field: {exc}", 0) from exc
    payload = data[nl + 1:]
    if len(payload) != w * h * 4:
        raise FormatError(f"DPTH payload is {len(payload)} bytes, expected {w * h * 4}",
                          nl + 1 + len(payload))
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)
    # float32 round-tripping may nick the bounds; restore them exactly
    values = np.clip(values, z_near, z_far)
    return DepthMap(values, z_near, z_far)


def write_mask(mask: MaskMap, path) -> None:
    data = np.rint(mask.values * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_mask(path) -> MaskMap:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise FormatError("not a binary PGM (P5) file", 0)
    # header: magic, width, height, maxval, single whitespace, then raster
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", start)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"unparseable PGM header: {exc}", 2) from exc
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}", 2)
    raster = data[pos:]
    if len(raster) != w * h:
        raise FormatError(f"PGM raster is {len(raster)} bytes, expected {w * h}",
                          pos + len(raster))
    values = np.frombuffer(raster, dtype=np.uint8).reshape(h, w) / 255.0
    return MaskMap(values)
