"""World-anchored occupancy volumes with trilinear sampling.

Grid values live in [0, 1] and are stored as a float64 array of shape
(H, W, D) indexed [n, m, l]: n is the y row, m the x column, l the z slab.
The continuous grid index space puts integer coordinate m exactly on the
center of cell column m, so cell (n, m, l) has world-space center

    origin + (m + 0.5, n + 0.5, l + 0.5) * cell_size   (x, y, z order).

`world_to_index` is the single authoritative conversion between world
coordinates and index space; nothing else in the package does this math.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GridMismatchError
from .geometry import rotation_from_quat, translation

OCCUPIED_THRESHOLD = 0.5  # default "occupied" cutoff used across the toolkit


@dataclass
class OccupancyGrid:
    """Occupancy volume anchored in world space."""

    values: np.ndarray          # (H, W, D) float64 in [0, 1]
    origin: np.ndarray          # world position of the grid corner, meters
    cell_size: float
    clipped: bool = field(default=False, compare=False)  # rasterizer warning flag

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError(f"grid dims must each be >= 1, got {self.values.shape}")
        if not self.cell_size > 0.0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        if not np.all(np.isfinite(self.origin)):
            raise ValueError("grid origin must be finite")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0) or \
                not np.all(np.isfinite(self.values)):
            raise ValueError("occupancy values must lie in [0, 1]")

    @property
    def dims(self) -> tuple:
        return self.values.shape

    @property
    def extent(self) -> np.ndarray:
        """World-space size along (x, y, z)."""
        h, w, d = self.values.shape
        return np.array([w, h, d], dtype=np.float64) * self.cell_size

    @property
    def center(self) -> np.ndarray:
        return self.origin + 0.5 * self.extent

    def spec_like(self) -> tuple:
        return (self.values.shape, tuple(self.origin), self.cell_size)

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Map world points (..., 3) to continuous grid-index coordinates.

        Elementwise expressions only: the exact projection path relies on
        this arithmetic being reproducible operation for operation.
        """
        points = np.asarray(points, dtype=np.float64)
        gx = (points[..., 0] - self.origin[0]) / self.cell_size - 0.5
        gy = (points[..., 1] - self.origin[1]) / self.cell_size - 0.5
        gz = (points[..., 2] - self.origin[2]) / self.cell_size - 0.5
        return np.stack([gx, gy, gz], axis=-1)

    def index_to_world(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        return (coords + 0.5) * self.cell_size + self.origin

    def occupied_centers(self, threshold: float = OCCUPIED_THRESHOLD) -> np.ndarray:
        """World centers of cells with value >= threshold, shape (N, 3)."""
        n, m, l = np.nonzero(self.values >= threshold)
        coords = np.stack([m, n, l], axis=-1).astype(np.float64)
        return self.index_to_world(coords)

    def copy_with(self, values: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(values, self.origin.copy(), self.cell_size)


def trilinear_sample(grid: OccupancyGrid, p) -> float:
    """Tent-kernel (trilinear) sample at a continuous index-space point.

    p is (x, y, z) in index space; coordinates fully outside the grid
    support contribute 0 (free space, not clamped border values).
    """
    from .backend import gather
    coords = np.asarray(p, dtype=np.float64).reshape(1, 3)
    return float(gather(grid.values, coords)[0])


def trilinear_sample_many(grid: OccupancyGrid, coords: np.ndarray) -> np.ndarray:
    """Vector form of trilinear_sample; coords is (N, 3) index-space."""
    from .backend import gather
    return gather(grid.values, np.ascontiguousarray(coords, dtype=np.float64))


# ---------------------------------------------------------------------------
# Primitive rasterization (synthetic ground-truth scenes)

PRIMITIVE_KINDS = ("box", "cylinder", "sphere", "tube", "plate")


@dataclass(frozen=True)
class PrimitiveShape:
    """Solid primitive with a rigid pose.

    size semantics per kind:
      box / plate: (sx, sy, sz) full side lengths (plate is just a flat box)
      cylinder:    (radius, height)
      sphere:      (radius,)
      tube:        (r_outer, r_inner, height); concave, open at both ends
    """

    kind: str
    size: tuple
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "quat", np.asarray(self.quat, dtype=np.float64))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Inside test for world points (N, 3); outer surfaces are exclusive."""
        pose = translation(self.position) @ rotation_from_quat(self.quat)
        r = pose[:3, :3]
        local = (np.asarray(points, dtype=np.float64) - pose[:3, 3]) @ r  # R^T p
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        if self.kind in ("box", "plate"):
            sx, sy, sz = self.size
            return (np.abs(x) < sx / 2) & (np.abs(y) < sy / 2) & (np.abs(z) < sz / 2)
        if self.kind == "cylinder":
            radius, height = self.size
            return (x * x + y * y < radius * radius) & (np.abs(z) < height / 2)
        if self.kind == "sphere":
            (radius,) = self.size
            return x * x + y * y + z * z < radius * radius
        # tube: cylinder minus a coaxial cylinder; degenerate when radii meet
        r_out, r_in, height = self.size
        rho2 = x * x + y * y
        return (rho2 < r_out * r_out) & (rho2 > r_in * r_in) & (np.abs(z) < height / 2)

    def local_half_extent(self) -> np.ndarray:
        if self.kind in ("box", "plate"):
            return np.array(self.size, dtype=np.float64) / 2
        if self.kind == "cylinder":
            radius, height = self.size
            return np.array([radius, radius, height / 2])
        if self.kind == "sphere":
            (radius,) = self.size
            return np.array([radius, radius, radius])
        r_out, _, height = self.size
        return np.array([r_out, r_out, height / 2])


def rasterize_primitive(shape: PrimitiveShape, dims: tuple, origin,
                        cell_size: float) -> OccupancyGrid:
    """Binary-rasterize a primitive: cell value 1 iff the cell center is inside.

    If the shape's bounding box extends outside the grid AABB the result is
    still produced but flagged `clipped` (warning, not an error).
    """
    h, w, d = dims
    n, m, l = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
    coords = np.stack([m, n, l], axis=-1).reshape(-1, 3).astype(np.float64)
    grid = OccupancyGrid(np.zeros(dims), origin, cell_size)
    centers = grid.index_to_world(coords)
    inside = shape.contains(centers).reshape(dims).astype(np.float64)
    grid.values = inside

    # conservative shape AABB from the rotated local box corners
    half = shape.local_half_extent()
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                       dtype=np.float64) * half
    pose = translation(shape.position) @ rotation_from_quat(shape.quat)
    world_corners = corners @ pose[:3, :3].T + pose[:3, 3]
    lo = np.asarray(origin, dtype=np.float64)
    hi = lo + grid.extent
    grid.clipped = bool(np.any(world_corners < lo) or np.any(world_corners > hi))
    return grid


def iou(a: OccupancyGrid, b: OccupancyGrid, threshold: float = OCCUPIED_THRESHOLD) -> float:
    """Intersection-over-union of thresholded occupied sets.

    Grids must share dims, origin, and cell size.  Two empty sets count
    as perfect agreement (1.0).
    """
    if a.values.shape != b.values.shape or a.cell_size != b.cell_size or \
            not np.array_equal(a.origin, b.origin):
        raise GridMismatchError(f"grid specs differ: {a.spec_like()} vs {b.spec_like()}")
    sa = a.values > threshold
    sb = b.values > threshold
    union = np.count_nonzero(sa | sb)
    if union == 0:
        return 1.0
    return np.count_nonzero(sa & sb) / union


# ---------------------------------------------------------------------------
# Cell-exact rigid motions (used by view-consistency and oracle-invariance checks)

def rotate90_z(grid: OccupancyGrid, k: int = 1) -> OccupancyGrid:
    """Rotate the grid k*90 degrees about the world z axis through the grid center.

    Only square x/y footprints are supported; the transform maps cells onto
    cells exactly, so the result represents the same world-space solid as
    applying the matching rigid transform to the scene.
    """
    h, w, d = grid.values.shape
    if h != w:
        raise ValueError("rotate90_z requires a square x/y footprint")
    # numpy axes: 0 = y rows, 1 = x cols; +90 about z maps (x, y) -> (-y, x)
    vals = np.rot90(grid.values, k=-k % 4, axes=(0, 1)).copy()
    return OccupancyGrid(vals, grid.origin.copy(), grid.cell_size)


def rotate90_z_matrix(grid: OccupancyGrid, k: int = 1) -> np.ndarray:
    """World-space rigid transform matching rotate90_z(grid, k)."""
    c, s = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1)}[k % 4]
    rot = np.eye(4)
    rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, -s, s, c
    center = grid.center
    return translation(center) @ rot @ translation(-center)


def translate_cells(grid: OccupancyGrid, shift_cells) -> OccupancyGrid:
    """Shift occupancy by whole cells along (x, y, z); exposed content wraps to 0."""
    sx, sy, sz = (int(v) for v in shift_cells)
    vals = np.zeros_like(grid.values)
    h, w, d = grid.values.shape

    def rng(n, s):
        return (slice(max(s, 0), n + min(s, 0)), slice(max(-s, 0), n - max(s, 0)))

    (dy, sy_src), (dx, sx_src), (dz, sz_src) = rng(h, sy), rng(w, sx), rng(d, sz)
    vals[dy, dx, dz] = grid.values[sy_src, sx_src, sz_src]
    return OccupancyGrid(vals, grid.origin.copy(), grid.cell_size)


# ---------------------------------------------------------------------------
# VOXL file format: ASCII header + little-endian float32 payload, H outer / D inner

def write_voxl(grid: OccupancyGrid, path) -> None:
    h, w, d = grid.values.shape
    header = "VOXL {} {} {} {:.17g} {:.17g} {:.17g} {:.17g}\n".format(
        h, w, d, grid.origin[0], grid.origin[1], grid.origin[2], grid.cell_size)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(grid.values.astype("<f4").tobytes())


def read_voxl(path) -> OccupancyGrid:
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("VOXL header line missing", 0)
    fields = data[:nl].decode("ascii", errors="replace").split()
    if len(fields) != 8 or fields[0] != "VOXL":
        raise FormatError("malformed VOXL header", 0)
    try:
        h, w, d = int(fields[1]), int(fields[2]), int(fields[3])
        ox, oy, oz, cs = (float(v) for v in fields[4:8])
    except ValueError as exc:
        raise FormatError(f"unparseable VOXL header field: {exc}", 0) from exc
    payload = data[nl + 1:]
    expected = h * w * d * 4
    if len(payload) != expected:
        raise FormatError(
            f"VOXL payload is {len(payload)} bytes, expected {expected}", nl + 1 + len(payload))
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w, d).astype(np.float64)
    return OccupancyGrid(values, np.array([ox, oy, oz]), cs)
