"""Camera and rigid-transform math following the OpenGL convention.

Conventions used throughout the package:

- Vec3 is a float64 numpy array of shape (3,), Mat4 a float64 array of
  shape (4, 4), row-major, multiplying column vectors: p' = M @ p.
- The camera looks down its local -z axis; eye-space depth of visible
  points is negative.  NDC is the cube [-1, 1]^3 with z = -1 on the near
  plane and z = +1 on the far plane.
- ``metric depth`` in file formats and depth maps is the magnitude of the
  eye-space depth (positive meters).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateProjectionError

# Homogeneous w below this is treated as a degenerate projection, not clamped.
W_EPSILON = 1e-8


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def identity() -> np.ndarray:
    return np.eye(4, dtype=np.float64)


def translation(t) -> np.ndarray:
    m = np.eye(4, dtype=np.float64)
    m[:3, 3] = t
    return m


def rotation_from_quat(q) -> np.ndarray:
    """4x4 rotation from a unit quaternion given as (x, y, z, w)."""
    m = np.eye(4, dtype=np.float64)
    m[:3, :3] = Rotation.from_quat(np.asarray(q, dtype=np.float64)).as_matrix()
    return m


def quat_from_matrix(m) -> np.ndarray:
    """Unit quaternion (x, y, z, w) from the rotation block of a Mat4."""
    return Rotation.from_matrix(np.asarray(m, dtype=np.float64)[:3, :3]).as_quat()


def quat_to_euler_xyz_deg(q) -> np.ndarray:
    return Rotation.from_quat(np.asarray(q, dtype=np.float64)).as_euler("xyz", degrees=True)


def euler_xyz_deg_to_quat(e) -> np.ndarray:
    return Rotation.from_euler("xyz", np.asarray(e, dtype=np.float64), degrees=True).as_quat()


def is_rigid(m: np.ndarray, tol: float = 1e-9) -> bool:
    """True when the rotation block is orthonormal and the bottom row is (0,0,0,1)."""
    m = np.asarray(m)
    if m.shape != (4, 4):
        return False
    r = m[:3, :3]
    if not np.allclose(r.T @ r, np.eye(3), atol=tol):
        return False
    return bool(np.all(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])) <= tol))


def rigid_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a rigid transform (transposed rotation, back-rotated translation)."""
    r = m[:3, :3]
    t = m[:3, 3]
    inv = np.eye(4, dtype=np.float64)
    inv[:3, :3] = r.T
    inv[:3, 3] = -r.T @ t
    return inv


def transform_point(m: np.ndarray, p) -> np.ndarray:
    """Apply a homogeneous transform to a 3D point (with perspective divide)."""
    ph = m @ np.array([p[0], p[1], p[2], 1.0])
    w = ph[3]
    if abs(w) < W_EPSILON:
        raise DegenerateProjectionError(f"homogeneous w = {w!r} below epsilon")
    return ph[:3] / w


def look_at(eye, target, up) -> np.ndarray:
    """OpenGL-style view matrix: rigid transform placing `eye` at the origin
    looking down -z toward `target`.

    Raises ValueError when eye == target or `up` is parallel to the view
    direction.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("look_at: eye and target coincide")
    fwd = fwd / n
    side = np.cross(fwd, up)
    ns = np.linalg.norm(side)
    if ns < 1e-12:
        raise ValueError("look_at: up vector parallel to view direction")
    side = side / ns
    upv = np.cross(side, fwd)
    view = np.eye(4, dtype=np.float64)
    view[0, :3] = side
    view[1, :3] = upv
    view[2, :3] = -fwd
    view[:3, 3] = view[:3, :3] @ -eye
    return view


def perspective(fov_y_deg: float, aspect: float, z_near: float, z_far: float) -> np.ndarray:
    """OpenGL perspective projection matrix (near plane -> NDC z = -1, far -> +1)."""
    if not (0.0 < z_near < z_far):
        raise ValueError(f"require 0 < z_near < z_far, got {z_near}, {z_far}")
    f = 1.0 / np.tan(np.radians(fov_y_deg) / 2.0)
    k = np.zeros((4, 4), dtype=np.float64)
    k[0, 0] = f / aspect
    k[1, 1] = f
    k[2, 2] = (z_far + z_near) / (z_near - z_far)
    k[2, 3] = 2.0 * z_far * z_near / (z_near - z_far)
    k[3, 2] = -1.0
    return k


def ndc_depth_to_eye_depth(z_n: float, z_near: float, z_far: float):
    """Signed eye-space depth from an NDC depth-buffer value.

    z_e = -1 / (alpha * z_n + beta) with
    alpha = (z_near - z_far) / (2 z_near z_far),
    beta  = (z_near + z_far) / (2 z_near z_far).

    Monotone decreasing: z_n = -1 gives -z_near, z_n = +1 gives -z_far.
    Accepts scalars or arrays; raises ValueError outside [-1, 1].
    """
    z = np.asarray(z_n, dtype=np.float64)
    if np.any(z < -1.0) or np.any(z > 1.0):
        raise ValueError(f"NDC depth outside [-1, 1]: {z_n!r}")
    alpha = (z_near - z_far) / (2.0 * z_near * z_far)
    beta = (z_near + z_far) / (2.0 * z_near * z_far)
    out = -1.0 / (alpha * z + beta)
    return float(out) if np.isscalar(z_n) else out


def eye_depth_to_ndc(z_e: float, z_near: float, z_far: float):
    """Inverse of ndc_depth_to_eye_depth (z_e signed negative)."""
    alpha = (z_near - z_far) / (2.0 * z_near * z_far)
    beta = (z_near + z_far) / (2.0 * z_near * z_far)
    z = np.asarray(z_e, dtype=np.float64)
    out = (-1.0 / z - beta) / alpha
    return float(out) if np.isscalar(z_e) else out


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: OpenGL intrinsics + rigid view matrix + clip planes.

    `intrinsics` maps eye space to clip space, `view` maps world to eye
    space; the composed P = intrinsics @ view maps world points onto the
    NDC cube after perspective divide.
    """

    intrinsics: np.ndarray
    view: np.ndarray
    z_near: float
    z_far: float
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.z_near < self.z_far):
            raise ValueError(f"require 0 < z_near < z_far, got {self.z_near}, {self.z_far}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image resolution must be at least 1x1")
        if not is_rigid(self.view, tol=1e-7):
            raise ValueError("view matrix is not a rigid transform")
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64))
        object.__setattr__(self, "view", np.asarray(self.view, dtype=np.float64))

    @classmethod
    def from_look_at(cls, eye, target, up, fov_y_deg: float, z_near: float,
                     z_far: float, width: int, height: int) -> "CameraModel":
        k = perspective(fov_y_deg, width / height, z_near, z_far)
        return cls(k, look_at(eye, target, up), z_near, z_far, width, height)

    @property
    def matrix(self) -> np.ndarray:
        """Composed world-to-clip transform P = K [R; t]."""
        return self.intrinsics @ self.view

    @property
    def eye(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return rigid_inverse(self.view)[:3, 3]

    def transformed(self, rigid: np.ndarray) -> "CameraModel":
        """Camera observing a scene rigidly moved by `rigid` (view composed with its inverse)."""
        return CameraModel(self.intrinsics, self.view @ rigid_inverse(rigid),
                           self.z_near, self.z_far, self.width, self.height)


def world_to_ndc(p, cam: CameraModel) -> np.ndarray:
    """Project a world point into NDC; degenerate (w <= epsilon) raises."""
    ph = cam.matrix @ np.array([p[0], p[1], p[2], 1.0])
    w = ph[3]
    if w < W_EPSILON:
        raise DegenerateProjectionError(
            f"point at or behind the eye plane (w = {w!r})")
    return ph[:3] / w


# ---------------------------------------------------------------------------
# Camera file format: one CAMR header line, then the view and intrinsics
# matrices row-major, 16 floats per line.

def write_camera(cam: CameraModel, path) -> None:
    def row(m):
        return " ".join(f"{v:.17g}" for v in np.asarray(m).reshape(-1))
    text = (f"CAMR {cam.width} {cam.height} {cam.z_near:.17g} {cam.z_far:.17g}\n"
            f"{row(cam.view)}\n{row(cam.intrinsics)}\n")
    with open(path, "wb") as f:
        f.write(text.encode("ascii"))


def read_camera(path) -> CameraModel:
    from .errors import FormatError
    with open(path, "rb") as f:
        data = f.read()
    lines = data.decode("ascii", errors="replace").splitlines()
    if len(lines) < 3:
        raise FormatError("camera file needs 3 lines", len(data))
    head = lines[0].split()
    if len(head) != 5 or head[0] != "CAMR":
        raise FormatError("malformed CAMR header", 0)
    try:
        width, height = int(head[1]), int(head[2])
        z_near, z_far = float(head[3]), float(head[4])
        view = np.array([float(v) for v in lines[1].split()]).reshape(4, 4)
        intr = np.array([float(v) for v in lines[2].split()]).reshape(4, 4)
    except ValueError as exc:
        raise FormatError(f"unparseable camera field: {exc}", 0) from exc
    return CameraModel(intr, view, z_near, z_far, width, height)
