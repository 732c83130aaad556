"""Grasp-outcome predictors: fixed featurization plus a small trainable MLP.

Two feature layouts share a common observation block:

  baseline        -- 16x16 observation depth + 16x16 observation mask
                     (block-mean downsampled, depth normalized to [0, 1]
                     by the clip planes) + 10 normalized pose numbers.
  geometry-aware  -- baseline + a 12x12 depth and 12x12 mask hallucinated
                     from the occupancy grid through the gripper-perspective
                     local view (48x48, pooled by 4).

The pose block is position relative to the grid center over the grid half
extent (3), the canonicalized unit quaternion (4), and three reserved
slots of which the first carries the gripper opening as a fraction of a
0.2 m reference aperture.

The MLP is input -> 64 -> 32 -> 1 with tanh hidden layers and a sigmoid
output, trained full batch on mean cross-entropy by plain gradient
descent; training is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import STREAM_TRAIN, derived_rng
from .errors import DivergenceError, FormatError
from .grasp import DEFAULT_GRIPPER, GraspPose, GripperSpec
from .projection import DEFAULT_LOCAL_VIEW, LocalViewSpec, project_local
from .voxel import OccupancyGrid

OBS_POOL_SIZE = 16
LOCAL_POOL_SIZE = 12
POSE_NUMBERS = 10
OPENING_REFERENCE = 0.2    # meters; normalizes the gripper aperture feature

BASELINE_DIM = 2 * OBS_POOL_SIZE * OBS_POOL_SIZE + POSE_NUMBERS
GEOMETRY_DIM = BASELINE_DIM + 2 * LOCAL_POOL_SIZE * LOCAL_POOL_SIZE

# world frame used when no grid is supplied; matches the standard SceneSpec
DEFAULT_FRAME = (np.array([0.0, 0.0, 0.15]), 0.2)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    kind: str          # "baseline" or "geometry"

    def __post_init__(self):
        expected = BASELINE_DIM if self.kind == "baseline" else GEOMETRY_DIM
        if self.kind not in ("baseline", "geometry"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.values.shape != (expected,):
            raise ValueError(f"{self.kind} features must have length {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite entries")


def block_mean(arr: np.ndarray, factor: int) -> np.ndarray:
    h, w = arr.shape
    if h % factor or w % factor:
        raise ValueError(f"resolution {arr.shape} not divisible by {factor}")
    return arr.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    for v in (q[3], q[0], q[1], q[2]):
        if v != 0.0:
            return q if v > 0 else -q
    return q


def featurize(obs, pose: GraspPose, grid: OccupancyGrid = None, *,
              kind: str = "baseline", gripper: GripperSpec = DEFAULT_GRIPPER,
              frame=None, local: LocalViewSpec = DEFAULT_LOCAL_VIEW) -> FeatureVector:
    """Deterministic features for one (observation, action) pair.

    obs is a (DepthMap, MaskMap, CameraModel) triple.  The geometry-aware
    kind requires `grid` (ground-truth or fitted occupancy — both are
    legitimate sources) and renders the local gripper view from it; the
    local block depends only on grid and pose, never on the observation
    camera.
    """
    dmap, mmap, _cam = obs
    if frame is None:
        frame = (grid.center, float(np.max(grid.extent) / 2.0)) if grid is not None \
            else DEFAULT_FRAME
    center, half_extent = frame

    obs_factor = dmap.height // OBS_POOL_SIZE
    depth_norm = (dmap.values - dmap.z_near) / (dmap.z_far - dmap.z_near)
    parts = [block_mean(depth_norm, obs_factor).ravel(),
             block_mean(mmap.values, obs_factor).ravel()]

    rel = np.clip((pose.position - center) / half_extent, -1.0, 1.0)
    quat = _canonical_quat(pose.quat)
    reserved = np.array([gripper.max_opening / OPENING_REFERENCE, 0.0, 0.0])
    parts.append(np.concatenate([rel, quat, reserved]))

    if kind == "geometry":
        if grid is None:
            raise ValueError("geometry-aware features require an occupancy grid")
        ldepth, lmask = project_local(grid, pose, local)
        local_factor = local.resolution // LOCAL_POOL_SIZE
        ldepth_norm = (ldepth.values - local.z_near) / (local.z_far - local.z_near)
        parts.append(block_mean(ldepth_norm, local_factor).ravel())
        parts.append(block_mean(lmask.values, local_factor).ravel())

    return FeatureVector(np.concatenate(parts), kind)


# ---------------------------------------------------------------------------
# MLP

HIDDEN_SIZES = (64, 32)


@dataclass
class MlpModel:
    """Fully connected scorer; weights[k] has shape (out_k, in_k)."""

    sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("model parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.sizes[0]


def init_mlp(input_dim: int, seed: int = 0, hidden=HIDDEN_SIZES) -> MlpModel:
    sizes = (input_dim, *hidden, 1)
    rng = derived_rng(seed, STREAM_TRAIN)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases)


def _forward(model: MlpModel, x: np.ndarray):
    """Returns (logits (N,), activations per layer) for inputs x (N, d)."""
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        h = z if k == last else np.tanh(z)
        acts.append(h)
    return h[:, 0], acts


def _bce_loss_and_dz(logits: np.ndarray, labels: np.ndarray):
    # mean cross-entropy on logits: softplus(z) - y z; gradient (p - y)/N
    loss = float(np.mean(np.logaddexp(0.0, logits) - labels * logits))
    probs = 1.0 / (1.0 + np.exp(-logits))
    return loss, (probs - labels) / labels.size


def mlp_gradients(model: MlpModel, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and parameter gradients (full batch)."""
    logits, acts = _forward(model, x)
    loss, dz = _bce_loss_and_dz(logits, labels)
    delta = dz[:, None]
    grads_w, grads_b = [], []
    for k in range(len(model.weights) - 1, -1, -1):
        a_in = acts[k]
        grads_w.append(delta.T @ a_in)
        grads_b.append(delta.sum(axis=0))
        if k > 0:
            delta = (delta @ model.weights[k]) * (1.0 - acts[k] ** 2)
    return loss, grads_w[::-1], grads_b[::-1]


def train(features: np.ndarray, labels: np.ndarray, epochs: int = 2000,
          lr: float = 0.05, seed: int = 0, hidden=HIDDEN_SIZES):
    """Full-batch gradient descent; returns (model, loss curve).

    Needs at least two records with both classes present.  Raises
    DivergenceError if the loss turns non-finite.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("training needs at least 2 records")
    if len(np.unique(y)) < 2:
        raise ValueError("training needs both outcome classes")
    model = init_mlp(x.shape[1], seed, hidden)
    losses = []
    for epoch in range(epochs):
        loss, gw, gb = mlp_gradients(model, x, y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        losses.append(loss)
        for k in range(len(model.weights)):
            model.weights[k] -= lr * gw[k]
            model.biases[k] -= lr * gb[k]
    return model, losses


def predict(model: MlpModel, feature) -> float:
    """Score in (0, 1) for one feature vector."""
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature)
    if values.shape != (model.input_dim,):
        raise ValueError(f"feature length {values.shape} != model input {model.input_dim}")
    logits, _ = _forward(model, values[None, :])
    return float(1.0 / (1.0 + np.exp(-logits[0])))


def predict_batch(model: MlpModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != model.input_dim:
        raise ValueError(f"feature length {x.shape[1]} != model input {model.input_dim}")
    logits, _ = _forward(model, x)
    return 1.0 / (1.0 + np.exp(-logits))


def evaluate(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of records where (score >= 0.5) matches the outcome."""
    y = np.asarray(labels, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot evaluate on an empty record set")
    scores = predict_batch(model, features)
    return float(np.mean((scores >= 0.5) == (y >= 0.5)))


# ---------------------------------------------------------------------------
# Model file: ASCII header + float32 parameters, per layer weights then bias

def write_mlp(model: MlpModel, path) -> None:
    header = "MLP {} {}\n".format(len(model.sizes), " ".join(str(s) for s in model.sizes))
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for w, b in zip(model.weights, model.biases):
            f.write(w.astype("<f4").tobytes())
            f.write(b.astype("<f4").tobytes())


def read_mlp(path) -> MlpModel:
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("MLP header line missing", 0)
    fields = data[:nl].decode("ascii", errors="replace").split()
    if len(fields) < 3 or fields[0] != "MLP":
        raise FormatError("malformed MLP header", 0)
    try:
        n = int(fields[1])
        sizes = tuple(int(s) for s in fields[2:])
    except ValueError as exc:
        raise FormatError(f"unparseable MLP header: {exc}", 0) from exc
    if len(sizes) != n:
        raise FormatError(f"MLP header announces {n} sizes, lists {len(sizes)}", 0)
    pos = nl + 1
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        wb = fan_out * fan_in * 4
        if pos + wb + fan_out * 4 > len(data):
            raise FormatError("truncated MLP payload", len(data))
        weights.append(np.frombuffer(data[pos:pos + wb], dtype="<f4")
                       .reshape(fan_out, fan_in).astype(np.float64))
        pos += wb
        biases.append(np.frombuffer(data[pos:pos + fan_out * 4], dtype="<f4")
                      .astype(np.float64))
        pos += fan_out * 4
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after MLP payload", pos)
    return MlpModel(sizes, weights, biases)
