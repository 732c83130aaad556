"""Analysis-by-synthesis grasp search.

Each step draws a handful of random pose perturbations, keeps the one the
outcome predictor scores highest, moves there, and asks the oracle whether
the grasp now succeeds; the walk stops at the first success or after the
step budget.  Success is always oracle-confirmed, never predictor-claimed.

The default strategy is exactly this sample-and-select hill climb; a
classical cross-entropy-method mode (refit a Gaussian to the elite set
each step) is available behind `strategy="cem"` for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import STREAM_OBSCAM, STREAM_PLAN, STREAM_START, derived_rng
from .grasp import (DEFAULT_GRIPPER, GraspOutcome, GraspPose, GripperSpec,
                    TRAIN_ELEVATIONS, find_seed_grasp, grasp_oracle)
from .predictor import FeatureVector, MlpModel, featurize, predict
from .projection import ProjectionSpec, project_exact


@dataclass
class PlanConfig:
    """Search budget, per-step noise scale, and the model/oracle handles.

    `predictor(grid, obs, pose) -> score` ranks candidates;
    `oracle(grid, pose) -> GraspOutcome` judges the chosen pose.  Per-step
    sigma is deliberately smaller than the data-augmentation noise so the
    walk refines instead of teleporting.
    """

    predictor: object
    oracle: object
    max_steps: int = 20
    directions: int = 10
    sigma_pos: float = 0.02
    sigma_rot_deg: float = 8.0
    seed: int = 0
    strategy: str = "hillclimb"          # or "cem"
    require_improvement: bool = False    # move only on a strictly better score
    elite_frac: float = 0.3              # cem mode

    def __post_init__(self):
        if self.max_steps < 1 or self.directions < 1:
            raise ValueError("max_steps and directions must be >= 1")
        if self.strategy not in ("hillclimb", "cem"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class TraceStep:
    step: int
    pose: GraspPose
    score: float
    outcome: GraspOutcome


@dataclass
class PlanTrace:
    steps: list
    status: str          # "success" or "exhausted"

    def __post_init__(self):
        if self.status not in ("success", "exhausted"):
            raise ValueError(f"bad trace status {self.status!r}")
        if self.status == "success" and self.steps[-1].outcome is not GraspOutcome.SUCCESS:
            raise ValueError("success trace must end on an oracle success")

    @property
    def final_pose(self) -> GraspPose:
        return self.steps[-1].pose

    def success_step(self):
        """Step index of the oracle-confirmed success, or None."""
        if self.status != "success":
            return None
        return self.steps[-1].step


def plan(grid, obs, start: GraspPose, cfg: PlanConfig) -> PlanTrace:
    """Guided pose walk from a failing start; raises ValueError when the
    start already succeeds (the search must be forced to improve)."""
    start_outcome = cfg.oracle(grid, start)
    if start_outcome is GraspOutcome.SUCCESS:
        raise ValueError("plan() requires a failing start pose")
    current = start
    current_score = float(cfg.predictor(grid, obs, current))
    steps = [TraceStep(0, current, current_score, start_outcome)]

    mean_pos = start.position.copy()
    mean_euler = start.euler_xyz_deg
    sigma_pos = np.full(3, cfg.sigma_pos)
    sigma_rot = np.full(3, cfg.sigma_rot_deg)

    for step in range(1, cfg.max_steps + 1):
        rng = derived_rng(cfg.seed, STREAM_PLAN, step)
        if cfg.strategy == "hillclimb":
            candidates = [current.perturbed(rng, cfg.sigma_pos, cfg.sigma_rot_deg)
                          for _ in range(cfg.directions)]
        else:
            candidates = []
            for _ in range(cfg.directions):
                pos = mean_pos + rng.normal(0.0, 1.0, 3) * sigma_pos
                euler = mean_euler + rng.normal(0.0, 1.0, 3) * sigma_rot
                candidates.append(GraspPose.from_euler_deg(pos, euler))
        scores = np.array([float(cfg.predictor(grid, obs, c)) for c in candidates])
        best = int(np.argmax(scores))

        if cfg.strategy == "cem":
            n_elite = max(1, int(np.ceil(cfg.elite_frac * cfg.directions)))
            elite = np.argsort(-scores)[:n_elite]
            epos = np.array([candidates[i].position for i in elite])
            eeul = np.array([candidates[i].euler_xyz_deg for i in elite])
            mean_pos, mean_euler = epos.mean(axis=0), eeul.mean(axis=0)
            sigma_pos = np.maximum(epos.std(axis=0), 0.2 * cfg.sigma_pos)
            sigma_rot = np.maximum(eeul.std(axis=0), 0.2 * cfg.sigma_rot_deg)

        if cfg.require_improvement and scores[best] <= current_score:
            chosen, chosen_score = current, current_score
        else:
            chosen, chosen_score = candidates[best], float(scores[best])
        outcome = cfg.oracle(grid, chosen)
        steps.append(TraceStep(step, chosen, chosen_score, outcome))
        current, current_score = chosen, chosen_score
        if outcome is GraspOutcome.SUCCESS:
            return PlanTrace(steps, "success")
    return PlanTrace(steps, "exhausted")


# ---------------------------------------------------------------------------
# Predictor handles

def oracle_predictor(gripper: GripperSpec = DEFAULT_GRIPPER, min_cells: int = 3):
    """Perfect scorer: 1.0 for oracle success, 0.0 otherwise."""
    def score(grid, obs, pose):
        return 1.0 if grasp_oracle(grid, pose, gripper, min_cells) is GraspOutcome.SUCCESS \
            else 0.0
    return score


def constant_predictor(value: float = 0.5):
    """Uninformed scorer; turns the walk into a pure random walk."""
    def score(grid, obs, pose):
        return value
    return score


def mlp_predictor(model: MlpModel, kind: str, gripper: GripperSpec = DEFAULT_GRIPPER,
                  use_grid: bool = True):
    """Scorer backed by a trained MLP over baseline or geometry-aware features."""
    def score(grid, obs, pose):
        feat = featurize(obs, pose, grid if (use_grid and kind == "geometry") else None,
                         kind=kind, gripper=gripper)
        return predict(model, feat)
    return score


def oracle_handle(gripper: GripperSpec = DEFAULT_GRIPPER, min_cells: int = 3):
    def judge(grid, pose):
        return grasp_oracle(grid, pose, gripper, min_cells)
    return judge


# ---------------------------------------------------------------------------
# Batch evaluation

@dataclass
class PlanRun:
    scene: str
    category: str
    repeat: int
    status: str
    success_step: object     # int or None


@dataclass
class EvalResult:
    runs: list

    @property
    def success_rate(self) -> float:
        if not self.runs:
            return 0.0
        return sum(r.status == "success" for r in self.runs) / len(self.runs)

    def rate_at(self, max_steps: int) -> float:
        """Success rate had the budget been capped at `max_steps`."""
        if not self.runs:
            return 0.0
        ok = sum(1 for r in self.runs
                 if r.success_step is not None and r.success_step <= max_steps)
        return ok / len(self.runs)

    def per_category(self) -> dict:
        cats = {}
        for r in self.runs:
            cats.setdefault(r.category, []).append(r.status == "success")
        return {c: sum(v) / len(v) for c, v in sorted(cats.items())}


def find_failing_start(grid, seed_pose: GraspPose, cfg_seed: int, scene_index: int,
                       repeat: int, gripper: GripperSpec = DEFAULT_GRIPPER,
                       min_cells: int = 3, max_tries: int = 200) -> GraspPose:
    """Seeded perturbation of the scene's seed grasp until the oracle says
    non-success; deterministic in (cfg_seed, scene_index, repeat), so runs
    are paired across predictors."""
    rng = derived_rng(cfg_seed, STREAM_START, scene_index, repeat)
    for _ in range(max_tries):
        pose = seed_pose.perturbed(rng, 0.05, 20.0)
        if grasp_oracle(grid, pose, gripper, min_cells) is not GraspOutcome.SUCCESS:
            return pose
    raise RuntimeError("could not find a failing start pose")


def eval_planning(scenes, predictor, cfg: PlanConfig, repeats: int = 8,
                  gripper: GripperSpec = DEFAULT_GRIPPER, min_cells: int = 3,
                  d_samples: int = 128) -> EvalResult:
    """Run (scene x repeat) planning episodes and aggregate success.

    `scenes` is a list of Scene/SceneDir objects (needs .grid, .cameras,
    .category, .camera_names).  All per-run randomness derives from
    (cfg.seed, scene index, repeat), so two predictors evaluated with the
    same cfg.seed see identical starts and observation cameras.
    """
    runs = []
    for si, scene in enumerate(scenes):
        seed_pose = find_seed_grasp(scene.grid, gripper, min_cells)
        if seed_pose is None:
            raise ValueError(f"no seed grasp found for scene index {si}")
        train_names = scene.camera_names(TRAIN_ELEVATIONS)
        obs_cache = {}
        for rep in range(repeats):
            cam_rng = derived_rng(cfg.seed, STREAM_OBSCAM, si, rep)
            cam_name = train_names[int(cam_rng.integers(len(train_names)))]
            if cam_name not in obs_cache:
                cam = scene.cameras[cam_name]
                dmap, mmap = project_exact(scene.grid,
                                           ProjectionSpec(cam, d_samples=d_samples))
                obs_cache[cam_name] = (dmap, mmap, cam)
            obs = obs_cache[cam_name]
            start = find_failing_start(scene.grid, seed_pose, cfg.seed, si, rep,
                                       gripper, min_cells)
            run_cfg = PlanConfig(
                predictor=predictor, oracle=cfg.oracle, max_steps=cfg.max_steps,
                directions=cfg.directions, sigma_pos=cfg.sigma_pos,
                sigma_rot_deg=cfg.sigma_rot_deg,
                seed=int(derived_rng(cfg.seed, STREAM_PLAN, si, rep).integers(2 ** 62)),
                strategy=cfg.strategy, require_improvement=cfg.require_improvement,
                elite_frac=cfg.elite_frac)
            trace = plan(scene.grid, obs, start, run_cfg)
            name = getattr(scene, "name", getattr(scene, "path", f"scene{si}"))
            runs.append(PlanRun(str(name), scene.category, rep, trace.status,
                                trace.success_step()))
    return EvalResult(runs)
