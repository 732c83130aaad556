"""Command-line front end.

    graspgeo <command> [--config FILE] [--key=value ...]

Commands: gen-scene, render, fit-shape, gen-grasps, train-predictor,
plan-grasp, eval.  Every key has a default equal to the owning module's
constant; a key=value config file and --key=value flags override it
(flags win).  Unknown keys are rejected.  Each command writes the
resolved configuration it ran with into its output directory (path-typed
keys are omitted so reruns into other directories stay byte-identical).

All commands exit 0 on success and print a single machine-parseable
`error: <Type>: <message>` line on failure.
"""

from __future__ import annotations

import os
import sys

import numpy as np

from .config import RunConfig, load_kv_file, parse_bool
from .errors import ConfigError, GraspGeoError
from .geometry import read_camera
from .grasp import (DEFAULT_GRIPPER, GraspOutcome, SceneSpec, TRAIN_ELEVATIONS,
                    augment_grasps, balanced_grasp_set, find_seed_grasp,
                    generate_scene, load_scene_dir, seed_record, write_grasp_records,
                    write_scene)
from .pipeline import SceneDataset, feature_matrix, fitted_grid, render_views
from .planner import (PlanConfig, constant_predictor, eval_planning,
                      find_failing_start, mlp_predictor, oracle_handle,
                      oracle_predictor, plan)
from .predictor import read_mlp, train, write_mlp
from .projection import ProjectionSpec, project_exact, read_depth, read_mask, \
    write_depth, write_mask
from .shapefit import FitConfig, fit_shape, uniform_grid
from .voxel import write_voxl

PATH_KEYS = ("out", "scene", "scenes", "model", "model_baseline", "model_geometry")


def _schema_gen_scene():
    return {
        "seed": (int, 0),
        "out": (str, ""),
        "category": (str, ""),
        "grid_dims": (int, 32),
        "image_size": (int, 32),
        "fov_y_deg": (float, 60.0),
        "z_near": (float, 0.1),
        "z_far": (float, 1.0),
    }


def _schema_render():
    return {"scene": (str, ""), "d_samples": (int, 128)}


def _schema_fit_shape():
    return {
        "scene": (str, ""),
        "out": (str, ""),
        "elevations": (str, "all"),
        "iterations": (int, 2000),
        "step_size": (float, 30.0),
        "momentum": (float, 0.9),
        "lambda_depth": (float, 0.5),
        "lambda_mask": (float, 10.0),
        "d_samples": (int, 128),
        "init_value": (float, 0.15),
        "logit": (parse_bool, True),
        "binarize": (parse_bool, True),
    }


def _schema_gen_grasps():
    return {
        "scene": (str, ""),
        "seed": (int, 0),
        "n": (int, 100),
        "balance": (parse_bool, True),
        "sigma_pos": (float, 0.05),
        "sigma_rot_deg": (float, 20.0),
    }


def _schema_train_predictor():
    return {
        "scenes": (str, ""),
        "out": (str, ""),
        "kind": (str, "geometry"),
        "grid_source": (str, "truth"),
        "fit_iterations": (int, 600),
        "epochs": (int, 2000),
        "lr": (float, 0.05),
        "seed": (int, 0),
        "d_samples": (int, 128),
    }


def _schema_plan_grasp():
    return {
        "scene": (str, ""),
        "out": (str, ""),
        "predictor": (str, "oracle"),
        "model": (str, ""),
        "seed": (int, 0),
        "max_steps": (int, 20),
        "directions": (int, 10),
        "sigma_pos": (float, 0.02),
        "sigma_rot_deg": (float, 8.0),
        "strategy": (str, "hillclimb"),
        "require_improvement": (parse_bool, False),
        "d_samples": (int, 128),
    }


def _schema_eval():
    return {
        "scenes": (str, ""),
        "out": (str, ""),
        "predictors": (str, "oracle,constant"),
        "model_baseline": (str, ""),
        "model_geometry": (str, ""),
        "repeats": (int, 8),
        "seed": (int, 0),
        "max_steps": (int, 20),
        "directions": (int, 10),
        "sigma_pos": (float, 0.02),
        "sigma_rot_deg": (float, 8.0),
        "d_samples": (int, 128),
    }


SCHEMAS = {
    "gen-scene": _schema_gen_scene,
    "render": _schema_render,
    "fit-shape": _schema_fit_shape,
    "gen-grasps": _schema_gen_grasps,
    "train-predictor": _schema_train_predictor,
    "plan-grasp": _schema_plan_grasp,
    "eval": _schema_eval,
}

USAGE = """usage: graspgeo <command> [--config FILE] [--key=value ...]

commands:
  gen-scene        seeded scene directory (object.voxl + camera rig)
  render           depth/mask rasters for every camera in a scene
  fit-shape        recover an occupancy grid from rendered views
  gen-grasps       seed grasp search + perturbation dataset (grasps.jsonl)
  train-predictor  fit an outcome MLP over scene datasets
  plan-grasp       guided grasp search on one scene, trace to JSON Lines
  eval             planning success rates across scenes, CSV output

run `graspgeo <command> --help` to list that command's keys and defaults.
"""


def _command_help(command: str) -> str:
    schema = SCHEMAS[command]()
    lines = [f"usage: graspgeo {command} [--config FILE] [--key=value ...]", "keys:"]
    for key, (_, default) in schema.items():
        lines.append(f"  --{key}={RunConfig._format(default) or '<required>'}")
    return "\n".join(lines) + "\n"


def _parse_args(command: str, args: list) -> RunConfig:
    cfg = RunConfig(SCHEMAS[command]())
    overrides = {}
    i = 0
    while i < len(args):
        a = args[i]
        if a in ("-h", "--help"):
            print(_command_help(command), end="")
            raise SystemExit(0)
        if a == "--config":
            if i + 1 >= len(args):
                raise ConfigError("--config needs a path")
            cfg.update(load_kv_file(args[i + 1]))
            i += 2
            continue
        if a.startswith("--"):
            body = a[2:]
            if "=" in body:
                key, value = body.split("=", 1)
                overrides[key] = value
                i += 1
                continue
            if i + 1 < len(args) and not args[i + 1].startswith("--"):
                overrides[body] = args[i + 1]
                i += 2
                continue
        raise ConfigError(f"unrecognized argument {a!r}")
    cfg.update(overrides)
    return cfg


def _require(cfg: RunConfig, key: str) -> str:
    value = cfg[key]
    if not value:
        raise ConfigError(f"{key} is required")
    return value


def _write_resolved(cfg: RunConfig, directory: str, name: str = "config.resolved") -> None:
    os.makedirs(directory, exist_ok=True)
    lines = [l for l in cfg.resolved_text().splitlines()
             if l.split("=", 1)[0] not in PATH_KEYS]
    with open(os.path.join(directory, name), "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def _scene_dirs(parent: str) -> list:
    entries = [e for e in sorted(os.listdir(parent))
               if e.startswith("scene_") and os.path.isdir(os.path.join(parent, e))]
    if not entries:
        raise ConfigError(f"no scene_* directories under {parent!r}")
    return [os.path.join(parent, e) for e in entries]


def _load_dataset(scene_dir: str, seed: int, d_samples: int) -> SceneDataset:
    from .grasp import assign_observation_cameras, read_grasp_records
    sd = load_scene_dir(scene_dir)
    records = read_grasp_records(os.path.join(scene_dir, "grasps.jsonl"))
    records = assign_observation_cameras(records, sd, seed=seed)
    renders = render_views(sd.grid, sd.cameras, d_samples)
    return SceneDataset(sd, records, renders)


# ---------------------------------------------------------------------------
# commands

def cmd_gen_scene(cfg: RunConfig) -> int:
    out = _require(cfg, "out")
    spec = SceneSpec(seed=cfg["seed"], category=cfg["category"],
                     grid_dims=cfg["grid_dims"], image_size=cfg["image_size"],
                     fov_y_deg=cfg["fov_y_deg"], z_near=cfg["z_near"],
                     z_far=cfg["z_far"])
    scene = generate_scene(spec)
    write_scene(scene, out)
    _write_resolved(cfg, out)
    print(f"scene seed={spec.seed} category={scene.category} cameras={len(scene.cameras)}")
    return 0


def cmd_render(cfg: RunConfig) -> int:
    scene_dir = _require(cfg, "scene")
    sd = load_scene_dir(scene_dir)
    for name, cam in sd.cameras.items():
        dmap, mmap = project_exact(sd.grid, ProjectionSpec(cam, d_samples=cfg["d_samples"]))
        suffix = name[len("cam_"):]
        write_depth(dmap, os.path.join(scene_dir, f"depth_{suffix}.dpth"))
        write_mask(mmap, os.path.join(scene_dir, f"mask_{suffix}.pgm"))
    _write_resolved(cfg, scene_dir, "render.config.resolved")
    print(f"rendered {len(sd.cameras)} views")
    return 0


def cmd_fit_shape(cfg: RunConfig) -> int:
    scene_dir = _require(cfg, "scene")
    out = _require(cfg, "out")
    sd = load_scene_dir(scene_dir)
    if cfg["elevations"] == "all":
        names = sd.camera_names()
    else:
        elevations = [int(v) for v in cfg["elevations"].split(",")]
        names = sd.camera_names(elevations)
    from .projection import binarize_mask
    views = []
    for name in names:
        suffix = name[len("cam_"):]
        dpath = os.path.join(scene_dir, f"depth_{suffix}.dpth")
        mpath = os.path.join(scene_dir, f"mask_{suffix}.pgm")
        if os.path.exists(dpath) and os.path.exists(mpath):
            mask = read_mask(mpath)
            if cfg["binarize"]:
                mask = binarize_mask(mask)
            views.append((sd.cameras[name], read_depth(dpath), mask))
    if not views:
        raise ConfigError(f"no rendered (camera, depth, mask) triples in {scene_dir!r}")
    fit_cfg = FitConfig(views, lambda_depth=cfg["lambda_depth"],
                        lambda_mask=cfg["lambda_mask"], iterations=cfg["iterations"],
                        step_size=cfg["step_size"], momentum=cfg["momentum"],
                        logit_param=cfg["logit"], d_samples=cfg["d_samples"],
                        init_value=cfg["init_value"])
    init = uniform_grid(sd.grid.values.shape, sd.grid.origin, sd.grid.cell_size,
                        cfg["init_value"])
    result = fit_shape(fit_cfg, init)
    os.makedirs(out, exist_ok=True)
    write_voxl(result.grid, os.path.join(out, "fit.voxl"))
    with open(os.path.join(out, "fit_loss.csv"), "w", encoding="ascii") as f:
        f.write("iter,loss,loss_depth,loss_mask\n")
        for it, total, depth, mask in result.history:
            f.write(f"{it},{total:.17g},{depth:.17g},{mask:.17g}\n")
    _write_resolved(cfg, out)
    print(f"fit {len(views)} views, final loss {result.history[-1][1]:.6g}")
    return 0


def cmd_gen_grasps(cfg: RunConfig) -> int:
    scene_dir = _require(cfg, "scene")
    sd = load_scene_dir(scene_dir)
    pose = find_seed_grasp(sd.grid, DEFAULT_GRIPPER)
    if pose is None:
        raise GraspGeoError(f"no graspable seed pose found in {scene_dir!r}")
    if cfg["balance"]:
        records = balanced_grasp_set(sd.grid, pose, DEFAULT_GRIPPER,
                                     per_class=cfg["n"] // 2, seed=cfg["seed"],
                                     scene=f"scene_{sd.seed}")
    else:
        records = [seed_record(sd.grid, pose, DEFAULT_GRIPPER, f"scene_{sd.seed}")]
        records += augment_grasps(sd.grid, pose, DEFAULT_GRIPPER, n=cfg["n"],
                                  seed=cfg["seed"], scene=f"scene_{sd.seed}",
                                  sigma_pos=cfg["sigma_pos"],
                                  sigma_rot_deg=cfg["sigma_rot_deg"])
    write_grasp_records(records, os.path.join(scene_dir, "grasps.jsonl"))
    _write_resolved(cfg, scene_dir, "gen-grasps.config.resolved")
    n_success = sum(r.outcome for r in records)
    print(f"wrote {len(records)} records ({n_success} success)")
    return 0


def cmd_train_predictor(cfg: RunConfig) -> int:
    parent = _require(cfg, "scenes")
    out = _require(cfg, "out")
    kind = cfg["kind"]
    if kind not in ("baseline", "geometry"):
        raise ConfigError(f"kind must be baseline or geometry, got {kind!r}")
    if cfg["grid_source"] not in ("truth", "fit"):
        raise ConfigError("grid_source must be truth or fit")
    xs, ys = [], []
    for scene_dir in _scene_dirs(parent):
        ds = _load_dataset(scene_dir, cfg["seed"], cfg["d_samples"])
        grid = None
        if kind == "geometry":
            grid = ds.scene.grid if cfg["grid_source"] == "truth" else \
                fitted_grid(ds, iterations=cfg["fit_iterations"], d_samples=cfg["d_samples"])
        x, y = feature_matrix(ds, kind, grid)
        xs.append(x)
        ys.append(y)
    features = np.vstack(xs)
    labels = np.concatenate(ys)
    model, losses = train(features, labels, epochs=cfg["epochs"], lr=cfg["lr"],
                          seed=cfg["seed"])
    os.makedirs(out, exist_ok=True)
    write_mlp(model, os.path.join(out, "model.mlp"))
    with open(os.path.join(out, "train_loss.csv"), "w", encoding="ascii") as f:
        f.write("epoch,loss\n")
        for e, l in enumerate(losses):
            f.write(f"{e},{l:.17g}\n")
    _write_resolved(cfg, out)
    print(f"trained {kind} on {labels.size} records, final loss {losses[-1]:.6g}")
    return 0


def _make_predictor(name: str, cfg: RunConfig, model_key: str = "model"):
    if name == "oracle":
        return oracle_predictor(DEFAULT_GRIPPER)
    if name == "constant":
        return constant_predictor(0.5)
    if name in ("baseline", "geometry"):
        path = _require(cfg, model_key)
        return mlp_predictor(read_mlp(path), name, DEFAULT_GRIPPER)
    raise ConfigError(f"unknown predictor {name!r}")


def cmd_plan_grasp(cfg: RunConfig) -> int:
    import json

    scene_dir = _require(cfg, "scene")
    out = _require(cfg, "out")
    sd = load_scene_dir(scene_dir)
    predictor = _make_predictor(cfg["predictor"], cfg)
    seed_pose = find_seed_grasp(sd.grid, DEFAULT_GRIPPER)
    if seed_pose is None:
        raise GraspGeoError(f"no graspable seed pose found in {scene_dir!r}")
    start = find_failing_start(sd.grid, seed_pose, cfg["seed"], 0, 0, DEFAULT_GRIPPER)

    train_names = sd.camera_names(TRAIN_ELEVATIONS)
    cam_name = train_names[cfg["seed"] % len(train_names)]
    cam = sd.cameras[cam_name]
    dmap, mmap = project_exact(sd.grid, ProjectionSpec(cam, d_samples=cfg["d_samples"]))

    plan_cfg = PlanConfig(predictor=predictor, oracle=oracle_handle(DEFAULT_GRIPPER),
                          max_steps=cfg["max_steps"], directions=cfg["directions"],
                          sigma_pos=cfg["sigma_pos"], sigma_rot_deg=cfg["sigma_rot_deg"],
                          seed=cfg["seed"], strategy=cfg["strategy"],
                          require_improvement=cfg["require_improvement"])
    trace = plan(sd.grid, (dmap, mmap, cam), start, plan_cfg)

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "trace.jsonl"), "w", encoding="ascii") as f:
        for s in trace.steps:
            row = {"step": s.step,
                   "px": float(s.pose.position[0]), "py": float(s.pose.position[1]),
                   "pz": float(s.pose.position[2]),
                   "qx": float(s.pose.quat[0]), "qy": float(s.pose.quat[1]),
                   "qz": float(s.pose.quat[2]), "qw": float(s.pose.quat[3]),
                   "score": s.score, "outcome": s.outcome.value}
            f.write(json.dumps(row, separators=(",", ":")) + "\n")
    _write_resolved(cfg, out)
    print(f"status={trace.status} steps={trace.steps[-1].step} "
          f"final_outcome={trace.steps[-1].outcome.value}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    parent = _require(cfg, "scenes")
    out = _require(cfg, "out")
    names = [n.strip() for n in cfg["predictors"].split(",") if n.strip()]
    if not names:
        raise ConfigError("predictors list is empty")
    scenes = [load_scene_dir(d) for d in _scene_dirs(parent)]
    rows = []
    for name in names:
        model_key = {"baseline": "model_baseline", "geometry": "model_geometry"}.get(name, "model")
        predictor = _make_predictor(name, cfg, model_key)
        plan_cfg = PlanConfig(predictor=None, oracle=oracle_handle(DEFAULT_GRIPPER),
                              max_steps=cfg["max_steps"], directions=cfg["directions"],
                              sigma_pos=cfg["sigma_pos"],
                              sigma_rot_deg=cfg["sigma_rot_deg"], seed=cfg["seed"])
        result = eval_planning(scenes, predictor, plan_cfg, repeats=cfg["repeats"],
                               d_samples=cfg["d_samples"])
        rows.append(("all", name, result.success_rate, len(result.runs)))
        counts = {}
        for r in result.runs:
            counts.setdefault(r.category, []).append(r.status == "success")
        for cat in sorted(counts):
            vals = counts[cat]
            rows.append((cat, name, sum(vals) / len(vals), len(vals)))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "eval.csv"), "w", encoding="ascii") as f:
        f.write("category,method,success_rate,runs\n")
        for cat, method, rate, n_runs in rows:
            f.write(f"{cat},{method},{rate:.6f},{n_runs}\n")
    _write_resolved(cfg, out)
    for cat, method, rate, n_runs in rows:
        if cat == "all":
            print(f"{method}: success_rate={rate:.4f} runs={n_runs}")
    return 0


COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "render": cmd_render,
    "fit-shape": cmd_fit_shape,
    "gen-grasps": cmd_gen_grasps,
    "train-predictor": cmd_train_predictor,
    "plan-grasp": cmd_plan_grasp,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE, end="")
        return 0
    command, args = argv[0], argv[1:]
    if command not in COMMANDS:
        print(f"error: ConfigError: unknown command {command!r}", file=sys.stderr)
        return 1
    try:
        cfg = _parse_args(command, args)
        return COMMANDS[command](cfg)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (GraspGeoError, ValueError, OSError) as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
