"""graspgeo: grasp-geometry toolkit.

Occupancy-grid depth/mask projection (exact and differentiable), multi-view
weakly supervised shape recovery, an analytic parallel-jaw grasp oracle with
perturbation data generation, pluggable grasp-outcome predictors, and
analysis-by-synthesis grasp planning.
"""

from .backend import KERNEL_BACKEND, available_backends
from .errors import (ConfigError, DegenerateProjectionError, DivergenceError,
                     FormatError, GraspGeoError, GridMismatchError)
from .geometry import (CameraModel, eye_depth_to_ndc, look_at,
                       ndc_depth_to_eye_depth, perspective, read_camera,
                       world_to_ndc, write_camera)
from .grasp import (DEFAULT_GRIPPER, GraspOutcome, GraspPose, GraspRecord,
                    GripperSpec, Scene, SceneSpec, augment_grasps,
                    balance_records, balanced_grasp_set, find_seed_grasp,
                    generate_scene, grasp_oracle, load_scene_dir,
                    read_grasp_records, write_grasp_records, write_scene)
from .planner import (EvalResult, PlanConfig, PlanTrace, constant_predictor,
                      eval_planning, mlp_predictor, oracle_handle,
                      oracle_predictor, plan)
from .predictor import (FeatureVector, MlpModel, evaluate, featurize, predict,
                        read_mlp, train, write_mlp)
from .projection import (DepthMap, LocalViewSpec, MaskMap, ProjectionSpec,
                         SampledVolume, project_exact, project_local,
                         project_soft, read_depth, read_mask, resample_to_ndc,
                         write_depth, write_mask)
from .shapefit import FitConfig, FitResult, fit_shape, shape_loss, uniform_grid
from .voxel import (OccupancyGrid, PrimitiveShape, iou, rasterize_primitive,
                    read_voxl, trilinear_sample, write_voxl)

__version__ = "0.1.0"
