"""Hand pose and mesh estimation with a from-scratch differentiable core.

The package takes a cropped RGB hand image and predicts 2-D keypoints,
3-D joints, and a dense vertex mesh, all through a small tensor engine
with tape-based reverse-mode differentiation.  Training, evaluation
(Procrustes-aligned errors, F-scores), benchmarking, and dataset
tooling are available both as a library and through the ``handmesh``
command line.
"""

from .autodiff import Adam, Tape, Tensor, backward
from .config import (
    DEFAULT_CONFIG_PATH,
    FULL_CONFIG_PATH,
    RunConfig,
    build_regressor,
    load_config,
)
from .dataio import (
    CameraIntrinsics,
    HandSample,
    export_obj,
    ingest_freihand,
    load_manifest,
    make_synthetic,
    project_points,
    write_manifest,
)
from .errors import (
    AssetError,
    ConfigError,
    ContractError,
    DataError,
    HandMeshError,
    ShapeError,
    TrainingDiverged,
)
from .estimator import HandMeshEstimator
from .losses import LossWeights, l1_set_loss, total_loss
from .mesh import JointRegressor, load_regressor, synthetic_regressor
from .metrics import (
    Alignment,
    MetricsReport,
    apply_alignment,
    bench_fps,
    evaluate,
    fscore,
    pa_error,
    umeyama_align,
)
from .model import HandMeshNet, ModelConfig
from .train import TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Alignment",
    "AssetError",
    "CameraIntrinsics",
    "ConfigError",
    "ContractError",
    "DEFAULT_CONFIG_PATH",
    "DataError",
    "FULL_CONFIG_PATH",
    "HandMeshError",
    "HandMeshEstimator",
    "HandMeshNet",
    "HandSample",
    "JointRegressor",
    "LossWeights",
    "MetricsReport",
    "ModelConfig",
    "RunConfig",
    "ShapeError",
    "Tape",
    "Tensor",
    "TrainResult",
    "TrainingDiverged",
    "apply_alignment",
    "backward",
    "bench_fps",
    "build_regressor",
    "evaluate",
    "export_obj",
    "fscore",
    "ingest_freihand",
    "l1_set_loss",
    "load_config",
    "load_manifest",
    "load_regressor",
    "make_synthetic",
    "pa_error",
    "project_points",
    "synthetic_regressor",
    "total_loss",
    "train",
    "umeyama_align",
    "write_manifest",
]
