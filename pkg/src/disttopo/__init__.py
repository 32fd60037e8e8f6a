"""Distance-based camera network topology inference for person re-identification."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DistTopoError  # noqa: E402
from .evaluate import EvalReport, evaluate  # noqa: E402
from .geometry import CameraModel, back_project_ground, measure_height, project  # noqa: E402
from .pipeline import PipelineConfig, run_pipeline  # noqa: E402
from .sim import GroundTruth, WorldConfig, generate_world  # noqa: E402
from .tracklets import Tracklet  # noqa: E402

__all__ = [
    "CameraModel",
    "ConfigError",
    "DataError",
    "DistTopoError",
    "EvalReport",
    "GroundTruth",
    "PipelineConfig",
    "Tracklet",
    "WorldConfig",
    "back_project_ground",
    "evaluate",
    "generate_world",
    "measure_height",
    "project",
    "run_pipeline",
]
