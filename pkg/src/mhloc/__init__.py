"""Multi-hypothesis Monte Carlo localization on 2D occupancy grids."""

from .geometry import PoseEstimate, TimedTransformBuffer, Transform2D, weighted_mean_cov
from .gridmap import GridPyramid, OccupancyGrid, beam_error, build_pyramid, coarsen, load_map
from .matcher import MatchCandidate, MatcherParams, cascade_match, score_pose
from .metrics import ErrorSeries, recovery_time, trajectory_error, uncertainty
from .multihyp import (
    Hypothesis,
    HypothesisSet,
    LocalizerConfig,
    MultiHypParams,
    RunResult,
    run_replay,
)
from .particle_filter import (
    LaserScan,
    MotionNoiseParams,
    Particle,
    ParticleSet,
    SensorModelParams,
)
from .sim import ScenarioScript, SensorSpec, scan_raycast, simulate

__version__ = "0.1.0"

__all__ = [
    "Transform2D",
    "TimedTransformBuffer",
    "PoseEstimate",
    "weighted_mean_cov",
    "OccupancyGrid",
    "GridPyramid",
    "load_map",
    "coarsen",
    "build_pyramid",
    "beam_error",
    "Particle",
    "ParticleSet",
    "LaserScan",
    "MotionNoiseParams",
    "SensorModelParams",
    "MatcherParams",
    "MatchCandidate",
    "score_pose",
    "cascade_match",
    "Hypothesis",
    "HypothesisSet",
    "MultiHypParams",
    "LocalizerConfig",
    "RunResult",
    "run_replay",
    "SensorSpec",
    "ScenarioScript",
    "scan_raycast",
    "simulate",
    "ErrorSeries",
    "uncertainty",
    "trajectory_error",
    "recovery_time",
    "__version__",
]
