"""Optimization-based skinned motion retargeting."""

from .estimator import MotionRetargeter
from .exceptions import (
    ContractError,
    DegenerateError,
    DivergenceError,
    NumericError,
    ParseError,
    RetargetError,
    ShapeError,
)
from .metrics import MetricsReport, curvature, evaluate_metrics, local_mse, mse, penetration_rate
from .optimizer import OptimizerConfig, RetargetReport, optimize_sequence
from .proximity import ProximityIndex, brute_force_nearest, signed_depth
from .semantic_loss import PRESETS, LossWeights, total_loss
from .skeleton import Motion, Skeleton, forward_kinematics, joint_positions
from .skinning import SkinnedCharacter, lbs_deform, sample_points, segment_limbs
from .spatial_loss import limb_penetration_loss
from .temporal_loss import motion_matrix, temporal_consistency_loss

__version__ = "0.1.0"
