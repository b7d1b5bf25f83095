"""Dynamic interactive 3D segmentation at desk scale."""

from .dynamic import DynamicConfig, ReplayBuffer, evaluate_protocol, predict_mask
from .guidance import GuidanceConfig, propose_slices, residual_map
from .interactive import (
    InteractiveConfig,
    OracleUser,
    ThresholdConfig,
    dynamic_interactive_train,
    interactive_learning,
    label_until_threshold,
)
from .losses import LossConfig, TrainSample, confidence_weights, smooth_target
from .network import ConvNet3D, SegmenterSpec
from .phantom import PhantomConfig, PhantomStream, phantom
from .proxy import incremental_update, merge_proxies, propagate_plane
from .registration import RegistrationConfig, Transform2D, register
from .volume import BinaryMask, ProbabilityMap, SliceSet, Volume, dice, labor_cost

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "ConvNet3D",
    "DynamicConfig",
    "GuidanceConfig",
    "InteractiveConfig",
    "LossConfig",
    "OracleUser",
    "PhantomConfig",
    "PhantomStream",
    "ProbabilityMap",
    "RegistrationConfig",
    "ReplayBuffer",
    "SegmenterSpec",
    "SliceSet",
    "ThresholdConfig",
    "Transform2D",
    "TrainSample",
    "Volume",
    "confidence_weights",
    "dice",
    "dynamic_interactive_train",
    "evaluate_protocol",
    "incremental_update",
    "interactive_learning",
    "labor_cost",
    "label_until_threshold",
    "merge_proxies",
    "phantom",
    "predict_mask",
    "propagate_plane",
    "propose_slices",
    "register",
    "residual_map",
    "smooth_target",
    "__version__",
]
