"""Skeleton-based intention recognition for pedestrians and cyclists.

The pipeline turns per-frame 2-D keypoint detections into windowed
geometric features, classifies them with a random forest, and evaluates
decisions against time-to-event annotations.  See the cli module for
the end-to-end command line and kernels for the compiled/NumPy backend
split.
"""

from .errors import ContractError, DegenerateError
from .features import (
    FeatureVector,
    all_feature_names,
    feature_name,
    frame_features,
    layout_for,
    parse_feature_name,
    window_features,
)
from .forest import (
    DecisionForest,
    ForestParams,
    classify,
    grid_search_cv,
    grid_search_holdout,
    predict_proba,
    train_forest,
)
from .perturb import NoiseSpec, bbox_fallback_noise, keypoint_noise
from .persist import load_model, save_model
from .skeleton import (
    CYCLIST_SCHEMA,
    PEDESTRIAN_SCHEMA,
    KeypointSchema,
    LabeledSequence,
    SkeletonFrame,
    schema_for,
    validate_frame,
    window_slices,
)
from .synth import SynthSpec, generate_sequence
from .tracking import Detection, Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DegenerateError",
    "FeatureVector",
    "all_feature_names",
    "feature_name",
    "frame_features",
    "layout_for",
    "parse_feature_name",
    "window_features",
    "DecisionForest",
    "ForestParams",
    "classify",
    "grid_search_cv",
    "grid_search_holdout",
    "predict_proba",
    "train_forest",
    "NoiseSpec",
    "bbox_fallback_noise",
    "keypoint_noise",
    "load_model",
    "save_model",
    "CYCLIST_SCHEMA",
    "PEDESTRIAN_SCHEMA",
    "KeypointSchema",
    "LabeledSequence",
    "SkeletonFrame",
    "schema_for",
    "validate_frame",
    "window_slices",
    "SynthSpec",
    "generate_sequence",
    "Detection",
    "Tracker",
    "TrackerConfig",
    "__version__",
]
