"""Frame-aware classification of XR network traffic from packet traces."""

from ._backend import BACKEND, compiled_available
from .a2rot import (A2RConfig, ClassificationResult, Evaluation, IterationRecord, StopDecision,
                    StopState, TrainedModel, TrainOutcome, a2r_ot_train, classify, evaluate,
                    evaluate_stop, run_experiment, update_counters)
from .fia import FiaConfig, FiaThresholds, FrameSet, detect, frame_rate
from .forest import Forest, ForestParams, combine, feature_importance, train_forest, warm_start_extend
from .fvr import FEATURE_NAMES, FrameVector, vectorize, vectorize_trace
from .ingest import ColumnMapping, LabeledTrace, load_trace, validate_trace, write_trace
from .metrics import ConfusionMatrix, confusion, metrics_table, per_class_metrics
from .persistence import load_model, save_model
from .segmenter import Segment, holdout_split, segment, split_train_val

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "compiled_available", "A2RConfig", "ClassificationResult", "Evaluation",
    "IterationRecord", "StopDecision", "StopState", "TrainedModel", "TrainOutcome",
    "a2r_ot_train", "classify", "evaluate", "evaluate_stop", "run_experiment",
    "update_counters", "FiaConfig", "FiaThresholds", "FrameSet", "detect", "frame_rate",
    "Forest", "ForestParams", "combine", "feature_importance", "train_forest",
    "warm_start_extend", "FEATURE_NAMES", "FrameVector", "vectorize", "vectorize_trace",
    "ColumnMapping", "LabeledTrace", "load_trace", "validate_trace", "write_trace",
    "ConfusionMatrix", "confusion", "metrics_table", "per_class_metrics", "load_model",
    "save_model", "Segment", "holdout_split", "segment", "split_train_val",
]
