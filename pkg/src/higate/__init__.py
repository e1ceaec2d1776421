"""higate: trace-driven hierarchical-inference offloading toolkit.

Decision modules (confidence thresholds, calibrated thresholds, learned
pre/post gates) evaluated under a per-image cost model combining on-device
inference, offload and misclassification costs.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    ReliabilityBins,
    apply_temperature,
    ece,
    fit_temperature,
    negative_log_likelihood,
    reliability,
)
from .evaluation import (
    ConfusionCounts,
    CostModel,
    EvaluationReport,
    SweepRow,
    ThresholdSweep,
    evaluate,
    f1_score,
    sample_cost,
    sweep_alpha_ratio,
    sweep_beta,
    sweep_threshold,
)
from .learners import (
    ForestModel,
    GateHyper,
    GateModel,
    LinearModel,
    Standardizer,
    fit_standardizer,
    load_gate_model,
    predict_score,
    predict_scores,
    save_gate_model,
    train_linear_svm,
    train_logistic,
    train_random_forest,
)
from .policies import (
    Decision,
    GateBuildResult,
    PolicyFamily,
    PolicySpec,
    build_post_gate,
    build_pre_gate,
    decide,
    decide_batch,
    parse_policy,
)
from .synth import SynthConfig, generate
from .trace import (
    ComplexityLabel,
    Trace,
    TraceFormatError,
    TraceRecord,
    downsample_balance,
    gate_label,
    load_trace,
    save_trace,
    split_trace,
)

__all__ = [
    "CalibrationResult", "ReliabilityBins", "apply_temperature", "ece",
    "fit_temperature", "negative_log_likelihood", "reliability",
    "ConfusionCounts", "CostModel", "EvaluationReport", "SweepRow",
    "ThresholdSweep", "evaluate", "f1_score", "sample_cost",
    "sweep_alpha_ratio", "sweep_beta", "sweep_threshold",
    "ForestModel", "GateHyper", "GateModel", "LinearModel", "Standardizer",
    "fit_standardizer", "load_gate_model", "predict_score", "predict_scores",
    "save_gate_model", "train_linear_svm", "train_logistic", "train_random_forest",
    "Decision", "GateBuildResult", "PolicyFamily", "PolicySpec",
    "build_post_gate", "build_pre_gate", "decide", "decide_batch", "parse_policy",
    "SynthConfig", "generate",
    "ComplexityLabel", "Trace", "TraceFormatError", "TraceRecord",
    "downsample_balance", "gate_label", "load_trace", "save_trace", "split_trace",
    "__version__",
]
