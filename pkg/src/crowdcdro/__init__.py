"""Distributionally robust learning from noisy crowdsourced labels."""

from .actions import (
    ActionCase,
    BinaryActionResult,
    MultiClassActionResult,
    binary_optimal_action,
    concave_margin,
    convex_margin,
    multiclass_optimal_action,
)
from .aggregation import (
    ConfusionModel,
    bayes_posterior,
    dawid_skene_em,
    estimate_confusions,
    majority_vote,
    posterior_matrix,
)
from .core import (
    AnnotationDataset,
    ClippedLogTransform,
    LinearTransform,
    LossTransform,
    RobustLossSpec,
    check_distribution,
    get_transform,
    loss_value,
)
from .dual import (
    EmpiricalRiskResult,
    PerPointDualResult,
    dual_minimum,
    dual_value,
    empirical_robust_risk,
    gamma_one_step,
    inner_sup,
    tv_worst_case,
)
from .estimators import (
    DawidSkeneClassifier,
    MajorityVoteClassifier,
    RobustCrowdClassifier,
    check_annotations,
)
from .nets import Optimizer, SoftmaxNet, load_checkpoint, save_checkpoint
from .pseudo import PseudoLabelSet, likelihood_ratio_assign, select_pseudo_labels
from .simulate import AnnotatorSpec, annotate, annotator_group, make_gaussian_dataset
from .trainer import TrainConfig, TrainResult, run_training, train_on_labels

__version__ = "0.1.0"

__all__ = [
    "ActionCase",
    "AnnotationDataset",
    "AnnotatorSpec",
    "BinaryActionResult",
    "ClippedLogTransform",
    "ConfusionModel",
    "DawidSkeneClassifier",
    "EmpiricalRiskResult",
    "LinearTransform",
    "LossTransform",
    "MajorityVoteClassifier",
    "MultiClassActionResult",
    "Optimizer",
    "PerPointDualResult",
    "PseudoLabelSet",
    "RobustCrowdClassifier",
    "RobustLossSpec",
    "SoftmaxNet",
    "TrainConfig",
    "TrainResult",
    "annotate",
    "annotator_group",
    "bayes_posterior",
    "binary_optimal_action",
    "check_annotations",
    "check_distribution",
    "concave_margin",
    "convex_margin",
    "dawid_skene_em",
    "dual_minimum",
    "dual_value",
    "empirical_robust_risk",
    "estimate_confusions",
    "gamma_one_step",
    "get_transform",
    "inner_sup",
    "likelihood_ratio_assign",
    "load_checkpoint",
    "loss_value",
    "majority_vote",
    "make_gaussian_dataset",
    "multiclass_optimal_action",
    "posterior_matrix",
    "run_training",
    "save_checkpoint",
    "select_pseudo_labels",
    "train_on_labels",
    "tv_worst_case",
]
