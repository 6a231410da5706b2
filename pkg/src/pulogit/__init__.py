"""Penalized classification from positive-unlabeled data.

Multinomial and ordinal logistic models fit from case-control or
single-training-set PU samples, with proximal-gradient and EM solvers,
simulation utilities, cross-validation, and feasible-region diagnostics.
"""

from .core_math import (
    CaseControlRatios,
    SingleTrainingProbs,
    grad_log_partition,
    hess_log_partition,
    log_partition,
)
from .em import EMConfig, em_fit_mn, em_fit_on
from .errors import (
    DegenerateWarning,
    DimensionMismatch,
    EmptyClassWarning,
    IndexOutOfRange,
    InvalidConfig,
    InvalidPlan,
    InvalidRegion,
    LabelOutOfRange,
    LengthMismatch,
    NonFinite,
    NonNumericCovariate,
    NonPositiveProbability,
    NotIncreasing,
    ParseError,
    PulogitError,
    RejectionStall,
)
from .evaluate import (
    CVPlan,
    ExperimentReport,
    comparison_experiment,
    default_lambda_grid,
    kfold_cv,
    lambda_path,
    misclassification_rate,
    naive_fit_mn,
    naive_fit_on,
    pred_mse,
    rate_regression,
    scaling_experiment,
)
from .io import ModelArtifact, load_covariates, load_dataset, save_dataset
from .models import (
    MultinomialParams,
    OrdinalParams,
    PosteriorWeights,
    PUDataset,
    mn_full_grad,
    mn_full_loss,
    mn_naive_grad,
    mn_naive_loss,
    mn_observed_grad,
    mn_observed_loss,
    mn_posterior,
    mn_predict_proba,
    on_full_grad,
    on_full_loss,
    on_naive_grad,
    on_naive_loss,
    on_observed_grad,
    on_observed_loss,
    on_posterior,
    on_predict_proba,
    ordinal_cutpoints,
    ordinal_reparam,
    predict_label,
)
from .optimizer import (
    FitResult,
    GroupStructure,
    LineSearch,
    SolverConfig,
    group_norm,
    intercept_only_init_mn,
    intercept_only_init_on,
    lambda_max_mn,
    lambda_max_on,
    pgd_fit_mn,
    pgd_fit_on,
    prox_group,
)
from .simulate import (
    SimConfig,
    case_control_sample,
    gen_covariates,
    gen_mn_truth,
    gen_on_truth,
    sample_labels,
    single_training_mask,
    single_training_sample,
)
from .theory_diag import (
    RegionReport,
    TheoryInputs,
    h_mn,
    h_on,
    r0_bound_mn,
    r0_bound_on,
    region_report,
)

__version__ = "0.1.0"

__all__ = [
    "CaseControlRatios",
    "SingleTrainingProbs",
    "log_partition",
    "grad_log_partition",
    "hess_log_partition",
    "EMConfig",
    "em_fit_mn",
    "em_fit_on",
    "PulogitError",
    "DimensionMismatch",
    "LengthMismatch",
    "IndexOutOfRange",
    "NotIncreasing",
    "NonPositiveProbability",
    "NonFinite",
    "InvalidConfig",
    "InvalidRegion",
    "InvalidPlan",
    "RejectionStall",
    "LabelOutOfRange",
    "ParseError",
    "NonNumericCovariate",
    "DegenerateWarning",
    "EmptyClassWarning",
    "CVPlan",
    "ExperimentReport",
    "comparison_experiment",
    "default_lambda_grid",
    "kfold_cv",
    "lambda_path",
    "misclassification_rate",
    "naive_fit_mn",
    "naive_fit_on",
    "pred_mse",
    "rate_regression",
    "scaling_experiment",
    "ModelArtifact",
    "load_covariates",
    "load_dataset",
    "save_dataset",
    "MultinomialParams",
    "OrdinalParams",
    "PUDataset",
    "PosteriorWeights",
    "mn_observed_loss",
    "mn_observed_grad",
    "mn_naive_loss",
    "mn_naive_grad",
    "mn_full_loss",
    "mn_full_grad",
    "mn_posterior",
    "mn_predict_proba",
    "on_observed_loss",
    "on_observed_grad",
    "on_naive_loss",
    "on_naive_grad",
    "on_full_loss",
    "on_full_grad",
    "on_posterior",
    "on_predict_proba",
    "ordinal_reparam",
    "ordinal_cutpoints",
    "predict_label",
    "FitResult",
    "GroupStructure",
    "LineSearch",
    "SolverConfig",
    "group_norm",
    "prox_group",
    "pgd_fit_mn",
    "pgd_fit_on",
    "intercept_only_init_mn",
    "intercept_only_init_on",
    "lambda_max_mn",
    "lambda_max_on",
    "SimConfig",
    "gen_mn_truth",
    "gen_on_truth",
    "gen_covariates",
    "sample_labels",
    "case_control_sample",
    "single_training_mask",
    "single_training_sample",
    "TheoryInputs",
    "RegionReport",
    "h_mn",
    "h_on",
    "r0_bound_mn",
    "r0_bound_on",
    "region_report",
]
