"""Hierarchical mixture-of-experts Gaussian process regression.

A full GP over a large data set is approximated by a committee of exact
GP experts fitted to subsets of the data: training maximizes the sum of
the experts' log-marginal likelihoods, predictions multiply the experts'
Gaussians together, and both are embarrassingly parallel.  Interior tree
structure only organizes the computation; it never changes the result.
"""

from .errors import (
    CholeskyError,
    ConfigError,
    DataError,
    DimensionError,
    HgpError,
    NumericalError,
    TaskError,
)
from .executor import Executor, ExecutorConfig, assign_groups
from .expert import (
    Dataset,
    ExpertState,
    GaussianPrediction,
    fit,
    lml_gradient,
    log_marginal_likelihood,
    predict,
    predict_batch,
)
from .kernel import (
    Hyperparameters,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    kernel_matrix_gradients,
    kernel_vector,
)
from .metrics import (
    MetricReport,
    aggregate_lr,
    evaluate_predictions,
    kl_gaussian,
    likelihood_ratio,
    nlpd,
    rmse,
    time_lml_gradient,
)
from .model import (
    TARGET_LATENT,
    TARGET_NOISY,
    CombinedPrediction,
    HgpTree,
    batch_predict,
    build_tree,
    combine_gaussians,
    hgp_lml,
    hgp_lml_gradient,
    hgp_predict,
    objective_eval,
)
from .optimize import TrainConfig, TrainReport, auto_init, train
from .partition import (
    KdRegion,
    PartitionPlan,
    assign_random,
    assign_striped,
    build_kdtree_regions,
    validate_plan,
)
from .synth import sample_dataset, sample_function_exact, sample_function_rff

__version__ = "0.1.0"

__all__ = [
    "CholeskyError",
    "CombinedPrediction",
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "Executor",
    "ExecutorConfig",
    "ExpertState",
    "GaussianPrediction",
    "HgpError",
    "HgpTree",
    "Hyperparameters",
    "KdRegion",
    "MetricReport",
    "NumericalError",
    "PartitionPlan",
    "TARGET_LATENT",
    "TARGET_NOISY",
    "TaskError",
    "TrainConfig",
    "TrainReport",
    "aggregate_lr",
    "assign_groups",
    "assign_random",
    "assign_striped",
    "auto_init",
    "batch_predict",
    "build_kdtree_regions",
    "build_tree",
    "combine_gaussians",
    "evaluate_predictions",
    "fit",
    "hgp_lml",
    "hgp_lml_gradient",
    "hgp_predict",
    "kernel_cross",
    "kernel_eval",
    "kernel_matrix",
    "kernel_matrix_gradients",
    "kernel_vector",
    "kl_gaussian",
    "likelihood_ratio",
    "lml_gradient",
    "log_marginal_likelihood",
    "nlpd",
    "objective_eval",
    "predict",
    "predict_batch",
    "rmse",
    "sample_dataset",
    "sample_function_exact",
    "sample_function_rff",
    "time_lml_gradient",
    "train",
    "validate_plan",
]
