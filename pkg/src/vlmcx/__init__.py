"""Variable-length Markov chains with exogenous covariates.

The transition law of a categorical time series is allowed to depend on a
variable stretch of its own past (a context tree) and, within each context,
on lagged covariates through a logistic or multinomial regression.  The
estimator grows the deepest count-supported tree and prunes contexts and
lags with backward likelihood-ratio tests.
"""

from .algorithm import (
    AuditRecord,
    DEFAULT_GAMMA_GRID,
    DEFAULT_S_GRID,
    FitConfig,
    FitReport,
    LeafDiagnostics,
    TuningResult,
    build_maximal_tree,
    fit,
    merge_siblings_test,
    replay_audit,
    select_tuning,
    sequential_beta_prune,
    test_pastmost_beta,
)
from .core import (
    Context,
    ContextTree,
    Dataset,
    ParamBlock,
    ROOT,
    context_label,
    count_occurrences,
)
from .glm import (
    LeafDesign,
    MleResult,
    build_design,
    design_loglik,
    fit_leaf,
    gradient,
    hessian,
    log_likelihood,
    transition_distribution,
    transition_probability,
)
from .simulate import (
    BUILTIN_MODELS,
    EvalMetrics,
    ModelSpec,
    MonteCarloSummary,
    TuningGrid,
    builtin_model,
    compare_trees,
    generate,
    monte_carlo,
)
from .stats import LrtResult, chi2_cdf, chi2_quantile, chi2_sf, lrt
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AuditRecord",
    "BUILTIN_MODELS",
    "Context",
    "ContextTree",
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_S_GRID",
    "Dataset",
    "EvalMetrics",
    "FitConfig",
    "FitReport",
    "LeafDesign",
    "LeafDiagnostics",
    "LrtResult",
    "MleResult",
    "ModelSpec",
    "MonteCarloSummary",
    "ParamBlock",
    "ROOT",
    "TuningGrid",
    "TuningResult",
    "build_design",
    "build_maximal_tree",
    "builtin_model",
    "chi2_cdf",
    "chi2_quantile",
    "chi2_sf",
    "compare_trees",
    "context_label",
    "count_occurrences",
    "design_loglik",
    "errors",
    "fit",
    "fit_leaf",
    "generate",
    "gradient",
    "hessian",
    "log_likelihood",
    "merge_siblings_test",
    "monte_carlo",
    "replay_audit",
    "select_tuning",
    "sequential_beta_prune",
    "test_pastmost_beta",
    "transition_distribution",
    "transition_probability",
]
