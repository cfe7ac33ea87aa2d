"""Adversarially robust Gaussian-process optimization on finite domains.

The package implements the StableOpt max-min acquisition strategy together
with four baselines, exact GP posterior machinery with incremental updates,
perturbation-set abstractions covering norm balls, group partitions and
parameter-uncertainty reductions, synthetic benchmark objectives with
exhaustive worst-case oracles, and a deterministic experiment harness.
"""

from .gp import (
    FactorizationError,
    GPPosterior,
    NegativeVarianceError,
    ObservationSet,
    extend,
    fit_hyperparameters,
    log_marginal_likelihood,
    mean_var,
    mean_var_batch,
    posterior,
)
from .harness import (
    ExperimentConfig,
    Problem,
    ResultSet,
    TraceCheckError,
    build_problem,
    emit_outputs,
    load_config,
    parse_config_text,
    run_experiment,
    run_single,
    trace_run,
)
from .kernels import KernelSpec, cross, evaluate, gram
from .optimizers import (
    ALGORITHMS,
    BASELINES,
    BetaSchedule,
    ConfidenceField,
    RunRecord,
    baseline_step,
    confidence_field,
    eps_regret,
    information_gain,
    report_point,
    run,
    stableopt_step,
    worst_case_gain_bound,
)
from .robust import (
    DistanceSpec,
    FiniteDomain,
    PerturbationSet,
    build_neighborhoods,
    estimation_reduction,
    group_reduction,
    parameter_reduction,
    product_domain,
)
from .testbed import (
    ObjectiveTable,
    RkhsFunctionSpec,
    f_poly,
    poly_grid,
    robust_table,
    running_example_1d,
    sample_rkhs_function,
    two_peaks,
    valley_instance,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BASELINES",
    "BetaSchedule",
    "ConfidenceField",
    "DistanceSpec",
    "ExperimentConfig",
    "FactorizationError",
    "FiniteDomain",
    "GPPosterior",
    "KernelSpec",
    "NegativeVarianceError",
    "ObjectiveTable",
    "ObservationSet",
    "PerturbationSet",
    "Problem",
    "ResultSet",
    "RkhsFunctionSpec",
    "RunRecord",
    "TraceCheckError",
    "baseline_step",
    "build_neighborhoods",
    "build_problem",
    "confidence_field",
    "cross",
    "emit_outputs",
    "eps_regret",
    "estimation_reduction",
    "evaluate",
    "extend",
    "f_poly",
    "fit_hyperparameters",
    "gram",
    "group_reduction",
    "information_gain",
    "load_config",
    "log_marginal_likelihood",
    "mean_var",
    "mean_var_batch",
    "parameter_reduction",
    "parse_config_text",
    "poly_grid",
    "posterior",
    "product_domain",
    "report_point",
    "robust_table",
    "run",
    "run_experiment",
    "run_single",
    "running_example_1d",
    "sample_rkhs_function",
    "stableopt_step",
    "trace_run",
    "two_peaks",
    "valley_instance",
    "worst_case_gain_bound",
]
