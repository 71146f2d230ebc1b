"""Complier causal effect estimation under one-sided noncompliance."""

from .bootstrap import BootstrapReport, mad_sd, run_bootstrap
from .efficient import (
    CrossFitPlan,
    EfficientDiagnostics,
    efficient_estimate,
    eif_values,
    eif_variance,
    solve_robust,
    solve_tau0_efficient,
    solve_tau1_efficient,
)
from .errors import *  # noqa: F401,F403
from .kernels import KernelSpec, default_bandwidth, kernel_function, kernel_regress
from .learners import (
    ConstantLearner,
    KernelLearner,
    MlpLearner,
    NuisancePredictors,
    OracleLearner,
    ZeroLearner,
    fit_nuisances_kernel,
    fit_nuisances_mlp,
    oracle_nuisances,
)
from .mlp import Mlp, MlpConfig
from .model import (
    CausalEstimate,
    DerivativeMatrices,
    EstimandSpec,
    ObservedSample,
    control_weights,
    u_value,
    validate_sample,
)
from .simple import (
    MarginalProbabilities,
    compute_derivative_matrices,
    estimate_marginals,
    estimate_rho_w,
    influence_values,
    simple_estimate,
    solve_tau0_simple,
    solve_tau1_simple,
    wald_no_covariate,
)
from .simulation import (
    McReport,
    McRow,
    ScenarioSpec,
    compliance,
    generate_dataset,
    irwin_hall_pdf,
    propensity,
    run_monte_carlo,
    true_nuisances,
    true_tau,
)

__version__ = "0.1.0"
