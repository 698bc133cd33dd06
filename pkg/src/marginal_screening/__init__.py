"""Counterexamples to marginal-correlation (sure independence) screening.

Builds sparse linear models over AR(1) or equicorrelated Gaussian predictors
in which truly important variables are marginally uncorrelated, or
under-correlated, with the response, then measures by simulation how often
those variables are dropped by top-k marginal correlation screening.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CovarianceStructure,
    MarginalMoments,
    RegressionModel,
    SingularMatrixError,
    covariance_entry,
    example1_model,
    example2_model,
    marginal_moments,
    solve_ar1_beta,
    solve_equi_beta,
    solve_linear_system,
    spectral_bound,
)
from .sampler import Dataset, RngStream, sample_dataset, sample_predictors  # noqa: E402
from .screening import (  # noqa: E402
    RetentionRule,
    ScreeningResult,
    marginal_correlations,
    resolve_k,
    screen,
    survives,
    two_sample_t,
)
from .harness import (  # noqa: E402
    Custom,
    Example1,
    Example2,
    ExperimentConfig,
    ExperimentReport,
    Fixed,
    Linear,
    Square,
    oracle_failure_probability,
    run_experiment,
    run_replication,
)
