"""Numerics for neutral mean-field delay equations driven by fBm.

Subpackages: ``fbm`` (exact path sampling), ``measure`` (empirical
Wasserstein queries), ``model`` (problem catalog and assumption
validators), ``scheme`` (tamed theta split-step integrator),
``experiments`` (Monte Carlo rate studies), ``cli`` (the ``mvfbm``
command).
"""

from .fbm import (
    FbmPath,
    Hurst,
    TimeGrid,
    fbm_covariance,
    increments,
    phi_kernel,
    sample_fbm_cholesky,
    sample_fbm_fast,
)
from .measure import (
    EmpiricalMeasure,
    MeasureHandle,
    coupling_bound,
    distance_to_dirac0,
    empirical_moment,
    wasserstein_1d,
)
from .model import (
    AssumptionConstants,
    NeutralDelayMvProblem,
    ProblemCatalogEntry,
    builtin_catalog,
    get_problem,
    validate_neutral_contraction,
    validate_one_sided,
    validate_sigma,
)
from .scheme import (
    DivergenceError,
    PicardNonConvergenceError,
    SchemeConfig,
    SimulationOutput,
    coarsen_driver,
    implicit_stage_solve,
    piecewise_constant_interpolant,
    simulate,
    step_explicit,
    step_split,
    tame_drift,
)
from .experiments import (
    ErrorTable,
    ExperimentConfig,
    RateEstimate,
    continuity_modulus_suite,
    fit_rate,
    moment_bound_suite,
    poc_rate_vs_N,
    strong_rate_vs_dt,
)

__version__ = "0.1.0"
