"""Approximate maximum-likelihood regression with an uncertain design matrix.

The likelihood of ``y = G x + eta`` is approximated row by row with the
saddle-point density built from per-entry cumulant generating functions.
"""

from .composite_saddle import (
    SaddleSolution,
    UncertainDesign,
    convolution_oracle_pdf,
    row_cgf,
    row_cgf_dx,
    saddle_density,
    solve_saddle,
    solve_saddle_all,
    t_domain,
)
from .errors import (
    DegenerateVariance,
    DomainError,
    EmptyGroup,
    InvalidOrder,
    LineSearchFailure,
    NoConvergence,
    RankDeficient,
    TlsDegenerate,
    TooManyComponents,
    ZeroTruth,
)
from .estimators import Estimate, FitOptions, aml_fit, ols, tls
from .experiments import GeneratorSpec, TrialRecord, generate_problem, relative_error, run_square_study, run_sweep, summarize
from .likelihood import gaussian_gradient, gaussian_log_likelihood, log_likelihood, log_likelihood_gradient
from .noise_kernels import AdditiveNoise, ElementKernel, additive_eval, kernel_domain, kernel_eval

__version__ = "0.1.0"
