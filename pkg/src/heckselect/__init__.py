"""Maximum-likelihood fitting of sample-selection models by EM.

Two error laws are supported: bivariate normal (SLn) and bivariate
Student-t (SLt).  The main entry point is :func:`fit`.
"""

from .diagnostics import Envelope, ResidualSet, martingale_residuals, simulated_envelope
from .em import EStepRecords, FitOptions, FitResult, cml_step_nu, estep, fit, param_names
from .exceptions import (
    CollinearityError,
    DegenerateTruncationError,
    DomainError,
    HeckselectError,
    MomentUndefinedError,
    NumericalUnderflowError,
    SeparationError,
)
from .inference import empirical_info, information_criteria, standard_errors
from .model import Dataset, SlParams, TransformedParams, loglik_sln, loglik_slt
from .simgen import DgpConfig, calibrate_intercept, generate, mc_study
from .two_step import heckman_two_step, probit_fit

__version__ = "0.1.0"

__all__ = [
    "CollinearityError", "Dataset", "DegenerateTruncationError", "DgpConfig", "DomainError",
    "EStepRecords", "Envelope", "FitOptions", "FitResult", "HeckselectError",
    "MomentUndefinedError", "NumericalUnderflowError", "ResidualSet", "SeparationError",
    "SlParams", "TransformedParams", "calibrate_intercept", "cml_step_nu", "empirical_info",
    "estep", "fit", "generate", "heckman_two_step", "information_criteria", "loglik_sln",
    "loglik_slt", "martingale_residuals", "mc_study", "param_names", "probit_fit",
    "simulated_envelope",
    "standard_errors",
]
