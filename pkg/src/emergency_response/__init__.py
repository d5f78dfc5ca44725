"""Uncertainty-driven emergency detection and response generation.

The detector watches a scalar uncertainty signal and fires when a short
polynomial extrapolation crosses a calibrated limit. The responder then
chooses actions one step at a time by Bayesian optimization of the error
growth rate with a Gaussian process surrogate. A small vehicle simulator and
an experiment harness exercise both on obstacle-avoidance scenarios.
"""

from .acquisition import (
    MAXIMIZE,
    MINIMIZE,
    ActionBounds,
    BetaSchedule,
    OptBudget,
    PenaltyConfig,
    acquisition_value,
    beta_at,
    optimize_acquisition,
    penalize,
)
from .detector import (
    Burr3,
    BurrParams,
    DetectorConfig,
    DetectorState,
    ExtrapolationDetector,
    burr3_cdf,
    burr3_logpdf,
    burr3_quantile,
    calibrate_threshold,
    empirical_quantile,
    fit_burr3,
    push_and_check,
)
from .exceptions import (
    DegenerateDataError,
    EpisodeCompleteError,
    InsufficientDataError,
    NumericalFailureError,
    TerminalStateError,
)
from .gp import GaussianProcess, KernelSpec, fit_gp, kernel_eval, posterior
from .responder import (
    ResponderConfig,
    ResponderState,
    ResponseGenerator,
    begin_response,
    error_rate,
    is_complete,
    reconstruction_error,
    respond_step,
    smooth,
)

__version__ = "0.1.0"

__all__ = [
    "MAXIMIZE", "MINIMIZE", "ActionBounds", "BetaSchedule", "OptBudget", "PenaltyConfig",
    "acquisition_value", "beta_at", "optimize_acquisition", "penalize",
    "Burr3", "BurrParams", "DetectorConfig", "DetectorState", "ExtrapolationDetector",
    "burr3_cdf", "burr3_logpdf", "burr3_quantile", "calibrate_threshold", "empirical_quantile",
    "fit_burr3", "push_and_check",
    "DegenerateDataError", "EpisodeCompleteError", "InsufficientDataError",
    "NumericalFailureError", "TerminalStateError",
    "GaussianProcess", "KernelSpec", "fit_gp", "kernel_eval", "posterior",
    "ResponderConfig", "ResponderState", "ResponseGenerator", "begin_response", "error_rate",
    "is_complete", "reconstruction_error", "respond_step", "smooth",
]
