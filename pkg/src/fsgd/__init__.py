"""Functional stochastic gradient descent for additive nonparametric regression."""
from .basis import TRIG, BasisFamily
from .errors import CheckpointError, DimensionError, DivergenceError, DomainError, FsgdError
from .estimator import LossGradient, ModelState, Sample, fit_arrays, fit_stream, predict, step
from .lepski import LepskiConfig, select_and_step
from .schedule import Schedule
from .sieve import SieveState, sieve_step

__version__ = "0.1.0"

__all__ = [
    "TRIG", "BasisFamily", "CheckpointError", "DimensionError", "DivergenceError",
    "DomainError", "FsgdError", "LossGradient", "ModelState", "Sample", "fit_arrays",
    "fit_stream", "predict", "step", "LepskiConfig", "select_and_step", "Schedule",
    "SieveState", "sieve_step",
]
