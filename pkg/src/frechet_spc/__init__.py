"""Fréchet-mean monitoring of functional profiles under the shape-invariant model."""

from .curves import SampledCurve, TimeGrid, curve_from_samples, l2_distance, l2_norm
from .errors import (ConfigurationError, ConvergenceError, DomainError, FrechetSPCError,
                     IdentifiabilityError, IncompatibleError, ParseError, ShapeError)
from .ewma import (ChartPoint, ControlLimits, EwmaConfig, EwmaMonitor, EwmaState, init_state,
                   monitor_curve)
from .frechet import FrechetConfig, FrechetMeanResult, ParamBank, estimate_frechet_mean
from .ingest import DailyProfileRecord, ThresholdRule, ingest_csv, who_flag
from .optim import project_amplitude, project_phase
from .sim import (RegisterConfig, RegistrationResult, SimParams, amplitude_closed_form,
                  apply_deformation, invert_deformation, register)

__version__ = "0.1.0"

__all__ = [
    "ChartPoint", "ConfigurationError", "ControlLimits", "ConvergenceError", "DailyProfileRecord",
    "DomainError", "EwmaConfig", "EwmaMonitor", "EwmaState", "FrechetConfig", "FrechetMeanResult",
    "FrechetSPCError", "IdentifiabilityError", "IncompatibleError", "ParamBank", "ParseError",
    "RegisterConfig", "RegistrationResult", "SampledCurve", "ShapeError", "SimParams",
    "ThresholdRule", "TimeGrid", "amplitude_closed_form", "apply_deformation", "curve_from_samples",
    "estimate_frechet_mean", "init_state", "ingest_csv", "invert_deformation", "l2_distance",
    "l2_norm", "monitor_curve", "project_amplitude", "project_phase", "register", "who_flag",
]
