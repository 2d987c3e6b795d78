"""Numerical toolkit for geodesically equivalent metric pairs."""

from .errors import ConfigError, DomainError, PreconditionError, ProfileError, StepFailure
from .metric_core import ChartModel, LCProfile, Profile, lc_generate, raw_model
from .integrals import PhaseState

__all__ = [
    "ChartModel",
    "ConfigError",
    "DomainError",
    "LCProfile",
    "PhaseState",
    "PreconditionError",
    "Profile",
    "ProfileError",
    "StepFailure",
    "lc_generate",
    "raw_model",
]
