"""Simulation of relative-intensity squeezed pulses from four-wave mixing in atomic vapor."""

from .errors import (
    BracketError,
    CalibrationError,
    ConfigError,
    ConvergenceError,
    CoverageError,
    CutoffError,
    DomainError,
    FitError,
    FWMError,
    MatchingError,
    ModelError,
    PhysicalityError,
    PreconditionError,
    SingularityError,
)
from .medium import MediumConfig, TransferFunction, cw_gain, empty_medium, transfer_function
from .gaussian import GaussianState, coherent_input, noise_spectrum

__version__ = "0.1.0"
