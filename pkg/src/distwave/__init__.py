"""Simulated distributed wavelet regression under per-machine bit budgets."""

from .config import ProtocolConfig, load_ini
from .errors import (
    ConfigError,
    DegenerateSpreadError,
    DistwaveError,
    FramingError,
    InfeasibleScheduleError,
    LevelTooDeepError,
    MissingMessageError,
    NormViolationError,
)
from .protocols import build_schedule, replay, run_protocol
from .wavelets import CoeffField, WaveletBasis, make_basis

__version__ = "0.1.0"

__all__ = [
    "CoeffField",
    "ConfigError",
    "DegenerateSpreadError",
    "DistwaveError",
    "FramingError",
    "InfeasibleScheduleError",
    "LevelTooDeepError",
    "MissingMessageError",
    "NormViolationError",
    "ProtocolConfig",
    "WaveletBasis",
    "build_schedule",
    "load_ini",
    "make_basis",
    "replay",
    "run_protocol",
]
