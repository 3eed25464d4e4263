"""Achievable-rate estimation for simulated coherent fiber-optic links."""

from .constellation import Constellation, Pmf, build_qam, maxwell_boltzmann_pmf, optimize_shaping
from .dsp import DspMode, SymbolBatch, receive
from .errors import (
    ConfigError,
    DegenerateInputError,
    FiberRatesError,
    NumericalDivergenceError,
    UnsupportedFormatError,
)
from .harness import SweepSpec, emit_results, load_config, run_sweep
from .linksim import FieldFrame, LinkConfig, build_wdm_frame, propagate_link
from .rates import RateReport, awgn_mi_oracle, estimate_r_sd

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Constellation",
    "DegenerateInputError",
    "DspMode",
    "FiberRatesError",
    "FieldFrame",
    "LinkConfig",
    "NumericalDivergenceError",
    "Pmf",
    "RateReport",
    "SweepSpec",
    "SymbolBatch",
    "UnsupportedFormatError",
    "awgn_mi_oracle",
    "build_qam",
    "build_wdm_frame",
    "emit_results",
    "estimate_r_sd",
    "load_config",
    "maxwell_boltzmann_pmf",
    "optimize_shaping",
    "propagate_link",
    "receive",
    "run_sweep",
]
