"""Finite-key analysis and simulation for reference-frame-independent QKD."""

__version__ = "0.1.0"

from .channel import ChannelPoint, expected_counts, gain_wcs, pair_statistics, yield_n
from .decoy import EventClass, SiftedCounts, photon_number_bounds
from .montecarlo import DriftSchedule, RunSpec, run
from .optimizer import OptimizationSpec, optimize, sweep
from .params import (
    APD,
    SNSPD,
    DeviceParams,
    InfeasibleDecoyError,
    ProtocolParams,
    SecurityParams,
    epsilon_total,
)
from .security import KeyRateReport, analyze

__all__ = [
    "APD", "SNSPD", "ChannelPoint", "DeviceParams", "DriftSchedule", "EventClass",
    "InfeasibleDecoyError", "KeyRateReport", "OptimizationSpec", "ProtocolParams", "RunSpec",
    "SecurityParams", "SiftedCounts", "analyze", "epsilon_total", "expected_counts",
    "gain_wcs", "optimize", "pair_statistics", "photon_number_bounds", "run", "sweep",
    "yield_n",
]
