"""Robust iSWAP pulse synthesis for exchange-coupled qubits.

Units: ``hbar = 1`` and the exchange coupling ``J = 1``, so times are ``J*T``.
"""

from .hamiltonians import ControlLayout, ExchangeParams, LayoutKind, MotionalModel
from .objectives import CostBreakdown, cost, iswap
from .optimize import (OptimizationConfig, OptimizationResult, bell_state_optimize,
                       chebyshev_optimize, critical_time_scan, grape_optimize)
from .pulses import FrameAngles, Pulse, read_pulse, write_pulse

__all__ = [
    "ControlLayout", "ExchangeParams", "LayoutKind", "MotionalModel", "CostBreakdown",
    "cost", "iswap", "OptimizationConfig", "OptimizationResult", "bell_state_optimize",
    "chebyshev_optimize", "critical_time_scan", "grape_optimize", "FrameAngles", "Pulse",
    "read_pulse", "write_pulse",
]

__version__ = "0.1.0"
