"""Global numerical tolerances shared by every module."""

from dataclasses import dataclass


@dataclass
class Numerics:
    #: Hermiticity / unitarity check tolerance (max-norm).
    check_tol: float = 1e-10
    #: Threshold under which an a-priori robustness criterion "fires".
    criterion_tol: float = 1e-10
    #: Default number of piecewise-constant steps used to sample smooth pulses.
    sampling_steps: int = 1000
    #: Largest Hilbert-space dimension accepted by the motional simulation.
    max_motional_dim: int = 4096


NUMERICS = Numerics()
