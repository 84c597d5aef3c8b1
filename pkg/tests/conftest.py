"""Converged pulses shared by the acceptance and slow tests.

Each fixture runs its optimization once per session; the runs are the
expensive part of the suite (minutes on one core).
"""
import pytest

from robust_iswap.hamiltonians import ControlLayout, LayoutKind
from robust_iswap.optimize import OptimizationConfig, bell_state_optimize, chebyshev_optimize

FULL_LOCAL = ControlLayout(LayoutKind.FULL_LOCAL)
DETUNED = ControlLayout(LayoutKind.DETUNED, delta=2.0)

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def full_local_smooth():
    """Chebyshev M=20, full local control, JT=4.5."""
    return chebyshev_optimize(FULL_LOCAL, 4.5, 20, OptimizationConfig(seed=0))


@pytest.fixture(scope="session")
def detuned_smooth():
    """Chebyshev M=30, global drive plus detuning 2J, JT=9.3."""
    return chebyshev_optimize(DETUNED, 9.3, 30, OptimizationConfig(seed=0), coarse_steps=200)


@pytest.fixture(scope="session")
def bell_pulse():
    """Robust |++> preparation with global drive at JT=4.47."""
    return bell_state_optimize(4.47, OptimizationConfig(seed=0))
