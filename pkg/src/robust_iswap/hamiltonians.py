"""
Hamiltonian builders for two exchange-coupled qubits.

Units are dimensionless with the coupling ``J`` setting the energy scale and
``hbar = 1``; gate durations are therefore quoted as ``J*T``. The qubit
splitting is dropped (rotating frame) except in the Holstein builders.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .operators import (IDENTITY, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y,
                        SIGMA_Z, annihilation, expm_general)

__all__ = [
    "LayoutKind", "ExchangeParams", "ControlLayout", "MotionalModel",
    "exchange_hamiltonian", "first_order_hamiltonian", "swap_operator",
    "single_excitation_projector", "control_hamiltonian", "control_terms",
    "motion_modulated_exchange", "motional_noise_operator",
    "holstein_hamiltonian", "polaron_transform", "polaron_hamiltonian",
    "delta_j_motion_estimate", "delta_j_motrot_estimate", "polaron_residual",
]

I4 = np.eye(4, dtype=complex)
X1, X2 = np.kron(SIGMA_X, IDENTITY), np.kron(IDENTITY, SIGMA_X)
Y1, Y2 = np.kron(SIGMA_Y, IDENTITY), np.kron(IDENTITY, SIGMA_Y)
Z1, Z2 = np.kron(SIGMA_Z, IDENTITY), np.kron(IDENTITY, SIGMA_Z)
_FLIP_FLOP = np.kron(SIGMA_PLUS, SIGMA_MINUS) + np.kron(SIGMA_MINUS, SIGMA_PLUS)
_EXCITED = np.array([[0, 0], [0, 1]], dtype=complex)  # |e><e| = (I - sigma_z)/2


class LayoutKind(str, enum.Enum):
    GLOBAL = "global"
    FULL_LOCAL = "full-local"
    DETUNED = "detuned"


@dataclass(frozen=True)
class ExchangeParams:
    j: float = 1.0

    def __post_init__(self):
        if not self.j > 0:
            raise ValueError("coupling j must be positive")


@dataclass(frozen=True)
class ControlLayout:
    """Which control Hamiltonian family drives the qubits.

    ``delta`` is the constant detuning on qubit 2 (detuned layout only) and
    ``omega_max`` the amplitude bound, both in units of J.
    """

    kind: LayoutKind = LayoutKind.FULL_LOCAL
    delta: float = 0.0
    omega_max: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LayoutKind(self.kind))
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        if not np.isfinite(self.delta):
            raise ValueError("delta must be finite")
        if self.kind is not LayoutKind.DETUNED and self.delta != 0.0:
            raise ValueError("delta is only meaningful for the detuned layout")

    @property
    def channels(self) -> tuple[str, ...]:
        if self.kind is LayoutKind.FULL_LOCAL:
            return ("omega1", "phi1", "omega2", "phi2")
        return ("omega", "phi")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_frames(self) -> int:
        """Number of independent single-qubit frame rotations."""
        return 2 if self.kind is LayoutKind.FULL_LOCAL else 1


@dataclass(frozen=True)
class MotionalModel:
    """Axial trap motion of both molecules.

    ``length_ratio`` is the harmonic length ``sqrt(1/(2 m omega))`` over the
    separation ``R``; ``beta_ratio`` is ``omega / (k_B T)``; ``zeta`` is the
    state-dependent trap displacement in harmonic-length units and
    ``delta_split`` the rotational splitting (both only enter the Holstein
    builders).
    """

    omega_over_j: float = 7.0
    length_ratio: float = 80e-9 / 1.9e-6
    beta_ratio: float = 0.42
    n_max: int = 7
    zeta: float = 0.0
    delta_split: float = 0.0

    def __post_init__(self):
        if not self.omega_over_j > 0:
            raise ValueError("omega_over_j must be positive")
        if self.n_max < 2:
            raise ValueError("n_max must be at least 2")
        if self.length_ratio < 0 or self.zeta < 0:
            raise ValueError("length_ratio and zeta must be non-negative")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (2, 2, self.n_max, self.n_max)


def exchange_hamiltonian(p: ExchangeParams | float = 1.0) -> np.ndarray:
    j = p.j if isinstance(p, ExchangeParams) else float(p)
    return j * _FLIP_FLOP


def first_order_hamiltonian() -> np.ndarray:
    """Derivative of the exchange Hamiltonian with respect to J."""
    return _FLIP_FLOP.copy()


def swap_operator() -> np.ndarray:
    return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def single_excitation_projector() -> np.ndarray:
    return np.diag([0, 1, 1, 0]).astype(complex)


def control_terms(layout: ControlLayout):
    """Return ``(pairs, drift)`` describing the control Hamiltonian.

    ``pairs`` holds one ``(X, Y)`` operator couple per amplitude/phase channel
    pair, so that a channel contributes ``|Omega| (cos(phi) X + sin(phi) Y)``.
    ``drift`` is the constant part (the local detuning).
    """
    if layout.kind is LayoutKind.FULL_LOCAL:
        pairs = [(X1, Y1), (X2, Y2)]
    else:
        pairs = [(X1 + X2, Y1 + Y2)]
    drift = layout.delta * Z2 if layout.kind is LayoutKind.DETUNED else np.zeros((4, 4), complex)
    return pairs, drift


def control_hamiltonian(layout: ControlLayout, controls: Sequence[float]) -> np.ndarray:
    """Control Hamiltonian for one set of channel values.

    ``controls`` follows ``layout.channels``: amplitude then phase for every
    drive, e.g. ``(omega1, phi1, omega2, phi2)`` for the full-local layout.
    """
    controls = np.asarray(controls, dtype=float).ravel()
    if controls.size != layout.n_channels:
        raise ValueError(
            f"{layout.kind.value} layout expects {layout.n_channels} channel values, got {controls.size}")
    pairs, drift = control_terms(layout)
    h = drift.copy()
    for (x, y), (amp, phase) in zip(pairs, controls.reshape(-1, 2)):
        h += amp * (np.cos(phase) * x + np.sin(phase) * y)
    return h


# --- motion ---------------------------------------------------------------

def _ladder_ops(n_max: int):
    a = annihilation(n_max)
    eye = np.eye(n_max, dtype=complex)
    return np.kron(a, eye), np.kron(eye, a), eye


def _trap_energy(m: MotionalModel) -> np.ndarray:
    a1, a2, eye = _ladder_ops(m.n_max)
    n_tot = a1.conj().T @ a1 + a2.conj().T @ a2 + np.eye(m.n_max ** 2)
    return m.omega_over_j * n_tot


def motional_noise_operator(m: MotionalModel) -> np.ndarray:
    """``-3 ((x1 - x2)/R)^2`` on the two-oscillator space."""
    a1, a2, _ = _ladder_ops(m.n_max)
    dx = m.length_ratio * ((a1 + a1.conj().T) - (a2 + a2.conj().T))
    return -3.0 * dx @ dx


def motion_modulated_exchange(p: ExchangeParams | float, m: MotionalModel) -> np.ndarray:
    """Exchange coupling modulated by relative axial motion, plus trap energies.

    Acts on ``(qubit1, qubit2, motion1, motion2)`` with dimension ``4 n_max^2``.
    """
    j = p.j if isinstance(p, ExchangeParams) else float(p)
    mot_eye = np.eye(m.n_max ** 2, dtype=complex)
    coupling = mot_eye + motional_noise_operator(m)
    return j * np.kron(_FLIP_FLOP, coupling) + np.kron(I4, _trap_energy(m))


def holstein_hamiltonian(m: MotionalModel, j: float = 1.0) -> np.ndarray:
    """Trap, rotational splitting, Holstein coupling and exchange terms."""
    a1, a2, _ = _ladder_ops(m.n_max)
    e1 = np.kron(_EXCITED, IDENTITY)
    e2 = np.kron(IDENTITY, _EXCITED)
    h = np.kron(I4, _trap_energy(m))
    h += np.kron(0.5 * m.delta_split * (Z1 + Z2), np.eye(m.n_max ** 2))
    h += -0.5 * m.zeta * m.omega_over_j * (
        np.kron(e1, a1 + a1.conj().T) + np.kron(e2, a2 + a2.conj().T))
    h += j * np.kron(_FLIP_FLOP, np.eye(m.n_max ** 2))
    return h


def polaron_transform(m: MotionalModel) -> np.ndarray:
    """Displacement unitary removing the Holstein coupling.

    Returned ``U`` satisfies ``U a_j U^dag = a_j + (zeta/2) |e><e|_j``.
    """
    a1, a2, _ = _ladder_ops(m.n_max)
    e1 = np.kron(_EXCITED, IDENTITY)
    e2 = np.kron(IDENTITY, _EXCITED)
    gen = 0.5 * m.zeta * (np.kron(e1, a1 - a1.conj().T) + np.kron(e2, a2 - a2.conj().T))
    return expm_general(gen)


def polaron_hamiltonian(m: MotionalModel, j: float = 1.0, cos_sign: float = -1.0) -> np.ndarray:
    """Second-order-in-zeta expansion of the polaron-frame Hamiltonian.

    ``cos_sign`` selects the sign of the ``(p1 - p2)^2`` correction to the
    exchange strength; the exact transform supports ``-1``.
    """
    a1, a2, _ = _ladder_ops(m.n_max)
    dim_mot = m.n_max ** 2
    # dimensionless momenta p = i (a^dag - a) / sqrt(2)
    p1 = 1j * (a1.conj().T - a1) / np.sqrt(2)
    p2 = 1j * (a2.conj().T - a2) / np.sqrt(2)
    dp = p1 - p2
    e_sum = np.kron(_EXCITED, IDENTITY) + np.kron(IDENTITY, _EXCITED)
    h = np.kron(I4, _trap_energy(m))
    h += np.kron(0.5 * m.delta_split * (Z1 + Z2), np.eye(dim_mot))
    h += np.kron(-0.25 * m.zeta ** 2 * m.omega_over_j * e_sum, np.eye(dim_mot))
    strength = np.eye(dim_mot) + cos_sign * 0.25 * m.zeta ** 2 * dp @ dp
    h += j * np.kron(_FLIP_FLOP, strength)
    h += -0.5 * j * (m.zeta / np.sqrt(2)) * np.kron(X1 @ Y2 - Y1 @ X2, dp)
    return h


def delta_j_motion_estimate(m: MotionalModel) -> float:
    """Relative coupling spread from thermal axial motion."""
    if not m.beta_ratio > 0:
        raise ValueError("beta_ratio must be positive")
    return 6.0 * np.sqrt(2.0) * m.length_ratio ** 2 / np.tanh(0.5 * m.beta_ratio)


def delta_j_motrot_estimate(m: MotionalModel) -> float:
    """Relative coupling spread from the motion-rotation (Holstein) coupling."""
    if not m.beta_ratio > 0:
        raise ValueError("beta_ratio must be positive")
    return np.sqrt(2.0) / 4.0 * m.zeta ** 2 / np.tanh(0.5 * m.beta_ratio)


def polaron_residual(m: MotionalModel, j: float = 1.0, cos_sign: float = -1.0,
                     keep: int = 4) -> float:
    """Spectral norm of ``U H U^dag - H_polaron`` on the low ladder block.

    Only motional states with both occupations below ``keep`` enter, away
    from the truncation edge where the finite ladder spoils ``U a U^dag``.
    """
    if not 0 < keep <= m.n_max // 2:
        raise ValueError("keep must lie in 1..n_max//2")
    u = polaron_transform(m)
    diff = u @ holstein_hamiltonian(m, j) @ u.conj().T - polaron_hamiltonian(m, j, cos_sign)
    n = np.arange(m.n_max)
    low = ((n[:, None] < keep) & (n[None, :] < keep)).ravel()
    mask = np.tile(low, 4)
    return float(np.linalg.norm(diff[np.ix_(mask, mask)], 2))
