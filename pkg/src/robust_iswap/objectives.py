"""
Fidelity, robustness and cost of a pulse, and the a-priori criteria that
decide whether first-order robustness is achievable at all.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .config import NUMERICS
from .hamiltonians import (ControlLayout, exchange_hamiltonian, first_order_hamiltonian,
                           single_excitation_projector, swap_operator)
from .operators import InvalidHamiltonianError, expm_skew_hermitian, is_hermitian
from .propagation import (first_order_states, pulse_hamiltonians,
                          step_propagators, step_spectra)
from .pulses import FrameAngles, Pulse

__all__ = [
    "CostBreakdown", "CriteriaReport", "iswap", "single_qubit_rotation",
    "rotation_derivatives", "frame_operator", "bell_fidelity", "robustness",
    "extended_robustness", "cost", "check_criteria", "default_decomposition",
    "robustness_trace_integral",
]


def iswap() -> np.ndarray:
    """Free exchange evolution for ``J t = pi/2``."""
    return expm_skew_hermitian(exchange_hamiltonian(1.0), np.pi / 2)


@dataclass(frozen=True)
class CostBreakdown:
    fidelity: float
    robustness: float
    cost: float

    @classmethod
    def from_parts(cls, fidelity: float, robustness: float) -> "CostBreakdown":
        return cls(float(fidelity), float(robustness), float(1.0 - fidelity + robustness))


def single_qubit_rotation(f, qubit: int = 0) -> np.ndarray:
    """General single-qubit rotation ``R(theta, varphi, lambda)``.

    ``e^{i(varphi+lambda)/2} Rz(varphi) Ry(theta) Rz(lambda)``, i.e.
    ``[[cos, -e^{i lambda} sin], [e^{i varphi} sin, e^{i(varphi+lambda)} cos]]``
    with half-angle ``theta/2``. ``f`` is a :class:`FrameAngles` (``qubit``
    selects the triple, falling back to the shared one) or a bare triple.
    """
    if isinstance(f, FrameAngles):
        theta, phi, lam = f.angles[min(qubit, f.n_frames - 1)]
    else:
        theta, phi, lam = f
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s],
                     [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]])


def rotation_derivatives(triple) -> np.ndarray:
    """Partial derivatives of the rotation w.r.t. ``(theta, varphi, lambda)``, shape (3, 2, 2)."""
    theta, phi, lam = triple
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    el, ep, epl = np.exp(1j * lam), np.exp(1j * phi), np.exp(1j * (phi + lam))
    d_theta = 0.5 * np.array([[-s, -el * c], [ep * c, -epl * s]])
    d_phi = np.array([[0, 0], [1j * ep * s, 1j * epl * c]])
    d_lam = np.array([[0, -1j * el * s], [0, 1j * epl * c]])
    return np.array([d_theta, d_phi, d_lam])


def frame_operator(frames: FrameAngles) -> np.ndarray:
    """``R1 (x) R2``; a single shared triple gives ``R (x) R``."""
    return np.kron(single_qubit_rotation(frames, 0), single_qubit_rotation(frames, 1))


def bell_fidelity(final_states, frames: FrameAngles, target: Optional[np.ndarray] = None) -> float:
    """Trace-overlap fidelity of four evolved basis states against a framed target.

    ``final_states`` are the images of ``|00>, |01>, |10>, |11>`` (a list of
    kets or the columns of a 4x4 matrix). Returns
    ``|sum_q <psi_q | (R1 (x) R2) target | q>|^2 / 16``.
    """
    u = _columns(final_states)
    if u.shape[1] != 4:
        raise ValueError(f"fidelity needs the four basis-state images, got {u.shape[1]}")
    target = iswap() if target is None else np.asarray(target, dtype=complex)
    overlap = np.trace(u.conj().T @ frame_operator(frames) @ target)
    return float(min(1.0, abs(overlap) ** 2 / 16.0))


def _columns(states) -> np.ndarray:
    if isinstance(states, np.ndarray) and states.ndim == 2:
        return states.astype(complex)
    return np.array([np.asarray(s, dtype=complex) for s in states]).T


def robustness(first_states) -> float:
    """Sum of squared norms of the first-order states."""
    return float(sum(np.vdot(s, s).real for s in (np.asarray(v) for v in first_states)))


def extended_robustness(zeroth, first, alpha: float) -> float:
    """``sum_q || psi1_q - i alpha psi0_q ||^2``."""
    if len(zeroth) != len(first):
        raise ValueError("zeroth and first state lists differ in length")
    return float(sum(np.linalg.norm(np.asarray(f) - 1j * alpha * np.asarray(z)) ** 2
                     for z, f in zip(zeroth, first)))


def cost(pulse: Pulse, layout: Optional[ControlLayout] = None, target: Optional[np.ndarray] = None,
         h1=None, steps: Optional[int] = None) -> CostBreakdown:
    """``C = 1 - F + R`` for ``pulse`` with its stored frame angles."""
    states = first_order_states(pulse, layout, h1=h1, steps=steps)
    f = bell_fidelity([s.zeroth for s in states], pulse.frames, target)
    r = robustness([s.first for s in states])
    return CostBreakdown.from_parts(f, r)


# --- robustness criteria --------------------------------------------------------

@dataclass(frozen=True)
class CriteriaReport:
    """Evidence for the three impossibility criteria.

    A criterion *fires* (first-order robustness impossible) when its evidence
    is below ``tolerance``.
    """

    commutator_max: float
    h1_min_eigenvalue: float
    decomposition_residual: Optional[float]
    p_min_eigenvalue: Optional[float]
    c_hermiticity_residual: Optional[float]
    c_commutator_max: Optional[float]
    tolerance: float
    samples: int

    @property
    def commuting_fires(self) -> bool:
        return self.commutator_max < self.tolerance

    @property
    def psd_fires(self) -> bool:
        return self.h1_min_eigenvalue >= -self.tolerance

    @property
    def combination_fires(self) -> bool:
        if self.decomposition_residual is None:
            return False
        return (self.decomposition_residual < self.tolerance
                and self.p_min_eigenvalue >= -self.tolerance
                and self.c_hermiticity_residual < self.tolerance
                and self.c_commutator_max < self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdicts"] = {
            "commuting": self.commuting_fires,
            "positive_semidefinite": self.psd_fires,
            "commuting_times_positive": self.combination_fires,
        }
        d["robustness_impossible"] = self.commuting_fires or self.psd_fires or self.combination_fires
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _max_abs(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


def check_criteria(h0_samples: Sequence, h1, candidate_decomposition=None,
                   tolerance: Optional[float] = None) -> CriteriaReport:
    """Evaluate the three impossibility criteria on sampled ``H0(t)``.

    ``candidate_decomposition`` is an optional ``(P, C)`` with the proposal
    ``H1 = P C``, ``P`` positive semi-definite and ``C`` Hermitian and
    commuting with every sample.
    """
    h1 = np.asarray(h1, dtype=complex)
    if not is_hermitian(h1):
        raise InvalidHamiltonianError("noise operator must be Hermitian")
    tol = NUMERICS.criterion_tol if tolerance is None else tolerance
    samples = [np.asarray(h, dtype=complex) for h in h0_samples]
    comm = max((_max_abs(h1 @ h - h @ h1) for h in samples), default=0.0)
    h1_min = float(np.linalg.eigvalsh(h1).min())
    dec_res = p_min = c_herm = c_comm = None
    if candidate_decomposition is not None:
        p, c = (np.asarray(m, dtype=complex) for m in candidate_decomposition)
        dec_res = _max_abs(p @ c - h1)
        p_min = float(np.linalg.eigvalsh(0.5 * (p + p.conj().T)).min())
        p_asym = _max_abs(p - p.conj().T)
        if p_asym > tol:  # a non-Hermitian P cannot be PSD
            p_min = min(p_min, -p_asym)
        c_herm = _max_abs(c - c.conj().T)
        c_comm = max((_max_abs(c @ h - h @ c) for h in samples), default=0.0)
    return CriteriaReport(comm, h1_min, dec_res, p_min, c_herm, c_comm, tol, len(samples))


def default_decomposition():
    """``(P, C) = (single-excitation projector, SWAP)`` for exchange noise."""
    return single_excitation_projector(), swap_operator()


def robustness_trace_integral(pulse: Pulse, layout: Optional[ControlLayout] = None, h1=None,
                              steps: Optional[int] = None, quad_points: int = 6) -> float:
    """``int_0^T int_0^T Tr{H1 U(t', t) H1 U(t, t')} dt dt'`` by quadrature.

    Within each constant step the interaction-picture operator
    ``U(0,t)^dag H1 U(0,t)`` is sampled at ``quad_points`` Gauss-Legendre
    nodes; the double integral then equals ``Tr(A^dag A)`` with ``A`` the
    single integral of that operator.
    """
    if layout is not None and layout != pulse.layout:
        raise ValueError("layout does not match the pulse")
    h1 = first_order_hamiltonian() if h1 is None else np.asarray(h1, dtype=complex)
    if pulse.duration == 0:
        return 0.0
    h, grid = pulse_hamiltonians(pulse, 1.0, steps)
    spec = step_spectra(h, grid.dt)
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights * grid.dt
    acc = np.zeros((4, 4), dtype=complex)
    u_start = np.eye(4, dtype=complex)
    for lam, v, u_step in zip(spec.evals, spec.evecs, step_propagators(spec)):
        for s, w in zip(nodes, weights):
            u_t = (v * np.exp(-1j * lam * s * grid.dt)) @ v.conj().T @ u_start
            acc += w * (u_t.conj().T @ h1 @ u_t)
        u_start = u_step @ u_start
    return float(np.trace(acc.conj().T @ acc).real)
