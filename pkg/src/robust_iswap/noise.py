"""
Noise analysis: quasi-static coupling sweeps, closed-form references for
the bare exchange gate, gate simulation with quantized axial motion, and the
quasi-static dephasing of a Ramsey sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.optimize

from .config import NUMERICS
from .hamiltonians import (ControlLayout, MotionalModel, control_hamiltonian,
                           motion_modulated_exchange)
from .objectives import frame_operator, iswap
from .operators import thermal_state
from .propagation import chain_product, pulse_hamiltonians, step_propagators, step_spectra
from .pulses import FrameAngles, Pulse

__all__ = [
    "SweepSpec", "MotionalSimSpec", "default_dj_grid", "native_infidelity_oracle",
    "bell_prep_infidelity_oracle", "overlap_fidelity", "sweep_infidelity",
    "thermal_weights", "motional_propagator", "simulate_with_motion",
    "optimize_frames_with_motion", "ramsey_analytic", "ramsey_monte_carlo",
    "fit_ramsey_decay", "write_csv",
]


def default_dj_grid() -> np.ndarray:
    """81 points on ``[-0.2, 0.2]``."""
    return np.linspace(-0.2, 0.2, 81)


@dataclass(eq=False)
class SweepSpec:
    dj_values: Sequence[float]
    pulse: Pulse
    layout: Optional[ControlLayout] = None
    initial_states: Optional[np.ndarray] = None

    def __post_init__(self):
        self.dj_values = np.asarray(self.dj_values, dtype=float)
        if not np.all(np.isfinite(self.dj_values)):
            raise ValueError("dj values must be finite")
        if self.layout is not None and self.layout != self.pulse.layout:
            raise ValueError("layout does not match the pulse")


@dataclass(eq=False)
class MotionalSimSpec:
    model: MotionalModel
    pulse: Pulse
    layout: Optional[ControlLayout] = None
    frames: Optional[FrameAngles] = None  # overrides the pulse frames when given

    def __post_init__(self):
        if self.layout is not None and self.layout != self.pulse.layout:
            raise ValueError("layout does not match the pulse")


def native_infidelity_oracle(epsilon: float) -> float:
    """``1 - (2 + 2 cos(pi eps / 2))^2 / 16`` for the bare gate at ``J(1+eps)``."""
    return 1.0 - (2.0 + 2.0 * np.cos(np.pi * epsilon / 2.0)) ** 2 / 16.0


def bell_prep_infidelity_oracle(epsilon: float) -> float:
    """``1 - cos^2(pi eps / 4)`` for preparing the evolved ``|++>`` with the bare gate."""
    return 1.0 - np.cos(np.pi * epsilon / 4.0) ** 2


def overlap_fidelity(u, g, initial_states=None) -> float:
    """``|Tr(S^dag g^dag u S)|^2 / K^2`` for input states ``S`` (identity by default)."""
    u = np.asarray(u, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if initial_states is None:
        z, k = np.trace(g.conj().T @ u), 4
    else:
        s = np.asarray(initial_states, dtype=complex).reshape(4, -1)
        z, k = np.trace(s.conj().T @ g.conj().T @ u @ s), s.shape[1]
    return float(min(1.0, abs(z) ** 2 / k ** 2))


def sweep_infidelity(spec: SweepSpec, target=None, steps: Optional[int] = None):
    """``[(dj, 1 - F)]`` with the coupling scaled to ``J (1 + dj)``.

    The pulse's frames are kept fixed. With ``spec.initial_states`` set the
    state-preparation fidelity is used instead of the gate fidelity.
    """
    target = iswap() if target is None else np.asarray(target, dtype=complex)
    g = frame_operator(spec.pulse.frames) @ target
    rows = []
    for dj in spec.dj_values:
        if spec.pulse.duration == 0:
            u = np.eye(4, dtype=complex)
        else:
            h, grid = pulse_hamiltonians(spec.pulse, 1.0 + dj, steps)
            u = chain_product(step_propagators(step_spectra(h, grid.dt)))
        rows.append((float(dj), 1.0 - overlap_fidelity(u, g, spec.initial_states)))
    return rows


# --- motion -------------------------------------------------------------------

def thermal_weights(model: MotionalModel) -> np.ndarray:
    """Joint Boltzmann weights of ``|n1, n2>``, flattened in tensor order."""
    rho = np.real(np.diag(thermal_state(model.beta_ratio, model.n_max)))
    w = np.kron(rho, rho)
    return w / w.sum()


def motional_propagator(spec: MotionalSimSpec, j: float = 1.0, steps: Optional[int] = None) -> np.ndarray:
    """Full propagator on qubits (x) motion for the pulse of ``spec``."""
    m = spec.model
    dim = 4 * m.n_max ** 2
    if dim > NUMERICS.max_motional_dim:
        raise ValueError(f"motional Hilbert space dimension {dim} exceeds the cap "
                         f"{NUMERICS.max_motional_dim}")
    pulse = spec.pulse
    if pulse.duration == 0:
        return np.eye(dim, dtype=complex)
    base = motion_modulated_exchange(j, m)
    mot_eye = np.eye(m.n_max ** 2)
    vals = pulse.channel_values(steps)
    dt = pulse.duration / vals.shape[1]
    u = np.eye(dim, dtype=complex)
    cache = {}
    for col in vals.T:
        key = col.tobytes()
        if key not in cache:  # repeated steps (e.g. a constant pulse) share one exponential
            h = base + np.kron(control_hamiltonian(pulse.layout, col), mot_eye)
            lam, v = np.linalg.eigh(h)
            cache = {key: (v * np.exp(-1j * lam * dt)) @ v.conj().T}
        u = cache[key] @ u
    return u


def _motional_fidelity(u_full, g, weights, n_mot):
    u4 = u_full.reshape(4, n_mot, 4, n_mot)
    # x[m, p] = sum_{a,b} conj(g[a, b]) U[a, m, b, p]
    x = np.einsum("ab,ambp->mp", g.conj(), u4)
    return float(np.sum(weights * np.sum(np.abs(x) ** 2, axis=0)) / 16.0)


def simulate_with_motion(spec: MotionalSimSpec, target=None, steps: Optional[int] = None) -> float:
    """Thermally averaged gate infidelity with axial motion.

    ``F = sum_p b_p |sum_q (<g_q| (x) 1) U |q, p>|^2 / 16`` with ``g_q`` the
    framed target columns: coherent over the qubit inputs, incoherent over
    the thermal motional inputs, and indifferent to the final motional state.
    """
    target = iswap() if target is None else np.asarray(target, dtype=complex)
    frames = spec.frames or spec.pulse.frames
    g = frame_operator(frames) @ target
    u = motional_propagator(spec, steps=steps)
    return 1.0 - _motional_fidelity(u, g, thermal_weights(spec.model), spec.model.n_max ** 2)


def optimize_frames_with_motion(spec: MotionalSimSpec, target=None, steps: Optional[int] = None,
                                n_frames: int = 2):
    """Best frame angles for the motional fidelity; returns ``(infidelity, FrameAngles)``.

    Used for the frame-corrected reference curve of the bare gate.
    """
    target = iswap() if target is None else np.asarray(target, dtype=complex)
    u = motional_propagator(spec, steps=steps)
    w = thermal_weights(spec.model)
    n_mot = spec.model.n_max ** 2

    def infid(vec):
        return 1.0 - _motional_fidelity(u, frame_operator(FrameAngles.from_vector(vec)) @ target, w, n_mot)

    start = np.tile(spec.pulse.frames.as_vector()[:3], n_frames)
    res = scipy.optimize.minimize(infid, start, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    best = min(res.fun, infid(start))
    vec = res.x if res.fun <= infid(start) else start
    return float(best), FrameAngles.from_vector(vec)


# --- Ramsey -------------------------------------------------------------------

def ramsey_analytic(j: float, sigma_j: float, t):
    """``E[p11] = (1 - exp(-t^2 sigma^2 / 2) cos(J t)) / 2`` for Gaussian coupling noise."""
    if sigma_j < 0:
        raise ValueError("sigma_j must be non-negative")
    t = np.asarray(t, dtype=float)
    return 0.5 * (1.0 - np.exp(-0.5 * (t * sigma_j) ** 2) * np.cos(j * t))


_MC_BATCH = 4096


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    # Philox is counter based: batch b starts at counter word 2 = b, far from
    # any other batch's range, so batches can be drawn in any order.
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, batch, 0]))


def ramsey_monte_carlo(j: float, sigma_j: float, t_grid, samples: int, seed: int = 0):
    """Shot-averaged ``p11`` with one Gaussian coupling offset per shot.

    Each shot applies the ideal sequence at coupling ``J + dJ``, giving
    ``p11 = (1 - cos((J + dJ) t)) / 2``. Returns ``[(t, mean p11)]``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if sigma_j < 0:
        raise ValueError("sigma_j must be non-negative")
    t = np.asarray(t_grid, dtype=float)
    total = np.zeros_like(t)
    for b, start in enumerate(range(0, samples, _MC_BATCH)):
        n = min(_MC_BATCH, samples - start)
        dj = sigma_j * _batch_rng(seed, b).standard_normal(n)
        total += np.sum(0.5 * (1.0 - np.cos(np.outer(j + dj, t))), axis=0)
    mean = total / samples
    return list(zip(t.tolist(), mean.tolist()))


def fit_ramsey_decay(t, p11, j: float) -> float:
    """Fit ``(1 - exp(-(t/tau)^2) cos(J t)) / 2`` and return the 1/e time ``tau``."""
    t = np.asarray(t, dtype=float)
    p11 = np.asarray(p11, dtype=float)

    def model(tt, tau):
        return 0.5 * (1.0 - np.exp(-(tt / tau) ** 2) * np.cos(j * tt))

    guess = t.max() / 2 if t.max() > 0 else 1.0
    (tau,), _ = scipy.optimize.curve_fit(model, t, p11, p0=[guess], bounds=(1e-12, np.inf))
    return float(abs(tau))


def write_csv(path, header: Sequence[str], rows) -> None:
    """CSV with 17 significant digits per float."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{float(v):.17g}" for v in row])
