"""
Piecewise-constant evolution of zeroth-order states and their first-order
corrections with respect to a perturbation ``H1``.

For one constant step the stacked pair ``(psi0, psi1)`` evolves with the
exponential of the block generator ``[[-i H, 0], [-i H1, -i H]] dt``. Its
lower-left block is the Frechet derivative of ``exp`` at ``-i H dt`` in the
direction ``-i H1 dt``, which in the eigenbasis of ``H`` is an elementwise
product with first divided differences of ``exp``. Second divided differences
give its derivative with respect to the controls (used by the optimizer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hamiltonians import (ControlLayout, control_terms, exchange_hamiltonian,
                           first_order_hamiltonian)
from .operators import InvalidHamiltonianError, is_hermitian

__all__ = [
    "TimeGrid", "AugmentedState", "StepSpectra", "divided_difference_1",
    "divided_difference_1_imag", "divided_difference_2", "second_dd_table", "step_hamiltonians", "pulse_hamiltonians",
    "step_spectra", "step_propagators", "augmented_steps", "chain_product",
    "evolve_unitary", "propagate_augmented", "first_order_states",
]

# below this node separation the divided differences switch to series
_DD_TOL = 1e-3
_SERIES_TERMS = 6


@dataclass(frozen=True)
class TimeGrid:
    total_time: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("a time grid needs at least one step")
        if not self.total_time >= 0:
            raise ValueError("total time must be non-negative")

    @property
    def dt(self) -> float:
        return self.total_time / self.steps


@dataclass(frozen=True, eq=False)
class AugmentedState:
    zeroth: np.ndarray
    first: np.ndarray


# --- divided differences of exp -------------------------------------------

def _sinhc(d):
    """``sinh(d)/d`` for complex ``d``, exact at ``d = 0``."""
    d = np.asarray(d, dtype=complex)
    small = np.abs(d) < 1e-3
    safe = np.where(small, 1.0, d)
    d2 = d * d
    return np.where(small, 1.0 + d2 / 6.0 + d2 * d2 / 120.0, np.sinh(safe) / safe)


def divided_difference_1(x, y):
    """``exp[x, y] = (e^x - e^y)/(x - y)``, continuous across ``x = y``.

    Uses ``e^m sinh(d)/d`` with ``m`` the midpoint and ``d`` the half gap,
    which has no cancellation.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return np.exp(0.5 * (x + y)) * _sinhc(0.5 * (x - y))


def divided_difference_1_imag(theta_m, theta_n):
    """``exp[-i theta_m, -i theta_n]`` for real angles, via a real sinc."""
    theta_m = np.asarray(theta_m, dtype=float)
    theta_n = np.asarray(theta_n, dtype=float)
    return np.exp(-0.5j * (theta_m + theta_n)) * np.sinc((theta_m - theta_n) / (2.0 * np.pi))


def _complete_homogeneous(u, v, w, k_max):
    """``h_k(u, v, w)`` for ``k = 0..k_max`` via Newton's identities."""
    e1, e2, e3 = u + v + w, u * v + v * w + w * u, u * v * w
    hs = [np.ones_like(u), e1, e1 * e1 - e2]
    for k in range(3, k_max + 1):
        hs.append(e1 * hs[k - 1] - e2 * hs[k - 2] + e3 * hs[k - 3])
    return hs[:k_max + 1]


def divided_difference_2(x, y, z):
    """Second divided difference ``exp[x, y, z]`` (symmetric in its nodes).

    The recursive quotient is taken over the most separated pair of nodes;
    when all three lie within ``1e-3`` of each other a Taylor series around
    their mean is used instead.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=complex) for a in (x, y, z)))
    out = np.empty(x.shape, dtype=complex)
    dxz, dxy, dyz = np.abs(x - z), np.abs(x - y), np.abs(y - z)
    # relabel so that (p, r) is the widest pair and q the remaining node
    use_xy = (dxy >= dxz) & (dxy >= dyz)
    use_yz = (dyz > dxz) & (dyz > dxy)
    p = np.where(use_xy, x, np.where(use_yz, y, x))
    q = np.where(use_xy, z, np.where(use_yz, x, y))
    r = np.where(use_xy, y, z)
    gap = p - r
    wide = np.abs(gap) >= _DD_TOL
    if np.any(wide):
        pw, qw, rw = p[wide], q[wide], r[wide]
        out[wide] = (divided_difference_1(pw, qw) - divided_difference_1(qw, rw)) / gap[wide]
    near = ~wide
    if np.any(near):
        xs, ys, zs = x[near], y[near], z[near]
        c = (xs + ys + zs) / 3.0
        series = np.zeros_like(c)
        fact = 2.0
        for k, h in enumerate(_complete_homogeneous(xs - c, ys - c, zs - c, _SERIES_TERMS)):
            series += h / fact
            fact *= k + 3
        out[near] = np.exp(c) * series
    return out


def second_dd_table(nodes: np.ndarray, f1: Optional[np.ndarray] = None) -> np.ndarray:
    """All ``exp[a_m, a_j, a_n]`` for node vectors ``(..., d)``, shape ``(..., d, d, d)``.

    Reuses the first divided-difference table ``f1`` and only falls back to
    the series on index triples whose nodes are nearly coincident.
    """
    a = np.asarray(nodes, dtype=complex)
    if f1 is None:
        f1 = divided_difference_1(a[..., :, None], a[..., None, :])
    am, aj, an = a[..., :, None, None], a[..., None, :, None], a[..., None, None, :]
    f_mj, f_jn, f_mn = f1[..., :, :, None], f1[..., None, :, :], f1[..., :, None, :]
    d_mn, d_mj, d_jn = am - an, am - aj, aj - an
    g_mn, g_mj, g_jn = np.abs(d_mn), np.abs(d_mj), np.abs(d_jn)
    use_mj = (g_mj >= g_mn) & (g_mj >= g_jn)
    use_jn = (g_jn > g_mn) & (g_jn > g_mj)
    num = np.where(use_mj, f_mn - f_jn, np.where(use_jn, f_mj - f_mn, f_mj - f_jn))
    den = np.where(use_mj, d_mj, np.where(use_jn, d_jn, d_mn))
    close = np.abs(den) < _DD_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / np.where(close, 1.0, den)
    d = a.shape[-1]
    diag = np.arange(d)
    out[..., diag, diag, diag] = 0.5 * np.exp(a)  # exp[a, a, a] = e^a / 2
    close[..., diag, diag, diag] = False
    if np.any(close):
        idx = np.nonzero(close)
        x, y, z = (np.broadcast_to(t, close.shape)[idx] for t in (am, aj, an))
        out[idx] = divided_difference_2(x, y, z)
    return out


# --- per-step Hamiltonians and spectra --------------------------------------

def step_hamiltonians(layout: ControlLayout, values: np.ndarray, j: float = 1.0) -> np.ndarray:
    """Total Hamiltonians ``(N, 4, 4)`` for channel values ``(n_channels, N)``."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != layout.n_channels:
        raise ValueError(f"expected channel values of shape ({layout.n_channels}, N)")
    pairs, drift = control_terms(layout)
    base = exchange_hamiltonian(j) + drift
    h = np.broadcast_to(base, (values.shape[1], 4, 4)).copy()
    for c, (x, y) in enumerate(pairs):
        amp, phase = values[2 * c], values[2 * c + 1]
        h += (amp * np.cos(phase))[:, None, None] * x + (amp * np.sin(phase))[:, None, None] * y
    return h


def pulse_hamiltonians(pulse, j: float = 1.0, steps: Optional[int] = None):
    """Step Hamiltonians and the time grid of ``pulse``."""
    values = pulse.channel_values(steps)
    return step_hamiltonians(pulse.layout, values, j), TimeGrid(pulse.duration, values.shape[1])


@dataclass(frozen=True, eq=False)
class StepSpectra:
    """Eigen-decompositions ``H_k = V_k diag(lam_k) V_k^dag`` of all steps."""

    evals: np.ndarray
    evecs: np.ndarray
    dt: float

    @property
    def nodes(self) -> np.ndarray:
        """Exponent nodes ``-i lam dt`` of each step."""
        return -1j * self.evals * self.dt

    def first_dd(self) -> np.ndarray:
        a = self.nodes
        return divided_difference_1(a[:, :, None], a[:, None, :])

    def second_dd(self) -> np.ndarray:
        return second_dd_table(self.nodes)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        v = self.evecs
        return np.conj(np.swapaxes(v, -1, -2)) @ op @ v

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        v = self.evecs
        return v @ op @ np.conj(np.swapaxes(v, -1, -2))


def step_spectra(h_steps: np.ndarray, dt: float) -> StepSpectra:
    h_steps = np.asarray(h_steps, dtype=complex)
    if not all(is_hermitian(h) for h in h_steps):
        raise InvalidHamiltonianError("step Hamiltonian is not Hermitian")
    evals, evecs = np.linalg.eigh(h_steps)
    return StepSpectra(evals, evecs, float(dt))


def step_propagators(spec: StepSpectra) -> np.ndarray:
    """``exp(-i H_k dt)`` for every step."""
    phases = np.exp(spec.nodes)
    return (spec.evecs * phases[:, None, :]) @ np.conj(np.swapaxes(spec.evecs, -1, -2))


def augmented_steps(spec: StepSpectra, h1: np.ndarray):
    """Diagonal and lower-left blocks ``(U_k, L_k)`` of every step exponential."""
    u = step_propagators(spec)
    h1_eig = spec.to_eigenbasis(np.asarray(h1, dtype=complex))
    lower = spec.from_eigenbasis(-1j * spec.dt * h1_eig * spec.first_dd())
    return u, lower


def chain_product(mats: np.ndarray) -> np.ndarray:
    """Time-ordered product ``M_{N-1} ... M_1 M_0``."""
    out = np.eye(mats.shape[-1], dtype=complex)
    for m in mats:
        out = m @ out
    return out


def _lower_chain(u: np.ndarray, lower: np.ndarray):
    """Time-ordered product of ``[[U_k, 0], [L_k, U_k]]`` kept in block form."""
    d = u.shape[-1]
    tot_u = np.eye(d, dtype=complex)
    tot_l = np.zeros((d, d), dtype=complex)
    for uk, lk in zip(u, lower):
        tot_l = lk @ tot_u + uk @ tot_l
        tot_u = uk @ tot_u
    return tot_u, tot_l


# --- public evolution API -----------------------------------------------------

def evolve_unitary(pulse, layout: Optional[ControlLayout] = None, j_effective: float = 1.0,
                   steps: Optional[int] = None) -> np.ndarray:
    """Time-ordered propagator of ``pulse`` with the coupling set to ``j_effective``."""
    if layout is not None and layout != pulse.layout:
        raise ValueError("layout does not match the pulse")
    if pulse.duration == 0:
        return np.eye(4, dtype=complex)
    h, grid = pulse_hamiltonians(pulse, j_effective, steps)
    return chain_product(step_propagators(step_spectra(h, grid.dt)))


def _augmented_totals(pulse, h1, j, steps):
    if pulse.duration == 0:
        return np.eye(4, dtype=complex), np.zeros((4, 4), dtype=complex)
    h, grid = pulse_hamiltonians(pulse, j, steps)
    h1 = first_order_hamiltonian() if h1 is None else np.asarray(h1, dtype=complex)
    return _lower_chain(*augmented_steps(step_spectra(h, grid.dt), h1))


def propagate_augmented(pulse, layout: Optional[ControlLayout] = None, initial=None,
                        h1=None, j: float = 1.0, steps: Optional[int] = None) -> AugmentedState:
    """Evolve ``initial`` and its first-order correction to the end of ``pulse``.

    ``h1`` defaults to the first-order exchange operator; ``initial`` may be a
    single ket or a ``(4, K)`` block of kets (the map is linear).
    """
    if layout is not None and layout != pulse.layout:
        raise ValueError("layout does not match the pulse")
    psi = np.asarray(initial, dtype=complex)
    u, lower = _augmented_totals(pulse, h1, j, steps)
    return AugmentedState(u @ psi, lower @ psi)


def first_order_states(pulse, layout: Optional[ControlLayout] = None,
                       basis: Optional[Sequence] = None, h1=None, j: float = 1.0,
                       steps: Optional[int] = None) -> list[AugmentedState]:
    """One :class:`AugmentedState` per basis ket (computational basis by default)."""
    if layout is not None and layout != pulse.layout:
        raise ValueError("layout does not match the pulse")
    kets = np.eye(4, dtype=complex) if basis is None else np.array(basis, dtype=complex).T
    u, lower = _augmented_totals(pulse, h1, j, steps)
    zeroth, first = u @ kets, lower @ kets
    return [AugmentedState(zeroth[:, k], first[:, k]) for k in range(kets.shape[1])]
