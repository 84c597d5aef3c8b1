"""
Dense operators on small Hilbert spaces.

Everything here works on plain complex ``numpy`` arrays. The thin
:class:`Operator` wrapper only exists to carry the subsystem factorization
needed by :func:`partial_trace`; it converts transparently to an array.

Basis convention: ``sigma_z |0> = +|0>`` and ``sigma_z |1> = -|1>``. The
two-qubit basis is ordered ``|00>, |01>, |10>, |11>`` and tensor factors are
ordered (qubit 1, qubit 2, motion 1, motion 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .config import NUMERICS

__all__ = [
    "Operator", "InvalidHamiltonianError", "IDENTITY", "SIGMA_X", "SIGMA_Y",
    "SIGMA_Z", "SIGMA_PLUS", "SIGMA_MINUS", "kron", "dag", "is_hermitian",
    "expm_skew_hermitian", "expm_general", "partial_trace", "thermal_state",
    "annihilation", "embed",
]

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# (sigma_x -/+ i sigma_y) / 2
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


class InvalidHamiltonianError(ValueError):
    """Raised when an operator that must be Hermitian is not."""


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense square matrix together with its tensor factorization.

    Parameters
    ----------
    data : ndarray
        ``(dim, dim)`` complex matrix.
    dims : sequence of int, optional
        Subsystem dimensions whose product is ``dim``.
    """

    data: np.ndarray
    dims: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError(f"operator must be square, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.dims is not None:
            dims = tuple(int(d) for d in self.dims)
            if any(d < 1 for d in dims) or int(np.prod(dims)) != data.shape[0]:
                raise ValueError(f"dims {dims} do not factor dimension {data.shape[0]}")
            object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __matmul__(self, other):
        return self.data @ np.asarray(other)

    def __rmatmul__(self, other):
        return np.asarray(other) @ self.data

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)


def _as_array(a) -> np.ndarray:
    return np.asarray(a, dtype=complex)


def _dims_of(a) -> tuple[int, ...]:
    if isinstance(a, Operator) and a.dims is not None:
        return a.dims
    return (np.asarray(a).shape[0],)


def dag(a) -> np.ndarray:
    return _as_array(a).conj().T


def kron(*ops) -> Operator:
    """Kronecker product; subsystem dims are concatenated left to right."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    data = reduce(np.kron, (_as_array(o) for o in ops))
    dims = tuple(d for o in ops for d in _dims_of(o))
    return Operator(data, dims)


def embed(op, position: int, dims: Sequence[int]) -> np.ndarray:
    """Place ``op`` on subsystem ``position`` of a tensor product space."""
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[position] = _as_array(op)
    return reduce(np.kron, factors)


def is_hermitian(a, tol: Optional[float] = None) -> bool:
    a = _as_array(a)
    tol = NUMERICS.check_tol if tol is None else tol
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def expm_skew_hermitian(h, t: float) -> np.ndarray:
    """Return ``exp(-i h t)`` for Hermitian ``h`` by spectral decomposition."""
    h = _as_array(h)
    if not is_hermitian(h):
        raise InvalidHamiltonianError("Hamiltonian is not Hermitian")
    evals, evecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T


def expm_general(a) -> np.ndarray:
    """Matrix exponential of an arbitrary square matrix (scaling and squaring)."""
    return scipy.linalg.expm(_as_array(a))


def partial_trace(rho, keep: Sequence[int], dims: Optional[Sequence[int]] = None) -> Operator:
    """Trace out every subsystem not listed in ``keep``.

    ``dims`` is taken from ``rho`` when it is an :class:`Operator`; a bare
    array without ``dims`` is rejected. An empty ``keep`` returns the full
    trace as a 1x1 operator.
    """
    if dims is None:
        if not isinstance(rho, Operator) or rho.dims is None:
            raise ValueError("partial_trace needs subsystem dims (factorization metadata missing)")
        dims = rho.dims
    dims = tuple(int(d) for d in dims)
    data = _as_array(rho)
    if int(np.prod(dims)) != data.shape[0]:
        raise ValueError(f"dims {dims} do not factor dimension {data.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"subsystem index out of range in keep={keep}")
    n = len(dims)
    tensor = data.reshape(dims + dims)
    # einsum labels: row indices 0..n-1, column indices n..2n-1; traced pairs share a label
    row = list(range(n))
    col = [i if i not in keep else n + i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    reduced = np.einsum(tensor, row + col, out)
    kept_dims = tuple(dims[k] for k in keep)
    size = int(np.prod(kept_dims)) if kept_dims else 1
    return Operator(np.asarray(reduced).reshape(size, size), kept_dims or None)


def annihilation(n_max: int) -> np.ndarray:
    """Truncated bosonic lowering operator on ``n_max`` Fock levels."""
    return np.diag(np.sqrt(np.arange(1, n_max, dtype=float)), k=1).astype(complex)


def thermal_state(omega_over_kt: float, n_max: int) -> np.ndarray:
    """Diagonal Boltzmann state of one oscillator, renormalized after truncation."""
    if omega_over_kt <= 0:
        raise ValueError("omega_over_kt must be positive")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    weights = np.ones(n_max)
    with np.errstate(over="ignore", under="ignore"):
        weights[1:] = np.exp(-omega_over_kt * np.arange(1, n_max))
    return np.diag(weights / weights.sum()).astype(complex)
