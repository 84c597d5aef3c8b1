"""
Control pulses: piecewise-constant and Chebyshev parameterizations, frame
angles, and the versioned JSON pulse file.

A pulse stores physical channel values. Amplitude channels are Rabi
frequencies in units of J (they may be negative; ``canonicalize`` moves the
sign into the phase) and phase channels are in radians.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .config import NUMERICS
from .hamiltonians import ControlLayout, LayoutKind

__all__ = [
    "FrameAngles", "PiecewiseConstant", "Chebyshev", "Pulse", "PulseFileError",
    "PulseSchemaError", "PulseVersionError", "PulseValueError", "FORMAT_VERSION",
    "chebyshev_eval", "chebyshev_matrix", "midpoints", "sample_to_piecewise",
    "canonicalize", "write_pulse", "read_pulse", "pulse_to_dict",
    "pulse_from_dict", "write_waveform_csv", "native_pulse",
]

FORMAT_VERSION = "1"


@dataclass(frozen=True)
class FrameAngles:
    """Single-qubit frame rotations ``(theta, varphi, lambda)``.

    One triple is shared by both qubits in the global and detuned layouts;
    the full-local layout carries one triple per qubit.
    """

    angles: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)

    def __post_init__(self):
        angles = tuple(tuple(float(a) for a in triple) for triple in self.angles)
        if not angles or any(len(t) != 3 for t in angles) or len(angles) > 2:
            raise ValueError("frame angles are one or two (theta, varphi, lambda) triples")
        if not all(math.isfinite(a) for t in angles for a in t):
            raise ValueError("frame angles must be finite")
        object.__setattr__(self, "angles", angles)

    @classmethod
    def identity(cls, n_frames: int = 1) -> "FrameAngles":
        return cls(((0.0, 0.0, 0.0),) * n_frames)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "FrameAngles":
        vec = np.asarray(vec, dtype=float).reshape(-1, 3)
        return cls(tuple(tuple(row) for row in vec))

    def as_vector(self) -> np.ndarray:
        return np.array(self.angles, dtype=float).ravel()

    @property
    def n_frames(self) -> int:
        return len(self.angles)


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """``values[c, i]`` is channel ``c`` on step ``i``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        object.__setattr__(self, "values", values)

    @property
    def steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Chebyshev:
    """``coeffs[c, n]`` multiplies ``T_n`` for channel ``c``."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float, ndmin=2)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] - 1


Basis = Union[PiecewiseConstant, Chebyshev]


@dataclass(eq=False)
class Pulse:
    layout: ControlLayout
    duration: float
    basis: Basis
    frames: FrameAngles = field(default_factory=FrameAngles)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.duration = float(self.duration)
        # zero duration is allowed in memory (identity evolution) but not on disk
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError("pulse duration must be finite and non-negative")
        arr = self.basis.values if isinstance(self.basis, PiecewiseConstant) else self.basis.coeffs
        if arr.shape[0] != self.layout.n_channels:
            raise ValueError(
                f"{self.layout.kind.value} layout has {self.layout.n_channels} channels, "
                f"basis provides {arr.shape[0]}")
        if self.frames.n_frames != self.layout.n_frames:
            raise ValueError(
                f"{self.layout.kind.value} layout needs {self.layout.n_frames} frame triple(s)")

    @property
    def is_piecewise(self) -> bool:
        return isinstance(self.basis, PiecewiseConstant)

    def channel_values(self, steps: Optional[int] = None) -> np.ndarray:
        """Per-step channel values, sampling Chebyshev pulses at step midpoints."""
        if self.is_piecewise:
            if steps is not None and steps != self.basis.steps:
                raise ValueError("piecewise pulses can only be read on their own grid")
            return self.basis.values
        return self.basis.coeffs @ chebyshev_matrix(self.basis.order, self.n_steps(steps))

    def n_steps(self, steps: Optional[int] = None) -> int:
        """Grid size; Chebyshev pulses default to the density they were made on."""
        if self.is_piecewise:
            return self.basis.steps
        if steps is not None:
            return steps
        return int(self.metadata.get("sampling_steps", NUMERICS.sampling_steps))


def native_pulse(layout: Optional[ControlLayout] = None) -> Pulse:
    """Bare exchange for ``pi/(2J)`` with no drive and identity frames."""
    layout = layout or ControlLayout(LayoutKind.GLOBAL)
    if layout.kind is LayoutKind.DETUNED:
        layout = ControlLayout(LayoutKind.GLOBAL, omega_max=layout.omega_max)
    basis = PiecewiseConstant(np.zeros((layout.n_channels, 1)))
    return Pulse(layout, np.pi / 2, basis, FrameAngles.identity(layout.n_frames),
                 {"protocol": "native"})


# --- Chebyshev --------------------------------------------------------------

def chebyshev_eval(coeffs: Sequence[float], t: float, duration: float) -> float:
    """Evaluate ``sum_n c_n T_n(2 t / duration - 1)`` with Clenshaw's recurrence."""
    if not 0.0 <= t <= duration:
        raise ValueError(f"t={t} outside [0, {duration}]")
    x = 2.0 * t / duration - 1.0
    b1 = b2 = 0.0
    for c in reversed(list(coeffs)[1:]):
        b1, b2 = 2.0 * x * b1 - b2 + c, b1
    return float((list(coeffs)[0] if len(coeffs) else 0.0) + x * b1 - b2)


def midpoints(steps: int) -> np.ndarray:
    """Step midpoints mapped onto ``[-1, 1]``."""
    return (2.0 * np.arange(steps) + 1.0) / steps - 1.0


def chebyshev_matrix(order: int, steps: int) -> np.ndarray:
    """``T[n, i] = T_n(x_i)`` at the step midpoints, shape ``(order+1, steps)``."""
    x = midpoints(steps)
    t = np.empty((order + 1, steps))
    t[0] = 1.0
    if order >= 1:
        t[1] = x
    for n in range(2, order + 1):
        t[n] = 2.0 * x * t[n - 1] - t[n - 2]
    return t


def sample_to_piecewise(p: Pulse, steps: Optional[int] = None) -> Pulse:
    """Midpoint-sample a Chebyshev pulse onto a piecewise-constant grid."""
    if p.is_piecewise:
        if steps is not None and steps != p.basis.steps:
            raise ValueError("cannot resample a piecewise pulse onto a different grid")
        return p
    steps = p.n_steps(steps)
    meta = dict(p.metadata, sampling_steps=steps)
    return replace(p, basis=PiecewiseConstant(p.channel_values(steps)), metadata=meta)


def canonicalize(p: Pulse, steps: Optional[int] = None) -> Pulse:
    """Return a piecewise pulse with non-negative amplitudes.

    A negative amplitude is flipped and ``pi`` added to its phase, which
    leaves the control Hamiltonian unchanged.
    """
    vals = sample_to_piecewise(p, steps).basis.values.copy()
    for c in range(0, vals.shape[0], 2):
        neg = vals[c] < 0
        vals[c, neg] *= -1.0
        vals[c + 1, neg] += np.pi
    return replace(p, basis=PiecewiseConstant(vals))


# --- file format --------------------------------------------------------------

class PulseFileError(ValueError):
    """Base class for pulse file problems."""


class PulseSchemaError(PulseFileError):
    """Document does not follow the pulse schema."""


class PulseVersionError(PulseFileError):
    """Document was written by an incompatible format version."""


class PulseValueError(PulseFileError):
    """Document contains non-finite numbers."""


def _floats(seq, what: str) -> list[float]:
    try:
        out = [float(v) for v in seq]
    except (TypeError, ValueError) as exc:
        raise PulseSchemaError(f"{what}: expected a list of numbers") from exc
    if not all(math.isfinite(v) for v in out):
        raise PulseValueError(f"{what}: non-finite value")
    return out


def _clean(obj):
    """Make metadata JSON-safe (numpy scalars/arrays, dataclasses)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return _clean({k: getattr(obj, k) for k in obj.__dataclass_fields__})
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def pulse_to_dict(p: Pulse) -> dict:
    channels = p.layout.channels
    if p.is_piecewise:
        basis = {"type": "piecewise", "steps": p.basis.steps,
                 "values": {ch: p.basis.values[i].tolist() for i, ch in enumerate(channels)}}
    else:
        basis = {"type": "chebyshev", "order": p.basis.order,
                 "coeffs": {ch: p.basis.coeffs[i].tolist() for i, ch in enumerate(channels)}}
    return {
        "version": FORMAT_VERSION,
        "layout": {"kind": p.layout.kind.value, "delta": p.layout.delta,
                   "omega_max": p.layout.omega_max},
        "duration": p.duration,
        "basis": basis,
        "frames": [list(t) for t in p.frames.angles],
        "metadata": _clean(p.metadata),
    }


def pulse_from_dict(doc: dict) -> Pulse:
    if not isinstance(doc, dict):
        raise PulseSchemaError("pulse document must be a JSON object")
    missing = {"version", "layout", "duration", "basis", "frames"} - set(doc)
    if missing:
        raise PulseSchemaError(f"missing fields: {sorted(missing)}")
    if str(doc["version"]) != FORMAT_VERSION:
        raise PulseVersionError(
            f"pulse file version {doc['version']!r}, reader supports {FORMAT_VERSION!r}")
    try:
        lay = doc["layout"]
        layout = ControlLayout(LayoutKind(lay["kind"]), float(lay.get("delta", 0.0)),
                               float(lay.get("omega_max", 50.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise PulseSchemaError(f"bad layout: {exc}") from exc
    duration = _floats([doc["duration"]], "duration")[0]
    if not duration > 0:
        raise PulseSchemaError("duration must be positive")
    basis_doc = doc["basis"]
    if not isinstance(basis_doc, dict) or "type" not in basis_doc:
        raise PulseSchemaError("basis must be an object with a type")
    key = {"piecewise": "values", "chebyshev": "coeffs"}.get(basis_doc["type"])
    if key is None:
        raise PulseSchemaError(f"unknown basis type {basis_doc['type']!r}")
    table = basis_doc.get(key)
    if not isinstance(table, dict) or set(table) != set(layout.channels):
        raise PulseSchemaError(f"basis {key} must name channels {list(layout.channels)}")
    rows = [_floats(table[ch], f"basis.{key}.{ch}") for ch in layout.channels]
    if len({len(r) for r in rows}) != 1 or not rows[0]:
        raise PulseSchemaError("all channels need the same non-zero length")
    arr = np.array(rows)
    if basis_doc["type"] == "piecewise":
        if int(basis_doc.get("steps", arr.shape[1])) != arr.shape[1]:
            raise PulseSchemaError("steps does not match the number of values")
        basis = PiecewiseConstant(arr)
    else:
        if int(basis_doc.get("order", arr.shape[1] - 1)) != arr.shape[1] - 1:
            raise PulseSchemaError("order does not match the number of coefficients")
        basis = Chebyshev(arr)
    try:
        frames = FrameAngles(tuple(tuple(_floats(t, "frames")) for t in doc["frames"]))
    except PulseFileError:
        raise
    except (TypeError, ValueError) as exc:
        raise PulseSchemaError(f"bad frames: {exc}") from exc
    metadata = doc.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise PulseSchemaError("metadata must be an object")
    try:
        return Pulse(layout, duration, basis, frames, metadata)
    except ValueError as exc:
        raise PulseSchemaError(str(exc)) from exc


def write_pulse(p: Pulse, path) -> None:
    """Write ``p`` as JSON. Floats use the shortest round-trip repr."""
    if not p.duration > 0:
        raise PulseSchemaError("only pulses with positive duration can be stored")
    Path(path).write_text(json.dumps(pulse_to_dict(p), indent=1, allow_nan=False) + "\n")


def read_pulse(path) -> Pulse:
    """Read a pulse file. ``OSError`` propagates for unreadable files."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text, parse_constant=lambda c: float(c))
    except json.JSONDecodeError as exc:
        raise PulseSchemaError(f"not valid JSON: {exc}") from exc
    return pulse_from_dict(doc)


def write_waveform_csv(p: Pulse, path, steps: Optional[int] = None) -> None:
    """Export step-midpoint samples with header ``t,omega1,phi1[,omega2,phi2][,delta]``."""
    vals = p.channel_values(steps)
    n = vals.shape[1]
    t = (np.arange(n) + 0.5) * p.duration / n
    header = ["t", "omega1", "phi1"]
    if p.layout.kind is LayoutKind.FULL_LOCAL:
        header += ["omega2", "phi2"]
    cols = [t, *vals]
    if p.layout.kind is LayoutKind.DETUNED:
        header.append("delta")
        cols.append(np.full(n, p.layout.delta))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*cols):
            writer.writerow([f"{v:.17g}" for v in row])
