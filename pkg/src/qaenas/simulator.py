"""
Exact statevector simulation for small circuits.

Gate set: H, RX, RY, RZ and CNOT. Rotations follow the half-angle convention
R_k(theta) = exp(-i theta sigma_k / 2). Qubit ordering is little-endian:
qubit q is bit q of the amplitude index, so |q1 q0> = |10> lives at index 1.

Two layers live here:

- a value-level API (``init_state``, ``apply_gate``, ``expectation_z``) that
  works on ``StateVector`` objects and never mutates its inputs;
- batched kernels (``apply_*_batch``) that update a ``(batch, 2**n)`` complex
  array in place. The circuit module stacks many circuit evaluations into the
  batch axis, with a different rotation angle per row.

``dense_unitary_oracle`` builds explicit Kronecker-product matrices and exists
only so tests can cross-check the kernels.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import isfinite, sqrt
from typing import Sequence

import numpy as np

from .errors import SimulationError

MAX_QUBITS = 12
MAX_ORACLE_QUBITS = 6

GATE_KINDS = ("H", "RX", "RY", "RZ", "CNOT")
ROTATION_KINDS = ("RX", "RY", "RZ")

_INV_SQRT2 = 1.0 / sqrt(2.0)


@dataclass(frozen=True)
class GateOp:
    """One gate instance. ``angle`` is used by rotations, ``control`` by CNOT."""

    kind: str
    qubit: int
    angle: float | None = None
    control: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}; expected one of {GATE_KINDS}")
        if self.kind in ROTATION_KINDS:
            if self.angle is None:
                raise SimulationError(f"{self.kind} requires an angle")
            if not isfinite(float(self.angle)):
                raise SimulationError(f"{self.kind} angle is not finite: {self.angle!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise SimulationError("CNOT requires a control qubit")
            if self.control == self.qubit:
                raise SimulationError(f"CNOT control and target are both qubit {self.qubit}")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,) if self.control is None else (self.control, self.qubit)


def hadamard(qubit: int) -> GateOp:
    return GateOp("H", qubit)


def rot_x(qubit: int, angle: float) -> GateOp:
    return GateOp("RX", qubit, angle=float(angle))


def rot_y(qubit: int, angle: float) -> GateOp:
    return GateOp("RY", qubit, angle=float(angle))


def rot_z(qubit: int, angle: float) -> GateOp:
    return GateOp("RZ", qubit, angle=float(angle))


def cnot(control: int, target: int) -> GateOp:
    return GateOp("CNOT", target, control=control)


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise SimulationError(
                f"{self.n_qubits} qubits need {1 << self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def init_state(n_qubits: int) -> StateVector:
    """Return |0...0> on ``n_qubits`` qubits."""
    _check_n_qubits(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply one gate and return the new state; ``state`` is left untouched."""
    check_gate(gate, state.n_qubits)
    amps = state.amplitudes.copy().reshape(1, -1)
    if gate.kind == "H":
        apply_hadamard_batch(amps, gate.qubit, state.n_qubits)
    elif gate.kind == "CNOT":
        apply_cnot_batch(amps, gate.control, gate.qubit, state.n_qubits)
    else:
        apply_rotation_batch(amps, gate.kind, gate.qubit, np.array([gate.angle]), state.n_qubits)
    return StateVector(state.n_qubits, amps.reshape(-1))


def apply_gates(state: StateVector, gates: Sequence[GateOp]) -> StateVector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z_qubit> = P(bit qubit = 0) - P(bit qubit = 1)."""
    if not 0 <= qubit < state.n_qubits:
        raise SimulationError(f"qubit {qubit} out of range for {state.n_qubits}-qubit state")
    probs = state.probabilities().reshape(1, -1)
    return float(expectation_z_batch(probs, state.n_qubits)[0, qubit])


def check_gate(gate: GateOp, n_qubits: int) -> None:
    for q in gate.qubits:
        if not 0 <= q < n_qubits:
            raise SimulationError(f"{gate.kind} touches qubit {q}, state has {n_qubits} qubits")


def _check_n_qubits(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise SimulationError(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")


# ----------------------------------------------------------------------------
# Batched in-place kernels. ``amps`` has shape (batch, 2**n).
# Viewing it as (batch, high, 2, low) with low = 2**q puts the bit-q pairs
# (i, i | 1 << q) at [..., 0, :] and [..., 1, :].
# ----------------------------------------------------------------------------

def _pair_view(amps: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    if not amps.flags.c_contiguous:
        raise SimulationError("batched kernels need a C-contiguous amplitude array")
    low = 1 << qubit
    return amps.reshape(amps.shape[0], (1 << n_qubits) // (2 * low), 2, low)


def apply_hadamard_batch(amps: np.ndarray, qubit: int, n_qubits: int) -> None:
    v = _pair_view(amps, qubit, n_qubits)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = (a0 + a1) * _INV_SQRT2
    v[:, :, 1, :] = (a0 - a1) * _INV_SQRT2


def apply_rotation_batch(amps: np.ndarray, kind: str, qubit: int, angles: np.ndarray, n_qubits: int) -> None:
    """Rotate ``qubit`` of every row; ``angles`` is a scalar or one angle per row."""
    angles = np.asarray(angles, dtype=np.float64)
    if not np.all(np.isfinite(angles)):
        raise SimulationError(f"{kind} angle is not finite")
    half = np.broadcast_to(angles, (amps.shape[0],))[:, None, None] * 0.5
    c, s = np.cos(half), np.sin(half)
    v = _pair_view(amps, qubit, n_qubits)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    if kind == "RY":
        v[:, :, 0, :] = c * a0 - s * a1
        v[:, :, 1, :] = s * a0 + c * a1
    elif kind == "RX":
        v[:, :, 0, :] = c * a0 - 1j * s * a1
        v[:, :, 1, :] = -1j * s * a0 + c * a1
    elif kind == "RZ":
        phase = np.exp(-1j * half)
        v[:, :, 0, :] = phase * a0
        v[:, :, 1, :] = np.conj(phase) * a1
    else:
        raise SimulationError(f"{kind!r} is not a rotation")


@lru_cache(maxsize=None)
def _cnot_permutation(control: int, target: int, n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    perm.setflags(write=False)
    return perm


def apply_cnot_batch(amps: np.ndarray, control: int, target: int, n_qubits: int) -> None:
    amps[:] = amps[:, _cnot_permutation(control, target, n_qubits)]


def expectation_z_batch(probs: np.ndarray, n_qubits: int) -> np.ndarray:
    """Per-qubit <Z> for each row of a (batch, 2**n) probability array."""
    idx = np.arange(1 << n_qubits)
    signs = 1.0 - 2.0 * ((idx[:, None] >> np.arange(n_qubits)[None, :]) & 1)
    return probs @ signs


# ----------------------------------------------------------------------------
# Dense oracle (tests only)
# ----------------------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) * _INV_SQRT2
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_P0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
_P1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)
_I2 = np.eye(2, dtype=np.complex128)
_PAULI = {
    "RX": _X,
    "RY": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "RZ": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def _rotation_matrix(kind: str, angle: float) -> np.ndarray:
    # exp(-i a P / 2) = cos(a/2) I - i sin(a/2) P for any Pauli P
    return np.cos(angle / 2) * _I2 - 1j * np.sin(angle / 2) * _PAULI[kind]


def _embed(factors: dict[int, np.ndarray], n_qubits: int) -> np.ndarray:
    # kron runs from the most significant qubit down to qubit 0
    out = np.ones((1, 1), dtype=np.complex128)
    for q in reversed(range(n_qubits)):
        out = np.kron(out, factors.get(q, _I2))
    return out


def gate_matrix(gate: GateOp, n_qubits: int) -> np.ndarray:
    """Full 2**n x 2**n matrix of one gate."""
    check_gate(gate, n_qubits)
    if gate.kind == "H":
        return _embed({gate.qubit: _H}, n_qubits)
    if gate.kind == "CNOT":
        return _embed({gate.control: _P0}, n_qubits) + _embed({gate.control: _P1, gate.qubit: _X}, n_qubits)
    return _embed({gate.qubit: _rotation_matrix(gate.kind, gate.angle)}, n_qubits)


def dense_unitary_oracle(gates: Sequence[GateOp], n_qubits: int) -> np.ndarray:
    """Product of explicit gate matrices, first gate applied first."""
    if n_qubits > MAX_ORACLE_QUBITS:
        raise SimulationError(f"dense oracle refuses {n_qubits} qubits (limit {MAX_ORACLE_QUBITS})")
    _check_n_qubits(n_qubits)
    u = np.eye(1 << n_qubits, dtype=np.complex128)
    for gate in gates:
        u = gate_matrix(gate, n_qubits) @ u
    return u
