"""
Circuit genomes: the mutable variational ansatz, its execution on the
simulator and its parameter-shift gradients.

A genome only lists the variational gates. Every execution prepends the fixed
feature map (H on every qubit, then RY(angle_i) on qubit i) and ends with a
Pauli-Z readout of each qubit, giving a latent vector in [-1, 1]^n.

Rotation genes do not hold angles. They point at a slot of an external
parameter vector, so the same genome can be evaluated with any parameters and
mutations can move gates around without touching the optimizer's view of the
parameters.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from math import pi
from typing import Sequence

import numpy as np

from . import simulator as sim
from .errors import ContractError, GenomeParseError

ROTATIONS = ("ROT_X", "ROT_Y", "ROT_Z")
FIXED_GATES = ("H", "CNOT")
GENE_KINDS = ROTATIONS + FIXED_GATES
SCHEMA_VERSION = 1
DEFAULT_MAX_GENES = 64
PARAM_INIT_SCALE = 0.1
SHIFT = pi / 2

_SIM_KIND = {"ROT_X": "RX", "ROT_Y": "RY", "ROT_Z": "RZ", "H": "H", "CNOT": "CNOT"}


@dataclass(frozen=True)
class Gene:
    kind: str
    qubit: int
    control: int | None = None
    param_slot: int | None = None

    def __post_init__(self):
        if self.kind not in GENE_KINDS:
            raise ContractError(f"unknown gene kind {self.kind!r}; expected one of {GENE_KINDS}")
        if self.is_rotation != (self.param_slot is not None):
            raise ContractError(f"{self.kind} gene: param_slot must be set iff the gene is a rotation")
        if (self.kind == "CNOT") != (self.control is not None):
            raise ContractError(f"{self.kind} gene: control must be set iff the gene is a CNOT")
        if self.control is not None and self.control == self.qubit:
            raise ContractError(f"CNOT gene has control == target == {self.qubit}")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATIONS


@dataclass(frozen=True)
class CircuitGenome:
    n_qubits: int
    genes: tuple[Gene, ...]
    n_params: int

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))
        if not 1 <= self.n_qubits <= sim.MAX_QUBITS:
            raise ContractError(f"n_qubits must be in [1, {sim.MAX_QUBITS}], got {self.n_qubits}")
        for i, g in enumerate(self.genes):
            for q in (g.qubit, g.control):
                if q is not None and not 0 <= q < self.n_qubits:
                    raise ContractError(f"gene {i} touches qubit {q}, genome has {self.n_qubits} qubits")
        slots = sorted(g.param_slot for g in self.genes if g.is_rotation)
        if slots != list(range(self.n_params)):
            raise ContractError(
                f"rotation param_slots must be exactly 0..{self.n_params - 1} each used once, got {slots}"
            )

    def validate(self, max_genes: int = DEFAULT_MAX_GENES) -> "CircuitGenome":
        if len(self.genes) > max_genes:
            raise ContractError(f"genome has {len(self.genes)} genes, cap is {max_genes}")
        return self

    @property
    def n_rotations(self) -> int:
        return sum(g.is_rotation for g in self.genes)

    def gate_counts(self) -> dict[str, int]:
        counts = Counter(g.kind for g in self.genes)
        return {k: counts.get(k, 0) for k in GENE_KINDS}

    def digest(self) -> str:
        """Short content hash, stable across processes and platforms."""
        text = json.dumps(genome_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def build_initial_genome(n_qubits: int, depth: int, rng: np.random.Generator | None = None) -> CircuitGenome:
    """Generation-zero ansatz: ``depth`` x (RY on every qubit, then a CNOT chain).

    The layout is fixed, so ``rng`` does not influence the result; it is
    accepted so all genome constructors share one signature.
    """
    if n_qubits < 2 or depth < 1:
        raise ContractError(f"need n_qubits >= 2 and depth >= 1, got {n_qubits}, {depth}")
    genes = []
    slot = 0
    for _ in range(depth):
        for q in range(n_qubits):
            genes.append(Gene("ROT_Y", q, param_slot=slot))
            slot += 1
        for q in range(n_qubits - 1):
            genes.append(Gene("CNOT", q + 1, control=q))
    return CircuitGenome(n_qubits, tuple(genes), slot)


def init_params(genome: CircuitGenome, rng: np.random.Generator, scale: float = PARAM_INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=genome.n_params)


def circuit_ops(genome: CircuitGenome, params, angles=None) -> list[sim.GateOp]:
    """Flatten to simulator gates; ``angles=None`` omits the feature map."""
    params = _check_vector(params, genome.n_params, "params")
    ops: list[sim.GateOp] = []
    if angles is not None:
        angles = _check_vector(angles, genome.n_qubits, "angles")
        ops += [sim.hadamard(q) for q in range(genome.n_qubits)]
        ops += [sim.rot_y(q, a) for q, a in enumerate(angles)]
    for g in genome.genes:
        if g.is_rotation:
            ops.append(sim.GateOp(_SIM_KIND[g.kind], g.qubit, angle=float(params[g.param_slot])))
        elif g.kind == "H":
            ops.append(sim.hadamard(g.qubit))
        else:
            ops.append(sim.cnot(g.control, g.qubit))
    return ops


# ----------------------------------------------------------------------------
# Execution
# ----------------------------------------------------------------------------

def execute(genome: CircuitGenome, params, angles, feature_map: bool = True) -> np.ndarray:
    """Latent vector (<Z_0>, ..., <Z_{n-1}>) for a single input."""
    params = _check_vector(params, genome.n_params, "params")
    angles = _check_vector(angles, genome.n_qubits, "angles")
    return execute_batch(genome, params, angles[None, :], feature_map=feature_map)[0]


def execute_batch(genome: CircuitGenome, params, angles, feature_map: bool = True) -> np.ndarray:
    """Run ``R`` circuits at once.

    ``params`` is ``(n_params,)`` (shared) or ``(R, n_params)``; ``angles`` is
    ``(R, n_qubits)``. Returns ``(R, n_qubits)`` Z-expectations.
    """
    n = genome.n_qubits
    angles = np.asarray(angles, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if angles.ndim != 2 or angles.shape[1] != n:
        raise ContractError(f"angles must have shape (R, {n}), got {angles.shape}")
    rows = angles.shape[0]
    if params.shape not in ((genome.n_params,), (rows, genome.n_params)):
        raise ContractError(f"params must have shape ({genome.n_params},) or ({rows}, {genome.n_params}), got {params.shape}")
    if not (np.all(np.isfinite(angles)) and np.all(np.isfinite(params))):
        raise ContractError("non-finite circuit input")
    per_row = params.ndim == 2

    amps = np.zeros((rows, 1 << n), dtype=np.complex128)
    amps[:, 0] = 1.0
    if feature_map:
        for q in range(n):
            sim.apply_hadamard_batch(amps, q, n)
        for q in range(n):
            sim.apply_rotation_batch(amps, "RY", q, angles[:, q], n)
    for g in genome.genes:
        if g.is_rotation:
            theta = params[:, g.param_slot] if per_row else params[g.param_slot]
            sim.apply_rotation_batch(amps, _SIM_KIND[g.kind], g.qubit, theta, n)
        elif g.kind == "H":
            sim.apply_hadamard_batch(amps, g.qubit, n)
        else:
            sim.apply_cnot_batch(amps, g.control, g.qubit, n)
    probs = amps.real ** 2 + amps.imag ** 2
    return np.clip(sim.expectation_z_batch(probs, n), -1.0, 1.0)


# ----------------------------------------------------------------------------
# Parameter-shift gradients
# ----------------------------------------------------------------------------

def param_shift_grads_batch(genome: CircuitGenome, params, angles, feature_map: bool = True):
    """Jacobians of the latent vector for a batch of inputs.

    Every genome parameter and every feature-map angle feeds exactly one
    half-angle Pauli rotation, so the two-point shift rule is exact:
    d<Z>/dp = (<Z>(p + pi/2) - <Z>(p - pi/2)) / 2.

    All 2 * (n_params + n_qubits) shifted circuits of the whole batch go
    through the simulator as one stacked batch.

    Returns ``(d_params, d_angles)`` with shapes ``(B, n, n_params)`` and
    ``(B, n, n)``; ``d_angles[b, i, j] = d<Z_i>/d angle_j``.
    """
    n, n_p = genome.n_qubits, genome.n_params
    params = _check_vector(params, n_p, "params")
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 2 or angles.shape[1] != n:
        raise ContractError(f"angles must have shape (B, {n}), got {angles.shape}")
    batch = angles.shape[0]
    n_angle_shifts = n if feature_map else 0
    n_shifts = n_p + n_angle_shifts

    # rows are ordered (sign, shifted variable, sample)
    p_rows = np.broadcast_to(params, (2, n_shifts, batch, n_p)).copy()
    a_rows = np.broadcast_to(angles, (2, n_shifts, batch, n)).copy()
    for s in range(n_p):
        p_rows[0, s, :, s] += SHIFT
        p_rows[1, s, :, s] -= SHIFT
    for j in range(n_angle_shifts):
        a_rows[0, n_p + j, :, j] += SHIFT
        a_rows[1, n_p + j, :, j] -= SHIFT

    total = 2 * n_shifts * batch
    out = execute_batch(genome, p_rows.reshape(total, n_p), a_rows.reshape(total, n), feature_map=feature_map)
    out = out.reshape(2, n_shifts, batch, n)
    deriv = 0.5 * (out[0] - out[1])              # (n_shifts, B, n)
    deriv = deriv.transpose(1, 2, 0)             # (B, n, n_shifts)
    d_params = np.ascontiguousarray(deriv[:, :, :n_p])
    if feature_map:
        d_angles = np.ascontiguousarray(deriv[:, :, n_p:])
    else:
        d_angles = np.zeros((batch, n, n))
    return d_params, d_angles


def param_shift_grads(genome: CircuitGenome, params, angles, feature_map: bool = True):
    """Single-input jacobians: ``(n, n_params)`` and ``(n, n)``."""
    angles = _check_vector(angles, genome.n_qubits, "angles")
    d_params, d_angles = param_shift_grads_batch(genome, params, angles[None, :], feature_map=feature_map)
    return d_params[0], d_angles[0]


def param_shift_derivative(genome: CircuitGenome, params, angles, slot: int, feature_map: bool = True) -> np.ndarray:
    """d<Z>/d params[slot] for one slot, as an ``(n,)`` vector."""
    params = _check_vector(params, genome.n_params, "params")
    if not 0 <= slot < genome.n_params:
        raise ContractError(f"genome has no parameter slot {slot} (n_params = {genome.n_params})")
    plus, minus = params.copy(), params.copy()
    plus[slot] += SHIFT
    minus[slot] -= SHIFT
    return 0.5 * (
        execute(genome, plus, angles, feature_map=feature_map)
        - execute(genome, minus, angles, feature_map=feature_map)
    )


def _check_vector(values, length: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (length,):
        raise ContractError(f"{name} must have length {length}, got shape {arr.shape}")
    return arr


# ----------------------------------------------------------------------------
# JSON serialization
# ----------------------------------------------------------------------------

def genome_to_dict(genome: CircuitGenome) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "n_qubits": genome.n_qubits,
        "n_params": genome.n_params,
        "genes": [
            {"kind": g.kind, "qubit": g.qubit, "control": g.control, "param_slot": g.param_slot}
            for g in genome.genes
        ],
    }


def serialize_genome(genome: CircuitGenome) -> str:
    return json.dumps(genome_to_dict(genome), indent=2) + "\n"


_TOP_FIELDS = ("version", "n_qubits", "n_params", "genes")
_GENE_FIELDS = ("kind", "qubit", "control", "param_slot")


def _strict_int(value, where: str, optional: bool = False):
    if value is None and optional:
        return None
    # bool is an int subclass; reject it explicitly
    if type(value) is not int:
        raise GenomeParseError(f"{where}: expected integer{' or null' if optional else ''}, got {value!r}")
    return value


def genome_from_dict(data, max_genes: int = DEFAULT_MAX_GENES) -> CircuitGenome:
    if not isinstance(data, dict):
        raise GenomeParseError(f"top level: expected object, got {type(data).__name__}")
    missing = [k for k in _TOP_FIELDS if k not in data]
    extra = sorted(set(data) - set(_TOP_FIELDS))
    if missing or extra:
        raise GenomeParseError(f"top level: missing fields {missing}, unknown fields {extra}")
    if _strict_int(data["version"], "version") != SCHEMA_VERSION:
        raise GenomeParseError(f"version: unsupported schema version {data['version']}")
    n_qubits = _strict_int(data["n_qubits"], "n_qubits")
    n_params = _strict_int(data["n_params"], "n_params")
    if not isinstance(data["genes"], list):
        raise GenomeParseError("genes: expected array")
    if len(data["genes"]) > max_genes:
        raise GenomeParseError(f"genes: {len(data['genes'])} genes exceeds cap {max_genes}")
    genes = []
    for i, raw in enumerate(data["genes"]):
        where = f"genes[{i}]"
        if not isinstance(raw, dict):
            raise GenomeParseError(f"{where}: expected object")
        missing = [k for k in _GENE_FIELDS if k not in raw]
        extra = sorted(set(raw) - set(_GENE_FIELDS))
        if missing or extra:
            raise GenomeParseError(f"{where}: missing fields {missing}, unknown fields {extra}")
        if raw["kind"] not in GENE_KINDS:
            raise GenomeParseError(f"{where}.kind: unknown gate kind {raw['kind']!r}")
        try:
            genes.append(Gene(
                raw["kind"],
                _strict_int(raw["qubit"], f"{where}.qubit"),
                control=_strict_int(raw["control"], f"{where}.control", optional=True),
                param_slot=_strict_int(raw["param_slot"], f"{where}.param_slot", optional=True),
            ))
        except ContractError as exc:
            raise GenomeParseError(f"{where}: {exc}") from None
    try:
        return CircuitGenome(n_qubits, tuple(genes), n_params)
    except ContractError as exc:
        raise GenomeParseError(f"genome: {exc}") from None


def deserialize_genome(text: str, max_genes: int = DEFAULT_MAX_GENES) -> CircuitGenome:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenomeParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return genome_from_dict(data, max_genes=max_genes)


def describe_genome(genome: CircuitGenome, params: Sequence[float] | None = None) -> str:
    """Human-readable listing used by ``qaenas inspect-genome``."""
    counts = genome.gate_counts()
    lines = [
        f"genome {genome.digest()}  qubits={genome.n_qubits}  params={genome.n_params}  genes={len(genome.genes)}",
        "counts: " + "  ".join(f"{k}={v}" for k, v in counts.items()),
        "feature map: H on all qubits, RY(angle_i) on qubit i",
    ]
    for i, g in enumerate(genome.genes):
        if g.is_rotation:
            value = "" if params is None else f" = {params[g.param_slot]:+.4f}"
            desc = f"{g.kind:<5} q{g.qubit}  theta[{g.param_slot}]{value}"
        elif g.kind == "CNOT":
            desc = f"CNOT  q{g.control} -> q{g.qubit}"
        else:
            desc = f"H     q{g.qubit}"
        lines.append(f"  {i:3d}  {desc}")
    lines.append("readout: <Z_i> on every qubit")
    return "\n".join(lines)
