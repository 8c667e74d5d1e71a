"""Statevector simulator: known states, oracle agreement and invariants."""
from math import cos, pi, sin, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaenas import simulator as sim
from qaenas.errors import SimulationError

from .helpers import random_gates, random_state

INV_SQRT2 = 1 / sqrt(2)


# =============================================================================
# init_state
# =============================================================================

def test_init_state_one_qubit():
    np.testing.assert_array_equal(sim.init_state(1).amplitudes, [1, 0])


def test_init_state_two_qubits():
    np.testing.assert_array_equal(sim.init_state(2).amplitudes, [1, 0, 0, 0])


def test_init_state_four_qubits():
    s = sim.init_state(4)
    assert s.amplitudes.shape == (16,)
    assert s.norm() == 1.0


@pytest.mark.parametrize("n", [0, 13, -1, 2.0])
def test_init_state_rejects_bad_sizes(n):
    with pytest.raises(SimulationError):
        sim.init_state(n)


# =============================================================================
# apply_gate
# =============================================================================

def test_hadamard_on_zero():
    s = sim.apply_gate(sim.init_state(1), sim.hadamard(0))
    np.testing.assert_allclose(s.amplitudes, [INV_SQRT2, INV_SQRT2], atol=1e-15)


def test_cnot_truth_table_little_endian():
    # qubit 0 set -> index 1; CNOT(0 -> 1) flips qubit 1 -> index 3
    s = sim.StateVector(2, np.array([0, 1, 0, 0], dtype=complex))
    out = sim.apply_gate(s, sim.cnot(0, 1))
    np.testing.assert_array_equal(out.amplitudes, [0, 0, 0, 1])


def test_cnot_leaves_control_zero_alone():
    s = sim.StateVector(2, np.array([0, 0, 1, 0], dtype=complex))  # |q1=1, q0=0>
    out = sim.apply_gate(s, sim.cnot(0, 1))
    np.testing.assert_array_equal(out.amplitudes, [0, 0, 1, 0])


def test_ry_half_angle():
    s = sim.apply_gate(sim.init_state(1), sim.rot_y(0, pi / 2))
    np.testing.assert_allclose(s.amplitudes, [cos(pi / 4), sin(pi / 4)], atol=1e-15)


def test_rx_and_rz_conventions():
    t = 0.7
    rx = sim.apply_gate(sim.init_state(1), sim.rot_x(0, t)).amplitudes
    np.testing.assert_allclose(rx, [cos(t / 2), -1j * sin(t / 2)], atol=1e-15)
    plus = sim.apply_gate(sim.init_state(1), sim.hadamard(0))
    rz = sim.apply_gate(plus, sim.rot_z(0, t)).amplitudes
    np.testing.assert_allclose(rz, INV_SQRT2 * np.array([np.exp(-0.5j * t), np.exp(0.5j * t)]), atol=1e-15)


def test_apply_gate_does_not_mutate_input():
    s = sim.init_state(2)
    before = s.amplitudes.copy()
    sim.apply_gate(s, sim.hadamard(1))
    np.testing.assert_array_equal(s.amplitudes, before)


def test_gate_on_second_qubit_of_three():
    s = sim.apply_gate(sim.init_state(3), sim.rot_y(1, pi))
    expected = np.zeros(8)
    expected[2] = 1.0
    np.testing.assert_allclose(s.amplitudes, expected, atol=1e-15)


@pytest.mark.parametrize("gate", [sim.hadamard(2), sim.cnot(0, 5), sim.rot_x(-1, 0.1)])
def test_invalid_qubit_index(gate):
    with pytest.raises(SimulationError):
        sim.apply_gate(sim.init_state(2), gate)


def test_nan_angle_rejected():
    with pytest.raises(SimulationError):
        sim.rot_y(0, float("nan"))
    with pytest.raises(SimulationError):
        sim.apply_rotation_batch(np.ones((1, 2), dtype=complex), "RY", 0, np.array([np.nan]), 1)


def test_cnot_same_qubit_rejected():
    with pytest.raises(SimulationError):
        sim.cnot(1, 1)


# =============================================================================
# expectation_z
# =============================================================================

def test_expectation_zero_state():
    assert sim.expectation_z(sim.init_state(1), 0) == 1.0


def test_expectation_plus_state():
    s = sim.apply_gate(sim.init_state(1), sim.hadamard(0))
    assert abs(sim.expectation_z(s, 0)) < 1e-15


def test_expectation_ry_pi_over_3_against_dense_oracle():
    theta = pi / 3
    u = sim.dense_unitary_oracle([sim.rot_y(0, theta)], 1)
    psi = u[:, 0]
    oracle = abs(psi[0]) ** 2 - abs(psi[1]) ** 2
    value = sim.expectation_z(sim.apply_gate(sim.init_state(1), sim.rot_y(0, theta)), 0)
    assert value == pytest.approx(oracle, abs=1e-14)
    assert value == pytest.approx(0.5, abs=1e-14)


def test_expectation_on_basis_states_is_exact():
    for index in range(8):
        amps = np.zeros(8, dtype=complex)
        amps[index] = 1
        s = sim.StateVector(3, amps)
        for q in range(3):
            assert sim.expectation_z(s, q) == (-1.0 if (index >> q) & 1 else 1.0)


def test_expectation_invalid_qubit():
    with pytest.raises(SimulationError):
        sim.expectation_z(sim.init_state(2), 2)


# =============================================================================
# Dense oracle
# =============================================================================

def test_oracle_hadamard_squared_is_identity():
    u = sim.dense_unitary_oracle([sim.hadamard(0), sim.hadamard(0)], 1)
    np.testing.assert_allclose(u, np.eye(2), atol=1e-12)


def test_oracle_cnot_squared_is_identity():
    u = sim.dense_unitary_oracle([sim.cnot(0, 1), sim.cnot(0, 1)], 2)
    np.testing.assert_allclose(u, np.eye(4), atol=1e-12)


def test_oracle_random_circuit_is_unitary():
    rng = np.random.default_rng(7)
    u = sim.dense_unitary_oracle(random_gates(rng, 4, 10), 4)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(16), atol=1e-10)


def test_oracle_refuses_large_registers():
    with pytest.raises(SimulationError):
        sim.dense_unitary_oracle([], 7)


def test_sequential_matches_oracle_on_random_circuits():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        gates = random_gates(rng, n, int(rng.integers(0, 21)))
        state = sim.apply_gates(sim.init_state(n), gates)
        expected = sim.dense_unitary_oracle(gates, n)[:, 0]
        assert np.max(np.abs(state.amplitudes - expected)) < 1e-10


# =============================================================================
# Invariants
# =============================================================================

@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_norm_preserved_for_any_gate(seed, n):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n)
    gate = random_gates(rng, n, 1)[0]
    assert abs(sim.apply_gate(s, gate).norm() - 1) < 1e-10


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 4))
def test_involutions(seed, n):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n)
    q, c = (int(x) for x in rng.choice(n, 2, replace=False))
    for gate in (sim.hadamard(q), sim.cnot(c, q)):
        twice = sim.apply_gate(sim.apply_gate(s, gate), gate)
        np.testing.assert_allclose(twice.amplitudes, s.amplitudes, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), theta=st.floats(-10, 10), kind=st.sampled_from(sim.ROTATION_KINDS))
def test_rotation_inverse(seed, theta, kind):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 3)
    q = int(rng.integers(3))
    there = sim.apply_gate(s, sim.GateOp(kind, q, angle=theta))
    back = sim.apply_gate(there, sim.GateOp(kind, q, angle=-theta))
    np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_expectation_in_range(seed, n):
    rng = np.random.default_rng(seed)
    s = random_state(rng, n)
    for q in range(n):
        assert -1.0 <= sim.expectation_z(s, q) <= 1.0


def test_batched_kernel_matches_per_row_application():
    rng = np.random.default_rng(3)
    n, rows = 3, 5
    states = [random_state(rng, n) for _ in range(rows)]
    angles = rng.uniform(-3, 3, rows)
    amps = np.stack([s.amplitudes for s in states])
    sim.apply_rotation_batch(amps, "RX", 2, angles, n)
    for i, s in enumerate(states):
        np.testing.assert_allclose(amps[i], sim.apply_gate(s, sim.rot_x(2, angles[i])).amplitudes, atol=1e-14)
