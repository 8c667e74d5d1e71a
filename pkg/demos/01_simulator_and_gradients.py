"""Statevector simulation and parameter-shift gradients on a small circuit.

Builds the default 4-qubit, depth-2 ansatz, evaluates the Pauli-Z latent
for one set of encoding angles, and compares the parameter-shift jacobian
against central finite differences.
"""
import numpy as np

from qaenas import build_initial_genome, describe_genome, execute, init_params, param_shift_grads
from qaenas import simulator as sim

rng = np.random.default_rng(0)
genome = build_initial_genome(4, 2)
params = init_params(genome, rng)
angles = rng.uniform(-np.pi, np.pi, 4)
print(describe_genome(genome, params))

latent = execute(genome, params, angles)
print("\nlatent <Z_i>:", np.round(latent, 5))

# the same numbers from the explicit 16x16 unitary
from qaenas.circuit import circuit_ops
psi = sim.dense_unitary_oracle(circuit_ops(genome, params, angles), 4)[:, 0]
state = sim.StateVector(4, psi)
print("dense oracle:  ", np.round([sim.expectation_z(state, q) for q in range(4)], 5))

jac_p, jac_a = param_shift_grads(genome, params, angles)
h = 1e-5
fd = np.stack([(execute(genome, params + h * e, angles) - execute(genome, params - h * e, angles)) / (2 * h)
               for e in np.eye(len(params))], axis=1)
print(f"\njacobian d<Z>/dtheta: shape {jac_p.shape}, max |shift - fd| = {np.max(np.abs(jac_p - fd)):.2e}")
print(f"jacobian d<Z>/dangle: shape {jac_a.shape}")
