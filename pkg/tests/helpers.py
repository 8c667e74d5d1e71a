"""Shared random generators for tests."""
import numpy as np

from qaenas import simulator as sim
from qaenas.circuit import ROTATIONS, CircuitGenome, Gene


def random_gates(rng: np.random.Generator, n_qubits: int, count: int) -> list[sim.GateOp]:
    gates = []
    kinds = ["H", "RX", "RY", "RZ"] + (["CNOT"] if n_qubits > 1 else [])
    for _ in range(count):
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "CNOT":
            c, t = (int(q) for q in rng.choice(n_qubits, 2, replace=False))
            gates.append(sim.cnot(c, t))
        elif kind == "H":
            gates.append(sim.hadamard(int(rng.integers(n_qubits))))
        else:
            gates.append(sim.GateOp(kind, int(rng.integers(n_qubits)), angle=float(rng.uniform(-np.pi, np.pi))))
    return gates


def random_state(rng: np.random.Generator, n_qubits: int) -> sim.StateVector:
    amps = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    return sim.StateVector(n_qubits, amps / np.linalg.norm(amps))


def random_genome(rng: np.random.Generator, n_qubits: int, max_genes: int = 16) -> CircuitGenome:
    """Random valid genome with at least one rotation gene."""
    n_genes = int(rng.integers(1, max_genes + 1))
    genes, slot = [], 0
    for i in range(n_genes):
        roll = rng.random()
        if roll < 0.6 or i == 0:
            genes.append(Gene(ROTATIONS[int(rng.integers(3))], int(rng.integers(n_qubits)), param_slot=slot))
            slot += 1
        elif roll < 0.8 or n_qubits < 2:
            genes.append(Gene("H", int(rng.integers(n_qubits))))
        else:
            c, t = (int(q) for q in rng.choice(n_qubits, 2, replace=False))
            genes.append(Gene("CNOT", t, control=c))
    # shuffle slot assignment so slots are not in gene order
    perm = rng.permutation(slot)
    genes = [Gene(g.kind, g.qubit, g.control, int(perm[g.param_slot])) if g.is_rotation else g for g in genes]
    return CircuitGenome(n_qubits, tuple(genes), slot)


def tiny_model(seed: int = 0):
    """Input 8, hidden 6, 2 qubits, depth 1, with non-trivial weights everywhere."""
    from qaenas.circuit import build_initial_genome
    from qaenas.nn import init_model

    rng = np.random.default_rng(seed)
    model = init_model(build_initial_genome(2, 1), 8, rng, hidden=6)
    # spread q_params so the circuit is far from its small-angle start
    model = model.with_circuit(model.genome, rng.uniform(-np.pi, np.pi, model.genome.n_params))
    x = rng.uniform(0.0, 1.0, size=(3, 8))
    return model, x


def fd_gradient_errors(model, x, h: float = 1e-4) -> dict[str, float]:
    """Max relative error per parameter array between backward and central differences."""
    from qaenas.nn import backward, forward, mse_loss

    def loss(m):
        recon, _ = forward(m, x)
        return mse_loss(recon, x)

    _, cache = forward(model, x)
    analytic = backward(model, cache, x)
    params = model.parameters()
    worst = {}
    for name, arr in params.items():
        errs = []
        for idx in np.ndindex(arr.shape):
            up, down = arr.copy(), arr.copy()
            up[idx] += h
            down[idx] -= h
            fd = (loss(model.with_parameters({**params, name: up}))
                  - loss(model.with_parameters({**params, name: down}))) / (2 * h)
            a = analytic[name][idx]
            errs.append(abs(a - fd) / max(abs(fd), 1e-6))
        worst[name] = max(errs)
    return worst
