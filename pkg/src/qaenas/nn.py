"""
Hybrid autoencoder: dense encoder -> VQC latent -> dense decoder.

    x --enc1 (ReLU)--> h --enc2 (tanh)--> t --*angle_scale--> angles
      --VQC(genome, q_params)--> latent = <Z> --dec1 (ReLU)--> --dec2 (sigmoid)--> recon

Backpropagation is written out by hand. The quantum block contributes the
parameter-shift jacobians from :mod:`qaenas.circuit`. The loss is the batch
mean of the per-sample squared error summed over pixels.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import pi, sqrt

import numpy as np

from .circuit import CircuitGenome, execute_batch, init_params, param_shift_grads_batch
from .errors import ContractError, TrainingDivergenceError

ACTIVATIONS = ("RECTIFIER", "TANH", "SIGMOID", "IDENTITY")
DEFAULT_HIDDEN = 64
DEFAULT_ANGLE_SCALE = pi
LAYER_NAMES = ("enc1", "enc2", "dec1", "dec2")


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "RECTIFIER":
        return np.maximum(z, 0.0)
    if kind == "TANH":
        return np.tanh(z)
    if kind == "SIGMOID":
        # split by sign so exp never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_grad(kind: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the activation, expressed via pre- (z) or post- (y) values."""
    if kind == "RECTIFIER":
        return (z > 0).astype(z.dtype)
    if kind == "TANH":
        return 1.0 - y * y
    if kind == "SIGMOID":
        return y * (1.0 - y)
    return np.ones_like(z)


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)
    activation: str = "IDENTITY"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ContractError(f"inconsistent layer shapes {self.weights.shape} / {self.biases.shape}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def glorot(cls, fan_in: int, fan_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        limit = sqrt(6.0 / (fan_in + fan_out))
        return cls(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out), activation)

    def __call__(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = x @ self.weights.T + self.biases
        return z, _activate(self.activation, z)


@dataclass(frozen=True, eq=False)
class HybridAutoencoder:
    enc1: DenseLayer
    enc2: DenseLayer
    genome: CircuitGenome
    q_params: np.ndarray
    dec1: DenseLayer
    dec2: DenseLayer
    angle_scale: float = DEFAULT_ANGLE_SCALE

    def __post_init__(self):
        n = self.genome.n_qubits
        if self.enc2.fan_out != n or self.dec1.fan_in != n:
            raise ContractError(
                f"encoder output ({self.enc2.fan_out}) and decoder input ({self.dec1.fan_in}) must equal n_qubits ({n})"
            )
        if self.enc1.fan_out != self.enc2.fan_in or self.dec1.fan_out != self.dec2.fan_in:
            raise ContractError("hidden layer widths do not chain")
        if np.shape(self.q_params) != (self.genome.n_params,):
            raise ContractError(f"q_params must have length {self.genome.n_params}")

    @property
    def input_dim(self) -> int:
        return self.enc1.fan_in

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name in LAYER_NAMES:
            layer = getattr(self, name)
            out[f"{name}.weights"] = layer.weights
            out[f"{name}.biases"] = layer.biases
        out["q_params"] = self.q_params
        return out

    def with_parameters(self, params: dict[str, np.ndarray]) -> "HybridAutoencoder":
        changes = {
            name: replace(getattr(self, name), weights=params[f"{name}.weights"], biases=params[f"{name}.biases"])
            for name in LAYER_NAMES
        }
        return replace(self, q_params=params["q_params"], **changes)

    def with_circuit(self, genome: CircuitGenome, q_params: np.ndarray) -> "HybridAutoencoder":
        return replace(self, genome=genome, q_params=np.asarray(q_params, dtype=np.float64))

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


def init_model(
    genome: CircuitGenome,
    input_dim: int,
    rng: np.random.Generator,
    hidden: int = DEFAULT_HIDDEN,
    angle_scale: float = DEFAULT_ANGLE_SCALE,
) -> HybridAutoencoder:
    n = genome.n_qubits
    # draw order is part of the determinism contract
    enc1 = DenseLayer.glorot(input_dim, hidden, "RECTIFIER", rng)
    enc2 = DenseLayer.glorot(hidden, n, "TANH", rng)
    q_params = init_params(genome, rng)
    dec1 = DenseLayer.glorot(n, hidden, "RECTIFIER", rng)
    dec2 = DenseLayer.glorot(hidden, input_dim, "SIGMOID", rng)
    return HybridAutoencoder(enc1, enc2, genome, q_params, dec1, dec2, angle_scale)


@dataclass(eq=False)
class ForwardCache:
    model: HybridAutoencoder
    x: np.ndarray
    pre: dict[str, np.ndarray]
    post: dict[str, np.ndarray]
    angles: np.ndarray
    latent: np.ndarray
    single: bool


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ContractError(f"expected a vector or a batch matrix, got shape {x.shape}")
    return x, False


def _check_finite(values: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(values)):
        raise TrainingDivergenceError(f"non-finite values at {stage}")


def forward(model: HybridAutoencoder, x) -> tuple[np.ndarray, ForwardCache]:
    """Reconstruct ``x`` (one vector or a batch of rows)."""
    xb, single = _as_batch(x)
    if xb.shape[1] != model.input_dim:
        raise ContractError(f"input width {xb.shape[1]} != model input {model.input_dim}")
    if xb.size and (xb.min() < 0.0 or xb.max() > 1.0):
        raise ContractError("inputs must lie in [0, 1]")
    pre, post = {}, {}
    h = xb
    for name in ("enc1", "enc2"):
        pre[name], h = getattr(model, name)(h)
        post[name] = h
        # saturating activations would hide an overflow, so check before them
        _check_finite(pre[name], name)
    angles = model.angle_scale * h
    latent = execute_batch(model.genome, model.q_params, angles)
    h = latent
    for name in ("dec1", "dec2"):
        pre[name], h = getattr(model, name)(h)
        post[name] = h
        _check_finite(pre[name], name)
    recon = h
    cache = ForwardCache(model, xb, pre, post, angles, latent, single)
    return (recon[0] if single else recon), cache


def mse_loss(reconstructions, originals) -> float:
    """Mean over the batch of the squared L2 error summed over pixels."""
    r, _ = _as_batch(reconstructions)
    o, _ = _as_batch(originals)
    if r.shape != o.shape:
        raise ContractError(f"shape mismatch {r.shape} vs {o.shape}")
    if r.shape[0] == 0:
        raise ContractError("empty batch")
    diff = r - o
    return float(np.einsum("ij,ij->", diff, diff) / r.shape[0])


def backward(model: HybridAutoencoder, cache: ForwardCache, x) -> dict[str, np.ndarray]:
    """Gradients of ``mse_loss(forward(model, input), x)`` for every parameter.

    ``x`` is the reconstruction target. For an autoencoder it is the same
    array that went through :func:`forward`.
    """
    if cache.model is not model:
        raise ContractError("cache was produced by a different model")
    target, _ = _as_batch(x)
    if target.shape != cache.x.shape:
        raise ContractError(f"target shape {target.shape} != cached input shape {cache.x.shape}")
    batch = target.shape[0]
    pre, post = cache.pre, cache.post
    grads: dict[str, np.ndarray] = {}

    def dense_back(name: str, layer: DenseLayer, layer_in: np.ndarray, d_out: np.ndarray) -> np.ndarray:
        dz = d_out * _activation_grad(layer.activation, pre[name], post[name])
        grads[f"{name}.weights"] = dz.T @ layer_in
        grads[f"{name}.biases"] = dz.sum(axis=0)
        return dz @ layer.weights

    d_recon = 2.0 * (post["dec2"] - target) / batch
    d_h = dense_back("dec2", model.dec2, post["dec1"], d_recon)
    d_latent = dense_back("dec1", model.dec1, cache.latent, d_h)

    jac_params, jac_angles = param_shift_grads_batch(model.genome, model.q_params, cache.angles)
    grads["q_params"] = np.einsum("bi,bip->p", d_latent, jac_params)
    d_angles = np.einsum("bi,bij->bj", d_latent, jac_angles)

    d_h = dense_back("enc2", model.enc2, post["enc1"], d_angles * model.angle_scale)
    dense_back("enc1", model.enc1, cache.x, d_h)
    for name, g in grads.items():
        _check_finite(g, f"gradient of {name}")
    return grads


# ----------------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------------

@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    if set(params) != set(grads):
        raise ContractError(f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}")
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise ContractError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(params[name])} for {name}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f"non-finite gradient for {name}", step=state.step + 1)

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    step_size = state.learning_rate / (1.0 - b1 ** t)
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * (g * g)
        new_params[name] = p - step_size * m / (np.sqrt(v / bc2) + state.epsilon)
        new_m[name], new_v[name] = m, v
    new_state = replace(state, step=t, m=new_m, v=new_v)
    return new_params, new_state


# ----------------------------------------------------------------------------
# Training helpers
# ----------------------------------------------------------------------------

def train_step(model: HybridAutoencoder, state: OptimizerState, xb: np.ndarray):
    """Forward, backward and update on one batch. Returns the pre-update loss."""
    recon, cache = forward(model, xb)
    loss = mse_loss(recon, xb)
    grads = backward(model, cache, xb)
    new_params, state = optimizer_step(state, model.parameters(), grads)
    return model.with_parameters(new_params), state, loss


def train_epoch(model: HybridAutoencoder, state: OptimizerState, images: np.ndarray, batch_indices):
    """Run every batch once; the reported loss is the sample-weighted batch mean."""
    total, count = 0.0, 0
    for idx in batch_indices:
        model, state, loss = train_step(model, state, images[idx])
        total += loss * len(idx)
        count += len(idx)
    return model, state, total / max(count, 1)


def evaluate(model: HybridAutoencoder, images: np.ndarray, chunk: int = 1024) -> float:
    """Reconstruction loss over a whole split (no parameter updates)."""
    if len(images) == 0:
        raise ContractError("cannot evaluate on an empty split")
    total = 0.0
    for start in range(0, len(images), chunk):
        xb = images[start:start + chunk]
        recon, _ = forward(model, xb)
        total += mse_loss(recon, xb) * len(xb)
    return total / len(images)
