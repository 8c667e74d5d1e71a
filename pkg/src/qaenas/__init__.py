"""Genetic architecture search for hybrid quantum-classical autoencoders."""
from .circuit import (
    CircuitGenome,
    Gene,
    build_initial_genome,
    describe_genome,
    deserialize_genome,
    execute,
    init_params,
    param_shift_grads,
    serialize_genome,
)
from .data import ImageDataset, SplitSpec, Splits, batches, load_idx_images, load_splits, split
from .errors import (
    ConfigurationError,
    ContractError,
    GenomeParseError,
    IDXFormatError,
    QAENASError,
    SimulationError,
    TrainingDivergenceError,
)
from .evolve import (
    GAConfig,
    Individual,
    TrainConfig,
    entanglement_probe,
    mutate,
    next_generation,
    run_evolution,
    select_elite,
)
from .nn import (
    HybridAutoencoder,
    OptimizerState,
    backward,
    evaluate,
    forward,
    init_model,
    mse_loss,
    optimizer_step,
    train_epoch,
)
from .runner import RunConfig, parse_config, run
from .simulator import GateOp, StateVector, apply_gate, dense_unitary_oracle, expectation_z, init_state

__version__ = "0.1.0"
