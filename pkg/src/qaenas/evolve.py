"""
Genetic search over circuit genomes.

Each generation trains the individuals that have no fitness yet, scores
everyone by validation loss, keeps the ``elite_k`` best unchanged and fills
the remaining slots with mutated copies of elite members. Elite members are
never retrained, so their fitness carries over exactly and the best-so-far
loss cannot go up.

All randomness comes from streams keyed by ``(master_seed, generation, slot,
purpose)``. The result therefore does not depend on how training sessions
are spread over worker processes.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from math import pi
from typing import Callable

import numpy as np

from .circuit import (
    DEFAULT_MAX_GENES,
    PARAM_INIT_SCALE,
    ROTATIONS,
    CircuitGenome,
    Gene,
    build_initial_genome,
    genome_to_dict,
)
from .data import Splits, batches
from .errors import ConfigurationError, ContractError, TrainingDivergenceError
from .nn import (
    DEFAULT_ANGLE_SCALE,
    DEFAULT_HIDDEN,
    HybridAutoencoder,
    OptimizerState,
    evaluate,
    init_model,
    train_epoch,
)

logger = logging.getLogger(__name__)

# purpose tags for seed derivation
_INIT, _MUTATE, _PARENT, _TRAIN, _PROBE = range(5)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 10
    elite_k: int = 3
    generations: int = 5
    epochs_per_generation: int = 10
    rot_mutation_rate: float = 0.2
    fixed_gate_mutation_rate: float = 0.2
    param_perturb_sigma: float = 0.1
    max_genes: int = DEFAULT_MAX_GENES
    master_seed: int = 0
    n_qubits: int = 4
    depth: int = 2

    def __post_init__(self):
        if not 0 < self.elite_k < self.population_size:
            raise ConfigurationError(
                f"need 0 < elite_k < population_size, got elite_k={self.elite_k}, population_size={self.population_size}"
            )
        for name in ("rot_mutation_rate", "fixed_gate_mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.param_perturb_sigma < 0:
            raise ConfigurationError("param_perturb_sigma must be >= 0")
        if self.generations < 1 or self.epochs_per_generation < 0:
            raise ConfigurationError("generations must be >= 1 and epochs_per_generation >= 0")
        if self.n_qubits < 2 or self.depth < 1:
            raise ConfigurationError("need n_qubits >= 2 and depth >= 1")
        if self.max_genes < self.depth * (2 * self.n_qubits - 1):
            raise ConfigurationError(f"max_genes={self.max_genes} cannot hold the initial ansatz")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    hidden: int = DEFAULT_HIDDEN
    angle_scale: float = DEFAULT_ANGLE_SCALE
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.hidden < 1 or self.workers < 1:
            raise ConfigurationError(f"invalid training configuration {self}")


def stream(master_seed: int, generation: int, slot: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, generation, slot, purpose])


def derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


@dataclass
class Individual:
    id: int
    model: HybridAutoencoder
    birth_generation: int
    parent_id: int | None = None
    fitness: float | None = None
    test_loss: float | None = None
    mutation_log: list[dict] = field(default_factory=list)
    opt_state: OptimizerState = field(default_factory=OptimizerState)

    @property
    def genome(self) -> CircuitGenome:
        return self.model.genome


# ----------------------------------------------------------------------------
# Population operators
# ----------------------------------------------------------------------------

def init_population(config: GAConfig, train: TrainConfig | None = None, input_dim: int = 784) -> list[Individual]:
    """Generation-1 founders, ids 0..population_size-1."""
    train = train or TrainConfig()
    genome = build_initial_genome(config.n_qubits, config.depth)
    population = []
    for slot in range(config.population_size):
        rng = stream(config.master_seed, 1, slot, _INIT)
        model = init_model(genome, input_dim, rng, hidden=train.hidden, angle_scale=train.angle_scale)
        population.append(Individual(slot, model, birth_generation=1,
                                     opt_state=OptimizerState(learning_rate=train.learning_rate)))
    return population


def select_elite(population: list[Individual], k: int) -> list[int]:
    """Ids of the ``k`` lowest-fitness individuals; ties go to the smaller id."""
    missing = [ind.id for ind in population if ind.fitness is None]
    if missing:
        raise ContractError(f"individuals {missing} have not been evaluated")
    if not 0 < k <= len(population):
        raise ContractError(f"k={k} out of range for population of {len(population)}")
    ranked = sorted(population, key=lambda ind: (ind.fitness, ind.id))
    return [ind.id for ind in ranked[:k]]


def mutate(genome: CircuitGenome, q_params, rng: np.random.Generator, config: GAConfig):
    """Apply the four mutation operators; returns ``(genome, q_params, log)``.

    Rotation genes are never added or removed, so ``n_params`` is unchanged.
    """
    n = genome.n_qubits
    genes = list(genome.genes)
    params = np.array(q_params, dtype=np.float64, copy=True)
    log: list[dict] = []
    rate = config.rot_mutation_rate

    # (a) gate replacement: new axis or new qubit, parameter restarted
    for i, g in enumerate(genes):
        if not g.is_rotation or rng.random() >= rate:
            continue
        if rng.random() < 0.5:
            choices = [a for a in ROTATIONS if a != g.kind]
            new = replace(g, kind=choices[int(rng.integers(len(choices)))])
            log.append({"op": "replace_axis", "gene": i, "slot": g.param_slot, "from": g.kind, "to": new.kind})
        else:
            new = replace(g, qubit=int(rng.integers(n)))
            log.append({"op": "reassign_qubit", "gene": i, "slot": g.param_slot, "from": g.qubit, "to": new.qubit})
        genes[i] = new
        params[g.param_slot] = rng.uniform(-PARAM_INIT_SCALE, PARAM_INIT_SCALE)

    # (b) parameter adjustment
    for i, g in enumerate(genes):
        if not g.is_rotation or rng.random() >= rate:
            continue
        delta = float(rng.normal(0.0, config.param_perturb_sigma))
        params[g.param_slot] += delta
        log.append({"op": "perturb_param", "gene": i, "slot": g.param_slot, "delta": delta})

    # (c) insert a fixed gate
    if rng.random() < config.fixed_gate_mutation_rate:
        if len(genes) >= config.max_genes:
            log.append({"op": "insert_skipped", "reason": f"genome at cap of {config.max_genes} genes"})
        else:
            pos = int(rng.integers(len(genes) + 1))
            if rng.random() < 0.5:
                gene = Gene("H", int(rng.integers(n)))
            else:
                control, target = (int(q) for q in rng.choice(n, size=2, replace=False))
                gene = Gene("CNOT", target, control=control)
            genes.insert(pos, gene)
            log.append({"op": "insert", "gene": pos, "kind": gene.kind, "qubit": gene.qubit, "control": gene.control})

    # (d) delete a fixed gate
    if rng.random() < config.fixed_gate_mutation_rate:
        fixed = [i for i, g in enumerate(genes) if not g.is_rotation]
        if not fixed:
            log.append({"op": "delete_noop", "reason": "no non-parameterized gates"})
        else:
            pos = fixed[int(rng.integers(len(fixed)))]
            gone = genes.pop(pos)
            log.append({"op": "delete", "gene": pos, "kind": gone.kind, "qubit": gone.qubit, "control": gone.control})

    new_genome = CircuitGenome(n, tuple(genes), genome.n_params).validate(config.max_genes)
    return new_genome, params, log


def offspring_id(config: GAConfig, generation: int, j: int) -> int:
    """Ids are a pure function of (generation, offspring index)."""
    n_off = config.population_size - config.elite_k
    return config.population_size + (generation - 2) * n_off + j


def next_generation(population: list[Individual], config: GAConfig, generation: int) -> list[Individual]:
    """Build generation ``generation`` from the evaluated previous one.

    Offspring start from the parent's trained weights with a fresh Adam state.
    """
    by_id = {ind.id: ind for ind in population}
    elite_ids = select_elite(population, config.elite_k)
    new_pop = [replace(by_id[i], mutation_log=list(by_id[i].mutation_log)) for i in elite_ids]
    for j in range(config.population_size - config.elite_k):
        slot = config.elite_k + j
        parent = by_id[elite_ids[int(stream(config.master_seed, generation, slot, _PARENT).integers(config.elite_k))]]
        rng = stream(config.master_seed, generation, slot, _MUTATE)
        genome, q_params, log = mutate(parent.genome, parent.model.q_params, rng, config)
        if not log:
            log = [{"op": "no-op"}]
        new_pop.append(Individual(
            offspring_id(config, generation, j),
            parent.model.with_circuit(genome, q_params),
            birth_generation=generation,
            parent_id=parent.id,
            mutation_log=log,
            opt_state=OptimizerState(learning_rate=parent.opt_state.learning_rate),
        ))
    return new_pop


# ----------------------------------------------------------------------------
# Training sessions
# ----------------------------------------------------------------------------

RECORD_FIELDS = (
    "kind", "generation", "individual", "parent", "genome_hash",
    "n_H", "n_CNOT", "n_ROT_X", "n_ROT_Y", "n_ROT_Z",
    "epoch", "train_loss", "val_loss", "test_loss", "retained", "wall_time",
)


def _record(kind: str, generation: int, ind: Individual, **values) -> dict:
    counts = ind.genome.gate_counts()
    rec = {
        "kind": kind, "generation": generation, "individual": ind.id, "parent": ind.parent_id,
        "genome_hash": ind.genome.digest(),
        "n_H": counts["H"], "n_CNOT": counts["CNOT"],
        "n_ROT_X": counts["ROT_X"], "n_ROT_Y": counts["ROT_Y"], "n_ROT_Z": counts["ROT_Z"],
        "epoch": None, "train_loss": None, "val_loss": None, "test_loss": None,
        "retained": None, "wall_time": 0.0,
    }
    rec.update(values)
    return rec


def _finite_or_none(x: float | None) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)


def train_individual(ind: Individual, config: GAConfig, train: TrainConfig, splits: Splits,
                     generation: int) -> tuple[Individual, list[dict]]:
    """Train for ``epochs_per_generation`` epochs, then score on val and test.

    A non-finite value anywhere sets fitness to +inf; the model is left at its
    last finite state.
    """
    model, state = ind.model, ind.opt_state
    images = splits.train.images
    records = []
    val_loss = None
    try:
        for epoch in range(1, config.epochs_per_generation + 1):
            t0 = time.perf_counter()
            seed = derived_seed(config.master_seed, generation, ind.id, _TRAIN, epoch)
            model, state, train_loss = train_epoch(model, state, images, batches(len(images), train.batch_size, seed))
            val_loss = evaluate(model, splits.val.images)
            records.append(_record("train", generation, ind, epoch=epoch, train_loss=train_loss,
                                   val_loss=val_loss, wall_time=time.perf_counter() - t0))
        if val_loss is None:
            val_loss = evaluate(model, splits.val.images)
        test_loss = evaluate(model, splits.test.images) if len(splits.test) else None
        trained = replace(ind, model=model, opt_state=state, fitness=val_loss, test_loss=test_loss)
    except TrainingDivergenceError as exc:
        exc = exc.with_context(generation=generation, individual=ind.id, epoch=len(records) + 1)
        logger.warning("%s; fitness set to +inf", exc)
        trained = replace(ind, model=model, opt_state=state, fitness=math.inf, test_loss=None)
    return trained, records


_WORKER_SPLITS: Splits | None = None


def _worker_init(splits: Splits) -> None:
    global _WORKER_SPLITS
    _WORKER_SPLITS = splits


def _worker_train(args):
    ind, config, train, generation = args
    return train_individual(ind, config, train, _WORKER_SPLITS, generation)


def _train_many(individuals, config, train, splits, generation, pool):
    if pool is None:
        return [train_individual(ind, config, train, splits, generation) for ind in individuals]
    return list(pool.map(_worker_train, [(ind, config, train, generation) for ind in individuals]))


# ----------------------------------------------------------------------------
# Generation loop
# ----------------------------------------------------------------------------

@dataclass
class GenerationSummary:
    generation: int
    best_id: int
    best_val_loss: float
    best_so_far: float
    elite_ids: list[int]
    trained_ids: list[int]
    mean_val_loss: float | None
    mean_test_loss_all: float | None
    mean_test_loss_trained: float | None

    def to_dict(self) -> dict:
        return {k: _finite_or_none(v) if isinstance(v, float) else v for k, v in self.__dict__.items()}


@dataclass
class ResumeState:
    generation: int                  # last completed generation
    population: list[Individual]
    history: list[GenerationSummary]


@dataclass
class EvolutionReport:
    best: Individual
    history: list[GenerationSummary]
    population: list[Individual]
    records: list[dict]
    training_sessions: int

    def to_dict(self, include_wall_time: bool = True) -> dict:
        records = self.records if include_wall_time else [
            {**r, "wall_time": None} for r in self.records
        ]
        return {
            "best": {
                "id": self.best.id,
                "fitness": _finite_or_none(self.best.fitness),
                "test_loss": _finite_or_none(self.best.test_loss),
                "birth_generation": self.best.birth_generation,
                "parent_id": self.best.parent_id,
                "genome": genome_to_dict(self.best.genome),
            },
            "history": [h.to_dict() for h in self.history],
            "training_sessions": self.training_sessions,
            "records": records,
        }


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def run_evolution(
    config: GAConfig,
    train: TrainConfig,
    splits: Splits,
    *,
    on_record: Callable[[dict], None] | None = None,
    on_generation: Callable[[int, list[Individual], list[GenerationSummary]], None] | None = None,
    resume: ResumeState | None = None,
) -> EvolutionReport:
    """Run the full search and return the best individual plus history."""
    input_dim = splits.train.images.shape[1]
    if resume is None:
        population = init_population(config, train, input_dim)
        history: list[GenerationSummary] = []
        start = 1
    else:
        history = list(resume.history)
        start = resume.generation + 1
        population = (next_generation(resume.population, config, start)
                      if start <= config.generations else list(resume.population))

    records: list[dict] = []
    sessions = 0
    pool = ProcessPoolExecutor(train.workers, initializer=_worker_init, initargs=(splits,)) if train.workers > 1 else None
    try:
        for g in range(start, config.generations + 1):
            pending = [ind for ind in population if ind.fitness is None]
            done = {}
            gen_records = []
            for (trained, recs), before in zip(_train_many(pending, config, train, splits, g, pool), pending):
                done[before.id] = trained
                gen_records += recs
            sessions += len(pending)
            population = [done.get(ind.id, ind) for ind in population]

            gen_records.sort(key=lambda r: (r["individual"], r["epoch"]))
            for ind in sorted(population, key=lambda i: i.id):
                gen_records.append(_record(
                    "eval", g, ind, val_loss=_finite_or_none(ind.fitness), test_loss=ind.test_loss,
                    retained=ind.id not in done,
                    wall_time=sum(r["wall_time"] for r in gen_records if r["individual"] == ind.id and r["kind"] == "train"),
                ))
            for rec in gen_records:
                if on_record is not None:
                    on_record(rec)
            records += gen_records

            elite = select_elite(population, config.elite_k)
            best = next(ind for ind in population if ind.id == elite[0])
            prev_best = history[-1].best_so_far if history else math.inf
            summary = GenerationSummary(
                generation=g,
                best_id=best.id,
                best_val_loss=best.fitness,
                best_so_far=min(prev_best, best.fitness),
                elite_ids=elite,
                trained_ids=sorted(done),
                mean_val_loss=_mean(ind.fitness for ind in population),
                mean_test_loss_all=_mean(ind.test_loss for ind in population),
                mean_test_loss_trained=_mean(done[i].test_loss for i in done),
            )
            history.append(summary)
            logger.info("generation %d: best id %d val %.5f (trained %d)", g, best.id, best.fitness, len(done))
            if on_generation is not None:
                on_generation(g, population, history)
            if g < config.generations:
                population = next_generation(population, config, g + 1)
    finally:
        if pool is not None:
            pool.shutdown()

    best_id = select_elite(population, 1)[0]
    best = next(ind for ind in population if ind.id == best_id)
    return EvolutionReport(best, history, population, records, sessions)


# ----------------------------------------------------------------------------
# Entanglement probe
# ----------------------------------------------------------------------------

def append_random_cnots(genome: CircuitGenome, count: int, rng: np.random.Generator) -> CircuitGenome:
    genes = list(genome.genes)
    for _ in range(count):
        control, target = (int(q) for q in rng.choice(genome.n_qubits, size=2, replace=False))
        genes.append(Gene("CNOT", target, control=control))
    return CircuitGenome(genome.n_qubits, tuple(genes), genome.n_params)


def entanglement_probe(config: GAConfig, train: TrainConfig, splits: Splits, extra_cnots: int = 12) -> dict:
    """Train the founder genome with and without ``extra_cnots`` appended CNOTs.

    Both runs share the initial weights and batch order, so the only
    difference is the circuit. No verdict is drawn; both losses are returned.
    """
    founder = init_population(replace(config, population_size=max(2, config.elite_k + 1)), train,
                              splits.train.images.shape[1])[0]
    extra = append_random_cnots(founder.genome, extra_cnots, stream(config.master_seed, 0, 0, _PROBE))
    probe_cfg = replace(config, max_genes=max(config.max_genes, len(extra.genes)))
    results = {}
    for label, genome in (("baseline", founder.genome), ("entangled", extra)):
        ind = replace(founder, model=founder.model.with_circuit(genome, founder.model.q_params))
        trained, recs = train_individual(ind, probe_cfg, train, splits, generation=1)
        results[label] = {
            "genome": genome_to_dict(genome),
            "val_loss": _finite_or_none(trained.fitness),
            "test_loss": trained.test_loss,
            "train_curve": [r["train_loss"] for r in recs],
        }
    base, ent = results["baseline"]["val_loss"], results["entangled"]["val_loss"]
    results["extra_cnots"] = extra_cnots
    results["relative_change"] = None if not base or ent is None else (ent - base) / base
    return results
