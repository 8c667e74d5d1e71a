"""
Run orchestration: configuration, metrics streams, checkpoints, resume and
reconstruction dumps.

Output directory layout::

    config.json            fully resolved configuration (flat dotted keys)
    metrics.jsonl          one JSON object per training epoch / evaluation
    metrics.csv            the same records as CSV
    genomes/gen{g}/        genome JSON of every individual in generation g
    checkpoints/gen{g}/    resumable state at the end of generation g
    best/                  best individual: model.npz, genome.json, summary.json
    recon/                 PGM images of originals and reconstructions
    report.json            per-generation history and the best genome
"""
from __future__ import annotations

import csv
import json
import logging
import shutil
from dataclasses import dataclass, field
from math import pi
from pathlib import Path

import numpy as np

from .circuit import deserialize_genome, serialize_genome
from .data import IMAGE_SIDE, DATASET_KINDS, SplitSpec, Splits, load_splits
from .errors import ConfigurationError, ContractError, QAENASError
from .evolve import (
    RECORD_FIELDS,
    EvolutionReport,
    GAConfig,
    GenerationSummary,
    Individual,
    ResumeState,
    TrainConfig,
    run_evolution,
)
from .nn import LAYER_NAMES, DenseLayer, HybridAutoencoder, OptimizerState, forward

logger = logging.getLogger(__name__)

DEFAULTS: dict = {
    "seed": 0,
    "ga.population_size": 10,
    "ga.elite_k": 3,
    "ga.generations": 5,
    "ga.epochs_per_generation": 10,
    "ga.rot_mutation_rate": 0.2,
    "ga.fixed_gate_mutation_rate": 0.2,
    "ga.param_perturb_sigma": 0.1,
    "ga.max_genes": 64,
    "circuit.n_qubits": 4,
    "circuit.depth": 2,
    "model.hidden": 64,
    "model.angle_scale": pi,
    "train.batch_size": 256,
    "train.learning_rate": 1e-3,
    "train.workers": 1,
    "dataset.path": None,
    "dataset.test_path": None,
    "dataset.kind": "MNIST",
    "split.fractions": [0.9, 0.1, 0.0],
    "split.seed": 0,
    "split.caps": [2000, 500, 500],
    "output.dir": "runs/latest",
    "recon.samples": 8,
}

_INT_KEYS = {k for k, v in DEFAULTS.items() if type(v) is int}
_FLOAT_KEYS = {k for k, v in DEFAULTS.items() if type(v) is float}
_PATH_KEYS = {"dataset.path", "dataset.test_path", "output.dir"}


@dataclass(frozen=True)
class RunConfig:
    ga: GAConfig
    train: TrainConfig
    split: SplitSpec
    dataset_path: str | None
    test_path: str | None
    dataset_kind: str
    output_dir: str
    recon_samples: int
    flat: dict = field(repr=False, default_factory=dict)

    @property
    def master_seed(self) -> int:
        return self.ga.master_seed


def _check_value(key: str, value):
    if key in _INT_KEYS:
        if type(value) is not int:
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    elif key in _FLOAT_KEYS:
        if type(value) not in (int, float):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        value = float(value)
    elif key in _PATH_KEYS:
        if value is not None and not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a path string or null, got {value!r}")
    elif key == "dataset.kind":
        if value not in DATASET_KINDS:
            raise ConfigurationError(f"{key}: expected one of {DATASET_KINDS}, got {value!r}")
    elif key in ("split.fractions", "split.caps"):
        if not isinstance(value, list) or len(value) != 3:
            raise ConfigurationError(f"{key}: expected a list of three values, got {value!r}")
    return value


def resolve_config(values: dict) -> RunConfig:
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"unknown config keys {unknown}; valid keys: {sorted(DEFAULTS)}")
    flat = dict(DEFAULTS)
    for key, value in values.items():
        flat[key] = _check_value(key, value)
    try:
        ga = GAConfig(
            population_size=flat["ga.population_size"],
            elite_k=flat["ga.elite_k"],
            generations=flat["ga.generations"],
            epochs_per_generation=flat["ga.epochs_per_generation"],
            rot_mutation_rate=flat["ga.rot_mutation_rate"],
            fixed_gate_mutation_rate=flat["ga.fixed_gate_mutation_rate"],
            param_perturb_sigma=flat["ga.param_perturb_sigma"],
            max_genes=flat["ga.max_genes"],
            master_seed=flat["seed"],
            n_qubits=flat["circuit.n_qubits"],
            depth=flat["circuit.depth"],
        )
        train = TrainConfig(
            batch_size=flat["train.batch_size"],
            learning_rate=flat["train.learning_rate"],
            hidden=flat["model.hidden"],
            angle_scale=flat["model.angle_scale"],
            workers=flat["train.workers"],
        )
        split = SplitSpec(tuple(flat["split.fractions"]), flat["split.seed"], tuple(flat["split.caps"]))
    except ContractError as exc:
        raise ConfigurationError(str(exc)) from None
    if flat["recon.samples"] < 0:
        raise ConfigurationError("recon.samples must be >= 0")
    return RunConfig(ga, train, split, flat["dataset.path"], flat["dataset.test_path"],
                     flat["dataset.kind"], flat["output.dir"], flat["recon.samples"], flat)


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    values: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        if text.strip():
            try:
                values = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
            if not isinstance(values, dict):
                raise ConfigurationError(f"{path}: top level must be a JSON object")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolve_config(values)


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

class MetricsWriter:
    """Single writer for metrics.jsonl and metrics.csv."""

    def __init__(self, out_dir: Path):
        self.jsonl = open(out_dir / "metrics.jsonl", "w", encoding="utf-8")
        self.csv_file = open(out_dir / "metrics.csv", "w", encoding="utf-8", newline="")
        self.csv = csv.DictWriter(self.csv_file, fieldnames=RECORD_FIELDS)
        self.csv.writeheader()
        self.count = 0

    def write(self, record: dict) -> None:
        self.jsonl.write(json.dumps(record) + "\n")
        self.csv.writerow({k: "" if record[k] is None else record[k] for k in RECORD_FIELDS})
        self.count += 1

    def flush(self) -> None:
        self.jsonl.flush()
        self.csv_file.flush()

    def close(self) -> None:
        self.jsonl.close()
        self.csv_file.close()


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def mask_wall_time(records: list[dict]) -> list[dict]:
    return [{**r, "wall_time": None} for r in records]


# ----------------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------------

def save_individual(path, ind: Individual) -> Path:
    """One .npz per individual: genome JSON, parameters and Adam moments."""
    model, state = ind.model, ind.opt_state
    arrays = {"genome_json": np.array(serialize_genome(model.genome))}
    for name, arr in model.parameters().items():
        arrays[f"param/{name}"] = arr
        if name in state.m:
            arrays[f"adam_m/{name}"] = state.m[name]
            arrays[f"adam_v/{name}"] = state.v[name]
    meta = {
        "id": ind.id, "parent_id": ind.parent_id, "birth_generation": ind.birth_generation,
        "fitness": ind.fitness, "test_loss": ind.test_loss, "mutation_log": ind.mutation_log,
        "angle_scale": model.angle_scale,
        "activations": {n: getattr(model, n).activation for n in LAYER_NAMES},
        "optimizer": {"learning_rate": state.learning_rate, "beta1": state.beta1, "beta2": state.beta2,
                      "epsilon": state.epsilon, "step": state.step},
        "shapes": {k: list(v.shape) for k, v in arrays.items() if k != "genome_json"},
    }
    arrays["meta_json"] = np.array(json.dumps(meta))
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_individual(path) -> Individual:
    with np.load(path, allow_pickle=False) as npz:
        data = {k: npz[k] for k in npz.files}
    meta = json.loads(str(data["meta_json"]))
    genome = deserialize_genome(str(data["genome_json"]), max_genes=10**6)
    for key, shape in meta["shapes"].items():
        if list(data[key].shape) != shape:
            raise ContractError(f"{path}: {key} has shape {data[key].shape}, declared {shape}")
    layers = {
        n: DenseLayer(data[f"param/{n}.weights"], data[f"param/{n}.biases"], meta["activations"][n])
        for n in LAYER_NAMES
    }
    model = HybridAutoencoder(layers["enc1"], layers["enc2"], genome, data["param/q_params"],
                              layers["dec1"], layers["dec2"], meta["angle_scale"])
    opt = meta["optimizer"]
    state = OptimizerState(
        opt["learning_rate"], opt["beta1"], opt["beta2"], opt["epsilon"], opt["step"],
        m={k[len("adam_m/"):]: v for k, v in data.items() if k.startswith("adam_m/")},
        v={k[len("adam_v/"):]: v for k, v in data.items() if k.startswith("adam_v/")},
    )
    return Individual(meta["id"], model, meta["birth_generation"], meta["parent_id"], meta["fitness"],
                      meta["test_loss"], meta["mutation_log"], state)


def write_checkpoint(ckpt_dir: Path, generation: int, population, history, config: RunConfig,
                     metrics_path: Path) -> Path:
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for ind in population:
        save_individual(ckpt_dir / f"ind{ind.id}.npz", ind)
    state = {
        "generation": generation,
        "population": [ind.id for ind in population],
        "history": [h.__dict__ for h in history],
        "config": config.flat,
    }
    (ckpt_dir / "state.json").write_text(json.dumps(state, indent=2), encoding="utf-8")
    shutil.copyfile(metrics_path, ckpt_dir / "metrics.jsonl")
    return ckpt_dir


def find_checkpoint(path) -> Path:
    """Accept a checkpoint directory or a run directory (latest checkpoint)."""
    path = Path(path)
    if (path / "state.json").exists():
        return path
    gens = sorted((path / "checkpoints").glob("gen*"), key=lambda p: int(p.name[3:]))
    if not gens:
        raise ConfigurationError(f"no checkpoint found under {path}")
    return gens[-1]


def load_checkpoint(path) -> tuple[ResumeState, dict, list[dict]]:
    ckpt = find_checkpoint(path)
    state = json.loads((ckpt / "state.json").read_text(encoding="utf-8"))
    population = [load_individual(ckpt / f"ind{i}.npz") for i in state["population"]]
    history = [GenerationSummary(**h) for h in state["history"]]
    records = read_metrics(ckpt / "metrics.jsonl")
    return ResumeState(state["generation"], population, history), state["config"], records


# ----------------------------------------------------------------------------
# Images
# ----------------------------------------------------------------------------

def quantize(values) -> np.ndarray:
    """[0, 1] floats to bytes; ``np.rint`` rounds halves to even (0.5 -> 128)."""
    return np.rint(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, pixels: np.ndarray) -> Path:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ContractError("PGM writer needs a 2-D uint8 array")
    h, w = pixels.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ContractError(f"{path}: not an 8-bit binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def emit_reconstructions(model: HybridAutoencoder, samples, out_dir) -> list[Path]:
    """Write original, reconstruction and a side-by-side pair per sample."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, IMAGE_SIDE * IMAGE_SIDE)
    if len(samples) == 0:
        raise ContractError("need at least one sample")
    recon, _ = forward(model, samples)
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        logger.warning("cannot create %s: %s", out_dir, exc)
        return written
    for i, (orig, rec) in enumerate(zip(samples, recon)):
        a = quantize(orig).reshape(IMAGE_SIDE, IMAGE_SIDE)
        b = quantize(rec).reshape(IMAGE_SIDE, IMAGE_SIDE)
        for name, img in ((f"sample{i:02d}_original.pgm", a), (f"sample{i:02d}_recon.pgm", b),
                          (f"sample{i:02d}_pair.pgm", np.hstack([a, b]))):
            try:
                written.append(write_pgm(out_dir / name, img))
            except OSError as exc:
                logger.warning("could not write %s: %s", out_dir / name, exc)
    return written


# ----------------------------------------------------------------------------
# Run
# ----------------------------------------------------------------------------

def expected_record_count(ga: GAConfig) -> int:
    sessions = ga.population_size + (ga.generations - 1) * (ga.population_size - ga.elite_k)
    return sessions * ga.epochs_per_generation + ga.population_size * ga.generations


def _load_data(config: RunConfig) -> Splits:
    if config.dataset_path is None:
        raise ConfigurationError("dataset.path is not set")
    for p in (config.dataset_path, config.test_path):
        if p is not None and not Path(p).exists():
            raise ConfigurationError(f"dataset file not found: {p}")
    return load_splits(config.dataset_path, config.test_path, config.split, config.dataset_kind)


def run(config: RunConfig, resume=None) -> int:
    """Execute a full search. Returns a process exit status."""
    try:
        splits = _load_data(config)
    except (QAENASError, OSError) as exc:
        logger.error("dataset load failed: %s", exc)
        return 2
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.flat, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        logger.error("output directory %s is not writable: %s", out, exc)
        return 2

    resume_state = None
    writer = MetricsWriter(out)
    if resume is not None:
        resume_state, _, prior = load_checkpoint(resume)
        for rec in prior:
            writer.write(rec)
        logger.info("resuming after generation %d", resume_state.generation)

    def on_generation(g, population, history):
        writer.flush()
        gdir = out / "genomes" / f"gen{g}"
        gdir.mkdir(parents=True, exist_ok=True)
        for ind in population:
            (gdir / f"ind{ind.id}.json").write_text(serialize_genome(ind.genome), encoding="utf-8")
        write_checkpoint(out / "checkpoints" / f"gen{g}", g, population, history, config, out / "metrics.jsonl")

    try:
        report = run_evolution(config.ga, config.train, splits, on_record=writer.write,
                               on_generation=on_generation, resume=resume_state)
    finally:
        writer.close()

    best_dir = out / "best"
    best_dir.mkdir(exist_ok=True)
    save_individual(best_dir / "model.npz", report.best)
    (best_dir / "genome.json").write_text(serialize_genome(report.best.genome), encoding="utf-8")
    summary = report.to_dict()
    summary.pop("records")
    (best_dir / "summary.json").write_text(json.dumps(summary["best"], indent=2) + "\n", encoding="utf-8")
    (out / "report.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")

    if config.recon_samples:
        source = splits.test if len(splits.test) else splits.val
        emit_reconstructions(report.best.model, source.images[: config.recon_samples], out / "recon")
    logger.info("best individual %d, validation loss %.5f", report.best.id, report.best.fitness)
    return 0


def load_report(out_dir) -> dict:
    return json.loads((Path(out_dir) / "report.json").read_text(encoding="utf-8"))


def run_in_memory(config: RunConfig, splits: Splits) -> EvolutionReport:
    """Convenience for notebooks and tests: search without touching disk."""
    return run_evolution(config.ga, config.train, splits)
