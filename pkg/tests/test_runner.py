"""Configuration, output streams, checkpoints, resume, images and the CLI."""
import csv
import json

import numpy as np
import pytest

from qaenas import cli, runner
from qaenas.circuit import build_initial_genome, serialize_genome
from qaenas.data import write_idx_images
from qaenas.errors import ConfigurationError
from qaenas.nn import init_model

SMALL = {
    "ga.population_size": 4, "ga.elite_k": 2, "ga.generations": 4, "ga.epochs_per_generation": 2,
    "model.hidden": 8, "train.batch_size": 16, "train.learning_rate": 0.01,
    "split.caps": [40, 10, 10], "recon.samples": 3, "seed": 3,
}


@pytest.fixture(scope="module")
def idx_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("idx")
    rng = np.random.default_rng(0)
    train = (rng.uniform(size=(60, 784)) ** 4 * 255).astype(np.uint8)
    test = (rng.uniform(size=(15, 784)) ** 4 * 255).astype(np.uint8)
    write_idx_images(d / "train.gz", train)
    write_idx_images(d / "test.gz", test)
    return d / "train.gz", d / "test.gz"


def small_config(idx_files, out, **extra):
    values = {**SMALL, "dataset.path": str(idx_files[0]), "dataset.test_path": str(idx_files[1]),
              "output.dir": str(out), **extra}
    return runner.resolve_config(values)


@pytest.fixture(scope="module")
def small_run(idx_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    config = small_config(idx_files, out)
    assert runner.run(config) == 0
    return config, out


# =============================================================================
# Configuration
# =============================================================================

class TestConfig:

    def test_empty_file_gives_defaults(self, tmp_path):
        (tmp_path / "c.json").write_text("")
        c = runner.parse_config(tmp_path / "c.json")
        assert (c.ga.population_size, c.ga.elite_k, c.ga.generations, c.ga.epochs_per_generation) == (10, 3, 5, 10)
        assert c.train.batch_size == 256 and c.train.learning_rate == 1e-3
        assert c.ga.rot_mutation_rate == c.ga.fixed_gate_mutation_rate == 0.2
        assert (c.ga.n_qubits, c.ga.depth) == (4, 2)
        assert c.split.caps == (2000, 500, 500)

    def test_flag_overrides_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"ga.generations": 5}))
        assert runner.parse_config(tmp_path / "c.json", {"ga.generations": 2}).ga.generations == 2

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigurationError, match="sum to 1"):
            runner.resolve_config({"split.fractions": [0.8, 0.1, 0.0]})

    def test_unknown_key_lists_valid_keys(self):
        with pytest.raises(ConfigurationError, match="ga.population_size"):
            runner.resolve_config({"ga.populaton_size": 4})

    def test_wrong_type(self):
        with pytest.raises(ConfigurationError, match="integer"):
            runner.resolve_config({"ga.generations": 2.5})

    def test_malformed_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{\n  \"seed\": ,\n}")
        with pytest.raises(ConfigurationError, match="line 2"):
            runner.parse_config(tmp_path / "c.json")


# =============================================================================
# Images
# =============================================================================

class TestImages:

    def test_half_quantises_to_128(self, tmp_path):
        runner.write_pgm(tmp_path / "h.pgm", runner.quantize(np.full((28, 28), 0.5)))
        raw = (tmp_path / "h.pgm").read_bytes()
        header = b"P5\n28 28\n255\n"
        assert raw.startswith(header)
        assert raw[len(header):] == bytes([128]) * 784

    def test_round_trip(self, tmp_path):
        img = np.random.default_rng(0).uniform(size=(28, 28))
        q = runner.quantize(img)
        np.testing.assert_array_equal(runner.read_pgm(runner.write_pgm(tmp_path / "r.pgm", q)), q)

    def test_counts_and_composite_width(self, tmp_path):
        model = init_model(build_initial_genome(4, 2), 784, np.random.default_rng(0), hidden=8)
        files = runner.emit_reconstructions(model, np.random.default_rng(1).uniform(size=(8, 784)), tmp_path)
        assert len(files) == 24
        assert len([f for f in files if f.name.endswith("_pair.pgm")]) == 8
        assert runner.read_pgm(tmp_path / "sample00_pair.pgm").shape == (28, 56)

    def test_unwritable_directory_is_a_warning(self, tmp_path, caplog):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        model = init_model(build_initial_genome(4, 2), 784, np.random.default_rng(0), hidden=8)
        assert runner.emit_reconstructions(model, np.zeros((1, 784)), blocker / "sub") == []
        assert "cannot create" in caplog.text


# =============================================================================
# Runs
# =============================================================================

class TestRun:

    def test_output_layout(self, small_run):
        config, out = small_run
        for name in ("config.json", "metrics.jsonl", "metrics.csv", "report.json",
                     "best/model.npz", "best/genome.json", "best/summary.json"):
            assert (out / name).is_file(), name
        for g in range(1, config.ga.generations + 1):
            assert len(list((out / "genomes" / f"gen{g}").glob("*.json"))) == config.ga.population_size
        assert len(list((out / "recon").glob("*.pgm"))) == 3 * config.recon_samples

    def test_metrics_line_count(self, small_run):
        config, out = small_run
        lines = (out / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == runner.expected_record_count(config.ga)

    def test_default_schedule_record_count(self):
        assert runner.expected_record_count(runner.resolve_config({}).ga) == 38 * 10 + 10 * 5

    def test_csv_matches_jsonl(self, small_run):
        _, out = small_run
        records = runner.read_metrics(out / "metrics.jsonl")
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(records)
        for rec, row in zip(records, rows):
            assert list(row) == list(rec)
            for key, value in rec.items():
                if value is None:
                    assert row[key] == ""
                elif isinstance(value, bool):
                    assert row[key] == str(value)
                elif isinstance(value, float):
                    assert float(row[key]) == value
                else:
                    assert row[key] == str(value)

    def test_config_echo_round_trips(self, small_run):
        config, out = small_run
        echoed = runner.resolve_config(json.loads((out / "config.json").read_text()))
        assert echoed == config

    def test_best_checkpoint_loads(self, small_run):
        _, out = small_run
        best = runner.load_individual(out / "best" / "model.npz")
        report = runner.load_report(out)
        assert best.id == report["best"]["id"] and best.fitness == report["best"]["fitness"]
        assert serialize_genome(best.genome) == (out / "best" / "genome.json").read_text()

    def test_rerun_is_byte_identical_apart_from_wall_time(self, small_run, tmp_path):
        config, out = small_run
        again = tmp_path / "again"
        assert runner.run(small_config_from(config, again)) == 0
        mask = lambda p: [json.dumps(r) for r in runner.mask_wall_time(runner.read_metrics(p))]
        assert mask(out / "metrics.jsonl") == mask(again / "metrics.jsonl")
        assert (out / "best" / "genome.json").read_bytes() == (again / "best" / "genome.json").read_bytes()

    def test_resume_from_generation_three(self, small_run, tmp_path):
        config, out = small_run
        resumed = tmp_path / "resumed"
        assert runner.run(small_config_from(config, resumed), resume=out / "checkpoints" / "gen3") == 0
        mask = lambda p: [json.dumps(r) for r in runner.mask_wall_time(runner.read_metrics(p))]
        assert mask(out / "metrics.jsonl") == mask(resumed / "metrics.jsonl")
        a = np.load(out / "best" / "model.npz")
        b = np.load(resumed / "best" / "model.npz")
        assert a.files == b.files
        for k in a.files:
            assert np.array_equal(a[k], b[k]), k

    def test_missing_dataset_exits_nonzero(self, tmp_path):
        config = runner.resolve_config({"dataset.path": str(tmp_path / "nope.gz"), "output.dir": str(tmp_path / "o")})
        assert runner.run(config) != 0


def small_config_from(config, out):
    return runner.resolve_config({**config.flat, "output.dir": str(out)})


# =============================================================================
# CLI
# =============================================================================

class TestCLI:

    def test_inspect_genome(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text(serialize_genome(build_initial_genome(4, 2)))
        assert cli.main(["inspect-genome", str(tmp_path / "g.json")]) == 0
        out = capsys.readouterr().out
        assert out.count("ROT_Y q") == 8 and out.count("CNOT  q") == 6
        assert "params=8" in out

    def test_inspect_bad_genome(self, tmp_path, capsys):
        (tmp_path / "g.json").write_text('{"version": 1}')
        assert cli.main(["inspect-genome", str(tmp_path / "g.json")]) == 1
        assert "error" in capsys.readouterr().err

    def test_run_with_flags(self, idx_files, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({**SMALL, "ga.generations": 5, "dataset.test_path": str(idx_files[1])}))
        out = tmp_path / "cli-out"
        code = cli.main(["run", "--config", str(cfg), "--generations", "1", "--seed", "7",
                         "--dataset", str(idx_files[0]), "--out", str(out), "--set", "recon.samples=0"])
        assert code == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["ga.generations"] == 1 and echoed["seed"] == 7 and echoed["recon.samples"] == 0
        assert not (out / "recon").exists()

    def test_run_missing_dataset(self, tmp_path):
        assert cli.main(["run", "--dataset", str(tmp_path / "missing.gz"), "--out", str(tmp_path / "o")]) != 0

    def test_unknown_set_key(self, tmp_path):
        assert cli.main(["run", "--set", "bogus=1", "--out", str(tmp_path / "o")]) == 1
