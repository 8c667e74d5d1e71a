"""A short evolutionary search on desk-scale MNIST, written to disk.

Uses the runner with two generations instead of five so it finishes in
about a minute. The output directory has the same layout as a full run:
metrics streams, genomes per generation, checkpoints, best model and
reconstruction images.

Usage: python demos/04_evolution_mnist.py [out_dir]
"""
import json
import sys
from pathlib import Path

from qaenas.runner import load_report, resolve_config, run

DATA = Path(__file__).resolve().parent.parent / "data" / "mnist"
out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/demo_evolution")

config = resolve_config({
    "dataset.path": str(DATA / "train-5k-images-idx3-ubyte.gz"),
    "dataset.test_path": str(DATA / "test-1k-images-idx3-ubyte.gz"),
    "ga.generations": 2,
    "output.dir": str(out),
})
status = run(config)
if status:
    sys.exit(status)

report = load_report(out)
for h in report["history"]:
    print(f"generation {h['generation']}: best id {h['best_id']}  val {h['best_val_loss']:.3f}  "
          f"elite {h['elite_ids']}  mean test (trained) {h['mean_test_loss_trained']:.3f}")
print("best genome:", json.dumps(report["best"]["genome"])[:120], "...")
print("outputs:", sorted(p.name for p in out.iterdir()))
