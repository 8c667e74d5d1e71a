"""Does piling on entangling gates hurt?

Trains the founder genome once as built and once with 12 extra random
CNOTs appended, using identical initial weights and batch order. Both
validation losses are printed; no verdict is drawn from a single pair.
"""
from pathlib import Path

from qaenas import GAConfig, SplitSpec, TrainConfig, entanglement_probe, load_splits

DATA = Path(__file__).resolve().parent.parent / "data" / "mnist"
splits = load_splits(DATA / "train-5k-images-idx3-ubyte.gz", DATA / "test-1k-images-idx3-ubyte.gz", SplitSpec())
result = entanglement_probe(GAConfig(), TrainConfig(), splits, extra_cnots=12)
for label in ("baseline", "entangled"):
    r = result[label]
    n_cnot = sum(g["kind"] == "CNOT" for g in r["genome"]["genes"])
    print(f"{label:9s}  CNOTs {n_cnot:2d}  val {r['val_loss']:.3f}  test {r['test_loss']:.3f}")
print(f"relative change in validation loss: {result['relative_change']:+.3%}")
