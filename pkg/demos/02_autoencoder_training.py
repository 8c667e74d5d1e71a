"""Train one hybrid autoencoder on a slice of MNIST.

The model is 784 -> 64 -> 4 classical layers, the 4-qubit circuit, then
4 -> 64 -> 784. A few epochs on 500 images show the reconstruction loss
dropping, and the last reconstructions are written as PGM files.

Usage: python demos/02_autoencoder_training.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from qaenas import OptimizerState, batches, build_initial_genome, evaluate, init_model, load_idx_images, train_epoch
from qaenas.runner import emit_reconstructions

DATA = Path(__file__).resolve().parent.parent / "data" / "mnist" / "train-5k-images-idx3-ubyte.gz"
out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/demo_autoencoder")

images = load_idx_images(DATA).images
# the file is ordered by digit, so draw the slices at random
order = np.random.default_rng(0).permutation(len(images))
train, val = images[order[:500]], images[order[500:600]]
model = init_model(build_initial_genome(4, 2), 784, np.random.default_rng(0))
state = OptimizerState()
print(f"{model.n_parameters()} parameters, {model.genome.n_params} of them quantum")
print(f"epoch 0  val {evaluate(model, val):.3f}")
for epoch in range(1, 11):
    # small batches so ten epochs make visible progress
    model, state, loss = train_epoch(model, state, train, batches(len(train), 32, epoch_seed=epoch))
    print(f"epoch {epoch}  train {loss:.3f}  val {evaluate(model, val):.3f}")

files = emit_reconstructions(model, val[:4], out)
print(f"wrote {len(files)} PGM files to {out}")
