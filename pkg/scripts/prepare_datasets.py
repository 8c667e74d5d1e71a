#!/usr/bin/env python3
"""Build the desk-scale MNIST and FashionMNIST IDX files under data/.

The canonical download hosts are not always reachable, so the images are
taken from package registries that ship them verbatim:

- MNIST train: the 5000-image sample bundled in the ``mlxtend`` wheel
  (raw 0-255 bytes, CSV, label in the last column).
- MNIST test: 1000 images (100 per digit) from the npm ``mnist`` package,
  which stores pixels as 3-decimal fractions; ``round(v * 255)`` recovers the
  original bytes exactly because the rounding error is below 0.5 / 255.
- FashionMNIST: the npm ``fashion-mnist`` package (70000 images as raw
  bytes, plus a few empty entries that are dropped); a seeded permutation
  picks 5000 train and 1000 test images.

Usage: python scripts/prepare_datasets.py [--cache DIR] [--out DIR]
"""
from __future__ import annotations

import argparse
import gzip
import io
import json
import subprocess
import sys
import tarfile
import zipfile
from pathlib import Path

import numpy as np

from qaenas.data import write_idx_images

MLXTEND = "mlxtend==0.24.0"
NPM_MNIST = "mnist@1.1.0"
NPM_FASHION = "fashion-mnist@1.1.0"


def fetch_wheel(spec: str, cache: Path) -> Path:
    name = spec.split("==")[0]
    found = sorted(cache.glob(f"{name}-*.whl"))
    if not found:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-d", str(cache), spec], check=True)
        found = sorted(cache.glob(f"{name}-*.whl"))
    return found[-1]


def fetch_npm(spec: str, cache: Path) -> Path:
    name, version = spec.rsplit("@", 1)
    tgz = cache / f"{name}-{version}.tgz"
    if not tgz.exists():
        subprocess.run(["npm", "pack", spec, "--pack-destination", str(cache)], check=True,
                       stdout=subprocess.DEVNULL)
    return tgz


def npm_json(tgz: Path, member: str):
    with tarfile.open(tgz) as tar:
        return json.load(tar.extractfile(f"package/{member}"))


def mnist_train(cache: Path) -> np.ndarray:
    with zipfile.ZipFile(fetch_wheel(MLXTEND, cache)) as whl:
        raw = gzip.decompress(whl.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    return table[:, :-1].astype(np.uint8)


def mnist_test(cache: Path, per_digit: int = 100) -> np.ndarray:
    tgz = fetch_npm(NPM_MNIST, cache)
    images = []
    for digit in range(10):
        flat = np.asarray(npm_json(tgz, f"src/digits/{digit}.json")["data"], dtype=np.float64)
        images.append(np.rint(flat.reshape(-1, 784)[:per_digit] * 255.0))
    return np.concatenate(images).astype(np.uint8)


def fashion(cache: Path, n_train: int = 5000, n_test: int = 1000, seed: int = 0):
    tgz = fetch_npm(NPM_FASHION, cache)
    rows = []
    for c in range(10):
        # a few entries in the package are empty lists
        rows += [r for r in npm_json(tgz, f"src/clothes/{c}.json")["data"] if len(r) == 784]
    images = np.asarray(rows, dtype=np.uint8)
    perm = np.random.default_rng(seed).permutation(len(images))
    return images[perm[:n_train]], images[perm[n_train:n_train + n_test]]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cache", type=Path, default=Path(".cache/datasets"))
    ap.add_argument("--out", type=Path, default=Path("data"))
    args = ap.parse_args(argv)
    args.cache.mkdir(parents=True, exist_ok=True)

    outputs = {
        "mnist/train-5k-images-idx3-ubyte.gz": mnist_train(args.cache),
        "mnist/test-1k-images-idx3-ubyte.gz": mnist_test(args.cache),
    }
    f_train, f_test = fashion(args.cache)
    outputs["fashion/train-5k-images-idx3-ubyte.gz"] = f_train
    outputs["fashion/test-1k-images-idx3-ubyte.gz"] = f_test
    for rel, pixels in outputs.items():
        path = args.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_idx_images(path, pixels)
        print(f"{path}: {len(pixels)} images")
    return 0


if __name__ == "__main__":
    sys.exit(main())
