"""
MNIST / FashionMNIST image loading (IDX3, optionally gzipped), splitting and
batching. Labels are never read: the task is reconstruction.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, IDXFormatError

IMAGE_MAGIC = 0x00000803
IMAGE_SIDE = 28
IMAGE_SIZE = IMAGE_SIDE * IMAGE_SIDE
HEADER_BYTES = 16
GZIP_MAGIC = b"\x1f\x8b"
DATASET_KINDS = ("MNIST", "FASHION_MNIST")


@dataclass(frozen=True, eq=False)
class ImageDataset:
    images: np.ndarray  # (N, 784) float64 in [0, 1]
    source: str = "MNIST"
    indices: np.ndarray | None = None  # row positions in the file it came from

    def __post_init__(self):
        if self.images.ndim != 2 or self.images.shape[1] != IMAGE_SIZE:
            raise ContractError(f"images must be (N, {IMAGE_SIZE}), got {self.images.shape}")
        if self.images.size and not (self.images.min() >= 0.0 and self.images.max() <= 1.0):
            raise ContractError("pixel values must lie in [0, 1]")
        if self.source not in DATASET_KINDS:
            raise ContractError(f"unknown dataset kind {self.source!r}")
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(len(self.images)))

    @property
    def count(self) -> int:
        return len(self.images)

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, rows: np.ndarray) -> "ImageDataset":
        return ImageDataset(self.images[rows], self.source, self.indices[rows])


def _read_bytes(path: Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(raw: bytes) -> np.ndarray:
    """Decode an uncompressed IDX3 image payload into ``(N, rows*cols)`` uint8."""
    if len(raw) < HEADER_BYTES:
        raise IDXFormatError(f"truncated header: need {HEADER_BYTES} bytes, file has {len(raw)}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:HEADER_BYTES])
    if magic != IMAGE_MAGIC:
        raise IDXFormatError(f"expected image magic 0x{IMAGE_MAGIC:08x}, found 0x{magic:08x}")
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise IDXFormatError(f"expected {IMAGE_SIDE}x{IMAGE_SIDE} images, header says {rows}x{cols}")
    expected_end = HEADER_BYTES + count * rows * cols
    if len(raw) < expected_end:
        raise IDXFormatError(
            f"truncated payload: header declares {count} images ending at byte offset {expected_end}, "
            f"data ends at byte offset {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=HEADER_BYTES)
    return pixels.reshape(count, rows * cols)


def load_idx_images(path, kind: str = "MNIST") -> ImageDataset:
    """Load an ``*-images-idx3-ubyte[.gz]`` file, scaling pixels to [0, 1]."""
    pixels = parse_idx_images(_read_bytes(Path(path)))
    return ImageDataset(pixels.astype(np.float64) / 255.0, kind)


def write_idx_images(path, pixels: np.ndarray, compress: bool | None = None) -> Path:
    """Write ``(N, 784)`` or ``(N, 28, 28)`` uint8 pixels as IDX3.

    ``compress`` defaults to gzip when the file name ends in ``.gz``.
    """
    path = Path(path)
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ContractError(f"IDX images are unsigned bytes, got dtype {pixels.dtype}")
    pixels = pixels.reshape(len(pixels), IMAGE_SIZE)
    payload = struct.pack(">IIII", IMAGE_MAGIC, len(pixels), IMAGE_SIDE, IMAGE_SIDE) + pixels.tobytes()
    if compress is None:
        compress = path.suffix == ".gz"
    if compress:
        # mtime=0 keeps the output byte-stable
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)
    return path


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.9, 0.1, 0.0)
    seed: int = 0
    caps: tuple[int | None, int | None, int | None] = (2000, 500, 500)

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(f < 0 for f in fr):
            raise ContractError(f"split fractions must be three non-negative numbers, got {self.fractions}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ContractError(f"split fractions must sum to 1, got {sum(fr)}")
        if len(self.caps) != 3 or any(c is not None and c < 0 for c in self.caps):
            raise ContractError(f"split caps must be three non-negative ints or null, got {self.caps}")
        object.__setattr__(self, "fractions", fr)
        object.__setattr__(self, "caps", tuple(self.caps))


def _split_sizes(n: int, fractions) -> list[int]:
    # largest remainder, never handing a row to a zero fraction
    exact = [f * n for f in fractions]
    sizes = [int(np.floor(e + 1e-9)) for e in exact]
    order = sorted((i for i in range(3) if fractions[i] > 0), key=lambda i: (-(exact[i] - sizes[i]), i))
    for k in range(n - sum(sizes)):
        sizes[order[k % len(order)]] += 1
    return sizes


def split(dataset: ImageDataset, spec: SplitSpec) -> tuple[ImageDataset, ImageDataset, ImageDataset]:
    """Shuffle by ``spec.seed``, slice contiguously by fractions, then apply caps."""
    n = len(dataset)
    if n < 3:
        raise ContractError(f"need at least 3 images to split, got {n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    sizes = _split_sizes(n, spec.fractions)
    parts = []
    start = 0
    for size, frac, cap, name in zip(sizes, spec.fractions, spec.caps, ("train", "val", "test")):
        rows = perm[start:start + size]
        start += size
        if cap is not None:
            rows = rows[:cap]
        if frac > 0 and len(rows) == 0:
            raise ContractError(f"{name} split is empty although its fraction is {frac}")
        parts.append(dataset.subset(rows))
    return tuple(parts)


def batches(split_or_size, batch_size: int, epoch_seed: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the last batch may be short."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    n = split_or_size if isinstance(split_or_size, (int, np.integer)) else len(split_or_size)
    order = np.random.default_rng(epoch_seed).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@dataclass(frozen=True, eq=False)
class Splits:
    train: ImageDataset
    val: ImageDataset
    test: ImageDataset
    meta: dict = field(default_factory=dict)


def load_splits(train_path, test_path=None, spec: SplitSpec | None = None, kind: str = "MNIST") -> Splits:
    """Build train/val/test from the distribution files.

    With a separate ``test_path`` the test split comes from that file (shuffled
    by the split seed, capped by the test cap) and the training file supplies
    train and validation.
    """
    spec = spec or SplitSpec()
    full = load_idx_images(train_path, kind)
    train, val, test = split(full, spec)
    if test_path is not None:
        test_file = load_idx_images(test_path, kind)
        rows = np.random.default_rng(spec.seed).permutation(len(test_file))
        if spec.caps[2] is not None:
            rows = rows[: spec.caps[2]]
        test = test_file.subset(rows)
    meta = {"train_path": str(train_path), "test_path": None if test_path is None else str(test_path),
            "sizes": [len(train), len(val), len(test)], "kind": kind}
    return Splits(train, val, test, meta)
