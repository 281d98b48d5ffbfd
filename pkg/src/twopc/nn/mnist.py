"""MNIST IDX reader (plain or gzip-compressed files)."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionError, PoolIOError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_U8 = 0x08


def read_idx(path) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise PoolIOError(f"cannot read {path}: {e}") from e
    if len(raw) < 4:
        raise PoolIOError(f"{path}: truncated IDX header")
    zero, dtype_code, ndim = struct.unpack_from(">HBB", raw)
    if zero != 0 or dtype_code != _U8:
        raise PoolIOError(f"{path}: not an unsigned-byte IDX file")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    off = 4 + 4 * ndim
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - off != count:
        raise PoolIOError(f"{path}: payload has {len(raw) - off} bytes, header says {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=off).reshape(dims)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise PoolIOError(f"missing {stem}[.gz] in {directory}")


@dataclass
class Dataset:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DimensionError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n])

    def pixels(self) -> np.ndarray:
        """Images as floats in [0, 1], shape (N, 1, 28, 28)."""
        return (self.images.astype(np.float64) / 255.0)[:, None]

    def one_hot(self, k: int = 10) -> np.ndarray:
        return np.eye(k)[self.labels]


def load_mnist(directory, split: str = "train") -> Dataset:
    directory = Path(directory)
    prefix = "train" if split == "train" else "t10k"
    images = read_idx(_find(directory, f"{prefix}-images-idx3-ubyte"))
    labels = read_idx(_find(directory, f"{prefix}-labels-idx1-ubyte"))
    if images.ndim != 3 or labels.ndim != 1:
        raise DimensionError(f"unexpected IDX shapes {images.shape} / {labels.shape}")
    return Dataset(images, labels)
