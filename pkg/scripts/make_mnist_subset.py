"""Build the small MNIST subset shipped under tests/data.

Source: the 5,000-image MNIST sample bundled with mlxtend
(``mlxtend/data/data/mnist_5k.csv.gz``: 784 pixel columns then the label).
The rows are shuffled with a fixed seed and split 4,000 / 1,000 into IDX
files, gzip-compressed.

    python3 scripts/make_mnist_subset.py path/to/mlxtend-0.24.0-py3-none-any.whl tests/data/mnist-subset
"""
import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path: Path, arr: np.ndarray) -> None:
    magic = 0x0800 | arr.ndim
    header = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + arr.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--train", type=int, default=4000)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER))
    data = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = data[:, :784].reshape(-1, 28, 28).astype(np.uint8)
    labels = data[:, 784].astype(np.uint8)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    k = args.train
    write_idx(out / "train-images-idx3-ubyte.gz", images[:k])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[:k])
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[k:])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[k:])
    print(f"wrote {k} train / {len(labels) - k} test images to {out}")


if __name__ == "__main__":
    main()
