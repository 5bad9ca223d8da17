#!/usr/bin/env python3
"""Convert the 5000-digit MNIST sample shipped inside the mlxtend wheel into
gzipped IDX files (images magic 2051, labels magic 2049).

usage: make_mnist_sample.py <mlxtend wheel or mnist_5k.csv.gz> <out dir>
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

CSV_IN_WHEEL = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(src: Path) -> np.ndarray:
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as whl:
            raw = whl.read(CSV_IN_WHEEL)
    else:
        raw = src.read_bytes()
    text = gzip.decompress(raw).decode("ascii")
    return np.loadtxt(io.StringIO(text), delimiter=",").astype(np.int64)


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    table = read_csv(src)
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = len(labels)
    # mtime=0 keeps the gzip output byte-stable
    with gzip.GzipFile(out / "mnist5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        f.write(pixels.tobytes())
    with gzip.GzipFile(out / "mnist5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.tobytes())
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
