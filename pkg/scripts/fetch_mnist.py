"""Materialize MNIST as standard gzipped IDX files under ``data/mnist``.

The only reachable package index mirrors PyPI, so the data comes from the
``mnist-hub`` wheel, which bundles the classic ``mnist.pkl.gz`` (train 50k /
valid 10k / test 10k, pixels stored as ``uint8 / 256``). The train and valid
splits concatenate back to the original 60k training set in order.

    python scripts/fetch_mnist.py [--out data/mnist]
"""
import argparse
import gzip
import io
import pickle
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

WHEEL = "mnist-hub==0.1.4"


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + array.tobytes())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mnist"))
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", WHEEL, "-d", tmp], check=True)
        wheel = next(Path(tmp).glob("*.whl"))
        blob = zipfile.ZipFile(wheel).read("mnist/data/mnist.pkl.gz")
    train, valid, test = pickle.load(gzip.open(io.BytesIO(blob)), encoding="latin1")

    def to_u8(x):
        k = x * 256.0
        assert np.array_equal(k, np.round(k)), "unexpected pixel encoding"
        return k.astype(np.uint8).reshape(-1, 28, 28)

    train_x = np.concatenate([to_u8(train[0]), to_u8(valid[0])])
    train_y = np.concatenate([train[1], valid[1]]).astype(np.uint8)
    write_idx(out / "train-images-idx3-ubyte.gz", train_x)
    write_idx(out / "train-labels-idx1-ubyte.gz", train_y)
    write_idx(out / "t10k-images-idx3-ubyte.gz", to_u8(test[0]))
    write_idx(out / "t10k-labels-idx1-ubyte.gz", test[1].astype(np.uint8))
    print(f"wrote MNIST IDX files to {out}")


if __name__ == "__main__":
    main()
