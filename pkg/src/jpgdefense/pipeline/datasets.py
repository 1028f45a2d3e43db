"""Readers for MNIST IDX, CIFAR-10 binary batches and directories of PGM/PPM files."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..pnm import PnmError, read_pnm

FORMATS = ("mnist-idx", "cifar10-bin", "ppm-dir")
SPLITS = ("train", "validation", "test")

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
CIFAR_RECORD = 3073
CIFAR_NAMES = ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]


class DatasetError(ValueError):
    def __init__(self, message, path=None, offset=None):
        where = "" if path is None else f" [{path}" + ("" if offset is None else f" @ byte {offset}") + "]"
        super().__init__(message + where)
        self.path, self.offset = path, offset


@dataclass
class Dataset:
    images: list  # (H, W, C) uint8 arrays; a stacked ndarray when all share a shape
    labels: np.ndarray
    split: str = "test"
    class_names: list[str] = field(default_factory=list)
    ids: np.ndarray | None = None  # stable per-image ids, used to key random draws

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.ids is None:
            self.ids = np.arange(len(self.labels), dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.class_names and len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("label outside the declared class range")

    def __len__(self):
        return len(self.labels)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        images = self.images[index] if isinstance(self.images, np.ndarray) else [self.images[i] for i in index]
        return Dataset(images, self.labels[index], self.split, list(self.class_names), self.ids[index])

    def head(self, n) -> "Dataset":
        return self if n is None or n >= len(self) else self.subset(np.arange(n))


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx(path, expect_magic) -> np.ndarray:
    path = Path(path)
    buf = _read_bytes(path)
    if len(buf) < 4:
        raise DatasetError(f"file too short for IDX header: {len(buf)} bytes", path, 0)
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expect_magic:
        raise DatasetError(f"bad IDX magic 0x{magic:08X}, expected 0x{expect_magic:08X}", path, 0)
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(buf) < hdr:
        raise DatasetError(f"truncated IDX header: expected {hdr} bytes, got {len(buf)}", path, len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:hdr])
    expected = hdr + int(np.prod(dims))
    if len(buf) != expected:
        raise DatasetError(f"IDX size mismatch: expected {expected} bytes, got {len(buf)}", path, min(len(buf), expected))
    return np.frombuffer(buf, dtype=np.uint8, offset=hdr).reshape(dims)


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise DatasetError(f"missing file {stem}[.gz]", root)


def load_mnist(root, split="test") -> Dataset:
    """``train`` and ``validation`` are the first 50k / last 10k of the training files."""
    root = Path(root)
    prefix = "t10k" if split == "test" else "train"
    images = read_idx(_find(root, f"{prefix}-images-idx3-ubyte"), IDX_IMAGES)
    labels = read_idx(_find(root, f"{prefix}-labels-idx1-ubyte"), IDX_LABELS)
    if len(images) != len(labels):
        raise DatasetError(f"{len(images)} images vs {len(labels)} labels", root)
    ids = np.arange(len(labels))
    if split == "train":
        sl = slice(0, 50000)
    elif split == "validation":
        sl = slice(50000, None)
    else:
        sl = slice(None)
    return Dataset(images[sl][..., None], labels[sl], split, [str(i) for i in range(10)], ids[sl])


def _read_cifar_batch(path: Path):
    buf = _read_bytes(path)
    if len(buf) % CIFAR_RECORD:
        n = len(buf) // CIFAR_RECORD
        raise DatasetError(
            f"size {len(buf)} is not a multiple of {CIFAR_RECORD}-byte records", path, n * CIFAR_RECORD
        )
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DatasetError(f"label {labels[bad]} out of range", path, bad * CIFAR_RECORD)
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return images, labels


def load_cifar10(root, split="test") -> Dataset:
    """``train`` = data_batch_1..4, ``validation`` = data_batch_5, ``test`` = test_batch."""
    root = Path(root)
    names = {"train": [f"data_batch_{i}.bin" for i in range(1, 5)], "validation": ["data_batch_5.bin"],
             "test": ["test_batch.bin"]}[split]
    parts = [_read_cifar_batch(_find(root, n)) for n in names]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    meta = root / "batches.meta.txt"
    class_names = [l.strip() for l in meta.read_text().splitlines() if l.strip()] if meta.exists() else CIFAR_NAMES
    return Dataset(images, labels, split, class_names)


def load_ppm_dir(root, split="test") -> Dataset:
    """``root/<class name>/*.ppm|*.pgm``; classes are sorted subdirectory names."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError("not a directory", root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    images, labels = [], []
    for k, cname in enumerate(classes):
        for f in sorted((root / cname).iterdir()):
            if f.suffix.lower() not in (".ppm", ".pgm", ".pnm"):
                continue
            try:
                images.append(read_pnm(f))
            except PnmError as exc:
                raise DatasetError(str(exc), f) from None
            labels.append(k)
    if len({im.shape for im in images}) == 1:
        images = np.stack(images)
    return Dataset(images, labels, split, classes)


def load_dataset(path, format: str, split: str = "test") -> Dataset:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    loaders = {"mnist-idx": load_mnist, "cifar10-bin": load_cifar10, "ppm-dir": load_ppm_dir}
    if format not in loaders:
        raise ValueError(f"format must be one of {FORMATS}")
    return loaders[format](path, split)
