"""Small CNN classifier: architecture, prediction, SGD training, weight files."""
from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import ShapeError, forward, log_softmax, loss_and_gradients

log = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass(frozen=True)
class Layer:
    """One layer descriptor. ``kind`` is conv, relu, maxpool or affine."""

    kind: str
    out: int = 0  # conv filters / affine outputs
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    size: int = 2  # maxpool window

    def to_dict(self):
        keep = {
            "conv": ("out", "kernel", "stride", "padding"),
            "affine": ("out",),
            "maxpool": ("size", "stride"),
            "relu": (),
        }[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keep}}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def conv(out, kernel=3, stride=1, padding=0):
    return Layer("conv", out=out, kernel=kernel, stride=stride, padding=padding)


def maxpool(size=2, stride=None):
    return Layer("maxpool", size=size, stride=size if stride is None else stride)


def affine(out):
    return Layer("affine", out=out)


RELU = Layer("relu")


@dataclass(frozen=True)
class ArchitectureSpec:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.param_shapes()  # validates composition

    def param_shapes(self) -> list[tuple[tuple[int, ...], ...]]:
        """Per-layer parameter shapes; raises ShapeError if layers do not compose."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({layer.kind})"
            if layer.kind == "conv":
                if len(shape) != 3:
                    raise ShapeError(f"{where}: needs a (C, H, W) input, got {shape}")
                c, h, w = shape
                k, p, s = layer.kernel, layer.padding, layer.stride
                oh, ow = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
                if oh < 1 or ow < 1:
                    raise ShapeError(f"{where}: kernel {k} too large for {shape}")
                out.append(((layer.out, c, k, k), (layer.out,)))
                shape = (layer.out, oh, ow)
            elif layer.kind == "maxpool":
                if len(shape) != 3 or shape[1] < layer.size or shape[2] < layer.size:
                    raise ShapeError(f"{where}: window {layer.size} does not fit {shape}")
                c, h, w = shape
                shape = (c, (h - layer.size) // layer.stride + 1, (w - layer.size) // layer.stride + 1)
                out.append(())
            elif layer.kind == "affine":
                n_in = int(np.prod(shape))
                out.append(((layer.out, n_in), (layer.out,)))
                shape = (layer.out,)
            elif layer.kind == "relu":
                out.append(())
            else:
                raise ShapeError(f"{where}: unknown kind")
        if len(shape) != 1:
            raise ShapeError(f"network output must be a vector, got {shape}")
        return out

    @property
    def num_classes(self) -> int:
        return next(l.out for l in reversed(self.layers) if l.kind == "affine")

    def to_dict(self):
        return {"input_shape": list(self.input_shape), "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["input_shape"]), tuple(Layer.from_dict(l) for l in d["layers"]))


def reference_arch(input_shape=(1, 28, 28), num_classes=10) -> ArchitectureSpec:
    """conv8 -> relu -> pool -> conv16 -> relu -> pool -> affine (MNIST or CIFAR geometry)."""
    return ArchitectureSpec(
        input_shape, (conv(8), RELU, maxpool(2), conv(16), RELU, maxpool(2), affine(num_classes))
    )


@dataclass
class ModelWeights:
    arch: ArchitectureSpec
    params: list[tuple[np.ndarray, ...]]
    std_mean: np.ndarray = field(default_factory=lambda: np.float64(0.0))
    std_scale: np.ndarray = field(default_factory=lambda: np.float64(1.0))
    class_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.std_mean = np.asarray(self.std_mean, dtype=np.float64)
        self.std_scale = np.asarray(self.std_scale, dtype=np.float64)
        if np.any(self.std_scale <= 0):
            raise ValueError("standardization scale must be positive")
        shapes = self.arch.param_shapes()
        if len(self.params) != len(shapes):
            raise ShapeError(f"{len(self.params)} parameter groups for {len(shapes)} layers")
        fixed = []
        for i, (group, want) in enumerate(zip(self.params, shapes)):
            group = tuple(np.asarray(p, dtype=np.float32) for p in group)
            got = tuple(p.shape for p in group)
            if got != want:
                raise ShapeError(f"layer {i} ({self.arch.layers[i].kind}): params {got}, expected {want}")
            fixed.append(group)
        self.params = fixed
        if not self.class_names:
            self.class_names = [str(i) for i in range(self.arch.num_classes)]

    @property
    def num_classes(self):
        return self.arch.num_classes

    def standardize(self, pixels01):
        return (np.asarray(pixels01, dtype=np.float64) - self.std_mean) / self.std_scale


def init_weights(arch: ArchitectureSpec, seed=0, **kw) -> ModelWeights:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    for shape in arch.param_shapes():
        if not shape:
            params.append(())
            continue
        wshape, bshape = shape
        fan_in = int(np.prod(wshape[1:]))
        w = rng.standard_normal(wshape) * np.sqrt(2.0 / fan_in)
        params.append((w.astype(np.float32), np.zeros(bshape, np.float32)))
    return ModelWeights(arch, params, **kw)


# ---------------------------------------------------------------------------
# prediction


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    top_class: int
    top_prob: float
    tie_flag: bool


def prediction_from_logits(logits) -> Prediction:
    probs = np.exp(log_softmax(logits))
    top = int(np.argmax(probs))
    tie = int(np.sum(probs >= probs[top] - TIE_TOL)) > 1
    return Prediction(probs, top, float(probs[top]), tie)


def predict(weights: ModelWeights, x) -> Prediction | list[Prediction]:
    """Softmax prediction for one standardized input, or a list for a batch."""
    logits, _ = forward(weights, x)
    if logits.ndim == 1:
        return prediction_from_logits(logits)
    return [prediction_from_logits(z) for z in logits]


def predict_probs(weights: ModelWeights, x) -> np.ndarray:
    logits, _ = forward(weights, x)
    return np.exp(log_softmax(logits))


# ---------------------------------------------------------------------------
# training


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    std_mode: str = "global"  # or "per_pixel"
    max_examples: int | None = None


def standardization_stats(images01: np.ndarray, mode: str = "global"):
    """(mean, scale) over a stack of (N, C, H, W) images in [0, 1]."""
    if mode == "global":
        return np.float64(images01.mean()), np.float64(images01.std())
    if mode == "per_pixel":
        mean = images01.mean(axis=0)
        scale = images01.std(axis=0)
        return mean, np.where(scale > 1e-6, scale, 1.0)
    raise ValueError(f"unknown standardization mode {mode!r}")


def to_nchw01(images: np.ndarray) -> np.ndarray:
    """(N, H, W, C) uint8 -> (N, C, H, W) float64 in [0, 1]."""
    return np.asarray(images, dtype=np.float64).transpose(0, 3, 1, 2) / 255.0


def train(arch: ArchitectureSpec, data, hyper: TrainConfig = TrainConfig(), validation=None,
          class_names=None) -> ModelWeights:
    """Minibatch SGD with momentum on summed-then-averaged cross-entropy.

    ``data`` and ``validation`` are :class:`~jpgdefense.pipeline.datasets.Dataset`
    like objects (``images`` as (N, H, W, C) uint8, ``labels``).
    """
    if len(data.images) == 0:
        raise ValueError("empty training set")
    if not hyper.lr >= 0:
        raise ValueError("learning rate must be non-negative")
    images = np.asarray(data.images)
    labels = np.asarray(data.labels, dtype=np.intp)
    if hyper.max_examples is not None:
        images, labels = images[: hyper.max_examples], labels[: hyper.max_examples]
    x01 = to_nchw01(images)
    mean, scale = standardization_stats(x01, hyper.std_mode)
    weights = init_weights(arch, seed=hyper.seed, std_mean=mean, std_scale=scale,
                           class_names=list(class_names or []))
    x = weights.standardize(x01).astype(np.float32)
    rng = np.random.default_rng(hyper.seed)
    velocity = [tuple(np.zeros_like(p, dtype=np.float64) for p in g) for g in weights.params]
    params = [tuple(p.astype(np.float64) for p in g) for g in weights.params]
    history = []
    n = len(x)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for step, start in enumerate(range(0, n, hyper.batch_size)):
            idx = order[start : start + hyper.batch_size]
            weights.params = [tuple(p.astype(np.float32) for p in g) for g in params]
            loss, grads = loss_and_gradients(weights, x[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
            total += loss
            m = len(idx)
            new_params, new_vel = [], []
            for g, v, dg in zip(params, velocity, grads.param_grads):
                nv = tuple(hyper.momentum * vi - hyper.lr * (di / m) for vi, di in zip(v, dg))
                new_vel.append(nv)
                new_params.append(tuple(pi + vi for pi, vi in zip(g, nv)))
            params, velocity = new_params, new_vel
        history.append(total / n)
        log.info("epoch %d: mean loss %.4f", epoch, history[-1])
    weights.params = [tuple(p.astype(np.float32) for p in g) for g in params]
    weights.meta = {"epoch_losses": history, "final_train_loss": history[-1] if history else None}
    if validation is not None and len(validation.images):
        vx = weights.standardize(to_nchw01(np.asarray(validation.images)))
        weights.meta["val_accuracy"] = accuracy(weights, vx, validation.labels)
    return weights


def accuracy(weights: ModelWeights, x_std, labels, batch=500) -> float:
    labels = np.asarray(labels)
    hits = 0
    for s in range(0, len(labels), batch):
        hits += int(np.sum(predict_probs(weights, x_std[s : s + batch]).argmax(axis=1) == labels[s : s + batch]))
    return hits / len(labels)


def mean_loss(weights: ModelWeights, x_std, labels) -> float:
    loss, _ = loss_and_gradients(weights, x_std, labels)
    return loss / len(labels)


# ---------------------------------------------------------------------------
# weight files
#
# layout (little-endian):
#   b"JSHD" | u32 version | u32 len | arch+names+meta JSON
#   | u32 n_arrays | per array: u8 ndim, u32 dims..., u8 dtype code, raw data
#   | u32 crc32 of everything before it

MAGIC = b"JSHD"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {v: k for k, v in _DTYPES.items()}


class WeightFileError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _pack_array(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    head = struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape) + struct.pack("<B", _CODES[a.dtype])
    return head + a.tobytes()


def dumps_weights(weights: ModelWeights) -> bytes:
    header = json.dumps(
        {"arch": weights.arch.to_dict(), "class_names": weights.class_names, "meta": weights.meta},
        sort_keys=True,
    ).encode()
    arrays = [_pack_array(weights.std_mean, "<f8"), _pack_array(weights.std_scale, "<f8")]
    for group in weights.params:
        arrays.extend(_pack_array(p, "<f4") for p in group)
    body = MAGIC + struct.pack("<II", VERSION, len(header)) + header + struct.pack("<I", len(arrays)) + b"".join(arrays)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise WeightFileError(f"truncated while reading {what}: need {n} bytes, have {len(self.buf) - self.pos}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_weights(buf: bytes) -> ModelWeights:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise WeightFileError(f"magic mismatch: expected {MAGIC!r}, found {magic!r}", 0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise WeightFileError(f"unsupported version {version} (expected {VERSION})", 4)
    (hlen,) = r.unpack("<I", "header length")
    header = json.loads(r.take(hlen, "header").decode())
    (count,) = r.unpack("<I", "array count")
    arrays = []
    for k in range(count):
        start = r.pos
        (ndim,) = r.unpack("<B", f"array {k} rank")
        dims = r.unpack(f"<{ndim}I", f"array {k} shape")
        (code,) = r.unpack("<B", f"array {k} dtype")
        if code not in _DTYPES:
            raise WeightFileError(f"array {k}: unknown dtype code {code}", start)
        dt = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        arrays.append(np.frombuffer(r.take(nbytes, f"array {k} data"), dtype=dt).reshape(dims).copy())
    crc_pos = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if crc != zlib.crc32(buf[:crc_pos]):
        raise WeightFileError("CRC32 mismatch", crc_pos)
    if r.pos != len(buf):
        raise WeightFileError(f"{len(buf) - r.pos} trailing bytes", r.pos)
    arch = ArchitectureSpec.from_dict(header["arch"])
    it = iter(arrays[2:])
    params = [tuple(next(it) for _ in shapes) for shapes in arch.param_shapes()]
    return ModelWeights(arch, params, arrays[0], arrays[1], header["class_names"], header["meta"])


def save_weights(weights: ModelWeights, path) -> None:
    Path(path).write_bytes(dumps_weights(weights))


def load_weights(path) -> ModelWeights:
    return loads_weights(Path(path).read_bytes())


def with_params(weights: ModelWeights, params) -> ModelWeights:
    return replace(weights, params=list(params))


def image_to_input(weights: ModelWeights, img) -> np.ndarray:
    """(H, W, C) uint8 at the model's native geometry -> standardized (C, H, W) float32."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    x = weights.standardize(img.astype(np.float64).transpose(2, 0, 1) / 255.0)
    if x.shape != weights.arch.input_shape:
        raise ShapeError(f"image geometry {x.shape} does not match model input {weights.arch.input_shape}")
    return x.astype(np.float32)
