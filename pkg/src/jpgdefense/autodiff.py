"""Reverse-mode gradients for the handful of ops a small CNN needs.

Values live in plain numpy arrays. A :class:`Tape` records every primitive
as it runs (op name, input/output ids, whatever the backward pass needs) and
:meth:`Tape.backward` replays the record in reverse. Storage defaults to
float32 while every contraction and reduction accumulates in float64; pass
``dtype=np.float64`` for gradient checking.

Layout is NCHW throughout. The batch axis is always present inside the tape;
:func:`forward` adds and strips it for single inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Tape",
    "Gradient",
    "ShapeError",
    "conv2d",
    "maxpool2d",
    "relu",
    "affine",
    "softmax_cross_entropy",
    "forward",
    "loss_and_gradients",
    "finite_diff_gradient",
]

_ACC = np.float64


class ShapeError(ValueError):
    """Input or parameter shape incompatible with a layer."""


@dataclass
class TapeEntry:
    op: str
    inputs: tuple[int, ...]
    output: int
    saved: dict
    backward: Callable[[np.ndarray, dict], tuple[np.ndarray | None, ...]]


class Tape:
    """Single-use record of one forward evaluation."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.values: list[np.ndarray] = []
        self.entries: list[TapeEntry] = []
        self._consumed = False

    def leaf(self, value) -> int:
        self.values.append(np.asarray(value, dtype=self.dtype))
        return len(self.values) - 1

    def value(self, ref: int) -> np.ndarray:
        return self.values[ref]

    def _push(self, op, inputs, out, saved, backward) -> int:
        ref = self.leaf(out)
        self.entries.append(TapeEntry(op, tuple(inputs), ref, saved, backward))
        return ref

    def backward(self, output: int, seed=None) -> list[np.ndarray | None]:
        """Gradients of ``output`` (seeded with ``seed``, default ones) w.r.t. every value."""
        if self._consumed:
            raise RuntimeError("tape already replayed")
        self._consumed = True
        grads: list[np.ndarray | None] = [None] * len(self.values)
        out = self.values[output]
        grads[output] = np.ones_like(out, dtype=_ACC) if seed is None else np.asarray(seed, dtype=_ACC)
        for entry in reversed(self.entries):
            g = grads[entry.output]
            if g is None:
                continue
            for ref, gi in zip(entry.inputs, entry.backward(g, entry.saved)):
                if gi is None:
                    continue
                grads[ref] = gi if grads[ref] is None else grads[ref] + gi
        return grads


# ---------------------------------------------------------------------------
# primitives


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    # rows: (n, oh, ow), columns: (c, kh, kw)
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw), oh, ow


def _col2im(cols, x_shape, kh, kw, stride, pad, oh, ow):
    n, c, h, w = x_shape
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return out


def conv2d(tape: Tape, x: int, w: int, b: int, stride: int = 1, pad: int = 0) -> int:
    """Cross-correlation, weights shaped (out_ch, in_ch, kh, kw)."""
    xv, wv, bv = tape.value(x), tape.value(w), tape.value(b)
    n, c, h, wd = xv.shape
    f, wc, kh, kw = wv.shape
    if wc != c:
        raise ShapeError(f"conv2d expects {wc} input channels, got {c}")
    if h + 2 * pad < kh or wd + 2 * pad < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {h}x{wd}")
    cols, oh, ow = _im2col(xv, kh, kw, stride, pad)
    cols = cols.astype(_ACC)
    wmat = wv.reshape(f, -1).astype(_ACC)
    out = cols @ wmat.T + bv.astype(_ACC)
    out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)

    def back(g, s):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, f)
        dw = (gmat.T @ s["cols"]).reshape(s["wshape"])
        db = gmat.sum(axis=0)
        dcols = gmat @ s["wmat"]
        dx = _col2im(dcols, s["xshape"], kh, kw, stride, pad, oh, ow)
        return dx, dw, db

    saved = {"cols": cols, "wmat": wmat, "xshape": xv.shape, "wshape": wv.shape}
    return tape._push("conv2d", (x, w, b), out, saved, back)


def maxpool2d(tape: Tape, x: int, size: int = 2, stride: int | None = None) -> int:
    """Max pooling; ties go to the first maximal element in row-major window order."""
    stride = size if stride is None else stride
    xv = tape.value(x)
    n, c, h, w = xv.shape
    if h < size or w < size:
        raise ShapeError(f"maxpool2d window {size} larger than input {h}x{w}")
    oh = (h - size) // stride + 1
    ow = (w - size) // stride + 1
    win = np.empty((n, c, oh, ow, size * size), dtype=xv.dtype)
    for i in range(size):
        for j in range(size):
            win[..., i * size + j] = xv[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    arg = win.argmax(axis=-1)  # argmax returns the first maximum
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g, s):
        dx = np.zeros(s["xshape"], dtype=_ACC)
        a = s["argmax"]
        for i in range(size):
            for j in range(size):
                dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += np.where(
                    a == i * size + j, g, 0.0
                )
        return (dx,)

    return tape._push("maxpool2d", (x,), out, {"argmax": arg, "xshape": xv.shape}, back)


def relu(tape: Tape, x: int) -> int:
    xv = tape.value(x)
    mask = xv > 0

    def back(g, s):
        return (g * s["mask"],)

    return tape._push("relu", (x,), np.where(mask, xv, 0), {"mask": mask}, back)


def affine(tape: Tape, x: int, w: int, b: int) -> int:
    """``x.reshape(n, -1) @ w.T + b`` with weights shaped (out, in)."""
    xv, wv, bv = tape.value(x), tape.value(w), tape.value(b)
    n = xv.shape[0]
    flat = xv.reshape(n, -1).astype(_ACC)
    if flat.shape[1] != wv.shape[1]:
        raise ShapeError(f"affine expects {wv.shape[1]} inputs, got {flat.shape[1]}")
    wa = wv.astype(_ACC)
    out = flat @ wa.T + bv.astype(_ACC)

    def back(g, s):
        return (g @ s["w"]).reshape(s["xshape"]), g.T @ s["x"], g.sum(axis=0)

    return tape._push("affine", (x, w, b), out, {"x": flat, "w": wa, "xshape": xv.shape}, back)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=_ACC)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(tape: Tape, logits: int, labels) -> int:
    """Summed (not averaged) cross-entropy over the batch; output has shape ()."""
    z = tape.value(logits)
    labels = np.asarray(labels, dtype=np.intp)
    logp = log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = -logp[rows, labels].sum()

    def back(g, s):
        d = np.exp(s["logp"])
        d[rows, s["labels"]] -= 1.0
        return (g * d,)

    ref = tape._push("softmax_xent", (logits,), np.float64(loss), {"logp": logp, "labels": labels}, back)
    # keep the loss itself in full precision
    tape.values[ref] = np.asarray(loss, dtype=_ACC)
    return ref


# ---------------------------------------------------------------------------
# network-level API


@dataclass
class Gradient:
    input_grad: np.ndarray
    param_grads: list[tuple[np.ndarray, ...]] = field(default_factory=list)


def _run_layers(tape: Tape, arch, params, x_ref: int) -> tuple[int, list[tuple[int, ...]]]:
    h = x_ref
    param_refs: list[tuple[int, ...]] = []
    for i, (layer, p) in enumerate(zip(arch.layers, params)):
        try:
            if layer.kind == "conv":
                refs = (tape.leaf(p[0]), tape.leaf(p[1]))
                h = conv2d(tape, h, refs[0], refs[1], stride=layer.stride, pad=layer.padding)
            elif layer.kind == "affine":
                refs = (tape.leaf(p[0]), tape.leaf(p[1]))
                h = affine(tape, h, refs[0], refs[1])
            elif layer.kind == "relu":
                refs = ()
                h = relu(tape, h)
            elif layer.kind == "maxpool":
                refs = ()
                h = maxpool2d(tape, h, size=layer.size, stride=layer.stride)
            else:
                raise ShapeError(f"unknown layer kind {layer.kind!r}")
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        param_refs.append(refs)
    return h, param_refs


def _batched(weights, x):
    x = np.asarray(x)
    shape = tuple(weights.arch.input_shape)
    if x.shape == shape:
        return x[None], False
    if x.shape[1:] == shape:
        return x, True
    raise ShapeError(f"layer 0 ({weights.arch.layers[0].kind}): input shape {x.shape} does not match {shape}")


def forward(weights, x, dtype=np.float32) -> tuple[np.ndarray, Tape]:
    """Logits for a standardized input (single or batched) plus the tape that produced them."""
    xb, batched = _batched(weights, x)
    tape = Tape(dtype)
    x_ref = tape.leaf(xb)
    out, _ = _run_layers(tape, weights.arch, weights.params, x_ref)
    logits = tape.value(out)
    return (logits if batched else logits[0]), tape


def loss_and_gradients(weights, x, y, dtype=np.float32) -> tuple[float, Gradient]:
    """Cross-entropy ``-log p(y|x)`` and its gradients w.r.t. input and parameters.

    For a batch ``x`` of shape (n, ...) with ``y`` of length n the loss is the
    sum over examples, so ``input_grad[i]`` is exactly the per-example gradient.
    """
    xb, batched = _batched(weights, x)
    nclass = weights.arch.num_classes
    y_arr = np.atleast_1d(np.asarray(y))
    if y_arr.shape != (xb.shape[0],):
        raise ValueError(f"expected {xb.shape[0]} labels, got shape {y_arr.shape}")
    if np.any((y_arr < 0) | (y_arr >= nclass)):
        raise ValueError(f"label out of range 0..{nclass - 1}: {y_arr.tolist()}")
    tape = Tape(dtype)
    x_ref = tape.leaf(xb)
    out, param_refs = _run_layers(tape, weights.arch, weights.params, x_ref)
    loss_ref = softmax_cross_entropy(tape, out, y_arr)
    loss = float(tape.value(loss_ref))
    grads = tape.backward(loss_ref)

    def fetch(ref, like):
        g = grads[ref]
        return np.zeros(like.shape, dtype=_ACC) if g is None else g

    input_grad = fetch(x_ref, xb)
    param_grads = [tuple(fetch(r, tape.value(r)) for r in refs) for refs in param_refs]
    return loss, Gradient(input_grad if batched else input_grad[0], param_grads)


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-3) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every coordinate."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=_ACC)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2 * h)
    return grad
