"""Codec invariant checks that need no fixtures on disk (``jpgdefense codec-selftest``)."""
from __future__ import annotations

import hashlib
import time

import numpy as np

from .codec import CodecConfig, decode, encode, jpg_project
from .dct import fdct8x8, idct8x8
from .huffman import BitReader, BitWriter, DecodeTable, build_codes, decode_block, encode_block
from .tables import AC_LUMA, DC_LUMA, ZIGZAG, from_zigzag, quality_to_tables, to_zigzag

# sha256 of our quality-75 encode of golden_pattern()
GOLDEN16_SHA256 = "48a6f5139ad74e8420483fbf48a5ae97e22f3889b881448100a651f1194346fd"


class SelfTestFailure(AssertionError):
    pass


def _expect(cond, message):
    # explicit so that python -O cannot silence a failing check
    if not cond:
        raise SelfTestFailure(message)


def golden_pattern() -> np.ndarray:
    y, x = np.mgrid[0:16, 0:16]
    r = (x * 16 + y) % 256
    g = (255 - y * 15) % 256
    b = ((x ^ y) * 17) % 256
    return np.stack([r, g, b], axis=-1).astype(np.uint8)


def _dct_reference(block):
    n = np.arange(8)
    c = np.cos((2 * n[None, :] + 1) * n[:, None] * np.pi / 16)  # c[u, x]
    a = np.where(n == 0, 1 / np.sqrt(2), 1.0)
    out = np.empty((8, 8))
    for v in range(8):
        for u in range(8):
            out[v, u] = 0.25 * a[u] * a[v] * np.sum(block * c[v][:, None] * c[u][None, :])
    return out


def check_zigzag(rng):
    x = np.arange(64)
    _expect(sorted(ZIGZAG.tolist()) == list(range(64)), "zigzag is not a permutation")
    _expect(np.array_equal(from_zigzag(to_zigzag(x)), x), "zigzag inverse")


def check_tables(rng):
    _expect(np.all(quality_to_tables(100).luma == 1), "quality 100 tables")
    _expect(quality_to_tables(75).luma[0] == 8, "quality 75 luma DC step")


def check_dct(rng):
    b = rng.uniform(-128, 127, (8, 8))
    err = np.abs(fdct8x8(b) - _dct_reference(b)).max()
    _expect(err < 1e-6, f"DCT differs from definition by {err:.2e}")
    _expect(np.abs(idct8x8(fdct8x8(b)) - b).max() < 1e-6, "IDCT(DCT(b)) != b")


def check_entropy(rng, n=1000):
    dc, ac = build_codes(*DC_LUMA), build_codes(*AC_LUMA)
    blocks = []
    for _ in range(n):
        zz = np.zeros(64, dtype=np.int64)
        zz[0] = rng.integers(-1000, 1000)
        k = rng.integers(0, 64)
        zz[rng.choice(np.arange(1, 64), k, replace=False)] = rng.integers(-1023, 1024, k)
        blocks.append(zz)
    w = BitWriter()
    pred = 0
    for zz in blocks:
        pred = encode_block(w, zz, pred, dc, ac)
    raw = np.frombuffer(w.flush(), dtype=np.uint8)
    keep = np.ones(raw.size, dtype=bool)
    keep[np.flatnonzero(raw == 0xFF) + 1] = False
    reader = BitReader(raw[keep].tobytes(), np.flatnonzero(keep))
    dt, at = DecodeTable(*DC_LUMA), DecodeTable(*AC_LUMA)
    pred = 0
    for i, zz in enumerate(blocks):
        got, pred = decode_block(reader, pred, dt, at)
        _expect(np.array_equal(got, zz), f"entropy round-trip differs at block {i}")


def check_dimensions(rng, max_dim=64):
    for h in range(1, max_dim + 1):
        for w in range(1, max_dim + 1):
            c = 3 if (h * 7 + w) % 2 else 1
            img = rng.integers(0, 256, (h, w, c), dtype=np.uint8)
            _expect(jpg_project(img).shape == (h, w, c), f"{h}x{w}x{c} not preserved")


def check_uniform(rng):
    for v in (0, 128, 255):
        img = np.full((8, 8, 1), v, np.uint8)
        _expect(np.abs(decode(encode(img)).astype(int) - v).max() <= 1, f"uniform {v} drifted")


def check_golden(rng):
    digest = hashlib.sha256(encode(golden_pattern(), CodecConfig(75))).hexdigest()
    _expect(digest == GOLDEN16_SHA256, f"16x16 golden encode changed: {digest}")


CHECKS = [
    ("zigzag", check_zigzag),
    ("quant tables", check_tables),
    ("dct", check_dct),
    ("entropy round-trip", check_entropy),
    ("dimensions 1..64", check_dimensions),
    ("uniform images", check_uniform),
    ("golden 16x16", check_golden),
]


def run(seed=0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS:
        t = time.perf_counter()
        try:
            fn(rng)
            status = "ok"
        except SelfTestFailure as exc:
            ok = False
            status = f"FAIL: {exc}"
        except Exception as exc:  # a crash is a failed check too
            ok = False
            status = f"FAIL: {type(exc).__name__}: {exc}"
        out(f"{name:<20} {status} ({time.perf_counter() - t:.1f}s)")
    return ok
