"""Binary PGM (P5) / PPM (P6) read and write, 8-bit only."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class PnmError(ValueError):
    pass


def _tokens(buf: bytes, count: int, pos: int):
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError(f"truncated header at byte {pos}")
        out.append(buf[start:pos])
    return out, pos


def loads_pnm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"not a binary PGM/PPM (magic {magic!r})")
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise PnmError(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    c = 1 if magic == b"P5" else 3
    need = w * h * c
    data = buf[pos : pos + need]
    if len(data) != need:
        raise PnmError(f"expected {need} pixel bytes at offset {pos}, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, c).copy()


def dumps_pnm(img) -> bytes:
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    magic = {1: b"P5", 3: b"P6"}.get(c)
    if magic is None:
        raise PnmError(f"cannot write {c}-channel image")
    return magic + f"\n{w} {h}\n255\n".encode() + img.tobytes()


def read_pnm(path) -> np.ndarray:
    return loads_pnm(Path(path).read_bytes())


def write_pnm(path, img) -> None:
    Path(path).write_bytes(dumps_pnm(img))
