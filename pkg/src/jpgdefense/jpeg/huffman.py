"""Huffman code construction, bit-level I/O and per-block entropy coding."""
from __future__ import annotations

import numpy as np

from .errors import JpegError

MAX_DC_CATEGORY = 11
MAX_AC_CATEGORY = 10


def build_codes(counts, symbols) -> dict[int, tuple[int, int]]:
    """Canonical codes (Annex C): symbol -> (code, length)."""
    codes = {}
    code = 0
    k = 0
    for length, n in enumerate(counts, start=1):
        for _ in range(n):
            codes[symbols[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


class DecodeTable:
    """16-bit-window lookup table: ``lut[window] = (symbol << 8) | length``."""

    def __init__(self, counts, symbols):
        if len(counts) != 16 or sum(counts) != len(symbols):
            raise JpegError("malformed Huffman table")
        self.lut = np.zeros(1 << 16, dtype=np.int32)
        for sym, (code, length) in build_codes(counts, symbols).items():
            if code >= (1 << length):
                raise JpegError("Huffman table is over-subscribed")
            lo = code << (16 - length)
            self.lut[lo : lo + (1 << (16 - length))] = (sym << 8) | length


class BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, value: int, length: int) -> None:
        if length == 0:
            return
        self.acc = (self.acc << length) | (value & ((1 << length) - 1))
        self.nbits += length
        while self.nbits >= 8:
            self.nbits -= 8
            byte = (self.acc >> self.nbits) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self.acc &= (1 << self.nbits) - 1

    def flush(self) -> bytes:
        """Pad the final byte with 1-bits and return the stuffed scan data."""
        if self.nbits:
            self.write((1 << (8 - self.nbits)) - 1, 8 - self.nbits)
        return bytes(self.out)


def category(v: int) -> int:
    return abs(int(v)).bit_length()


def _extra_bits(v: int, size: int) -> int:
    return v if v >= 0 else v + (1 << size) - 1


def encode_block(writer: BitWriter, zz, pred: int, dc_codes, ac_codes) -> int:
    """Write one zigzag-ordered quantized block; returns the new DC predictor."""
    dc = int(zz[0])
    diff = dc - pred
    size = category(diff)
    if size > MAX_DC_CATEGORY:
        raise JpegError(f"DC difference {diff} exceeds baseline range")
    code, length = dc_codes[size]
    writer.write(code, length)
    writer.write(_extra_bits(diff, size), size)
    run = 0
    nz = np.flatnonzero(zz[1:])
    last = nz[-1] + 1 if nz.size else 0
    for k in range(1, last + 1):
        v = int(zz[k])
        if v == 0:
            run += 1
            continue
        while run > 15:
            code, length = ac_codes[0xF0]
            writer.write(code, length)
            run -= 16
        size = category(v)
        if size > MAX_AC_CATEGORY:
            raise JpegError(f"AC coefficient {v} exceeds baseline range")
        code, length = ac_codes[(run << 4) | size]
        writer.write(code, length)
        writer.write(_extra_bits(v, size), size)
        run = 0
    if last < 63:
        code, length = ac_codes[0x00]
        writer.write(code, length)
    return dc


class BitReader:
    """Reads an unstuffed entropy-coded segment through precomputed 16-bit windows.

    ``offsets[i]`` maps unstuffed byte i back to its position in the file for
    error messages.
    """

    def __init__(self, data: bytes, offsets: np.ndarray):
        self.nbits = len(data) * 8
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        # pad with 1-bits, as an encoder would
        bits = np.concatenate([bits, np.ones(32, dtype=np.uint8)])
        weights = (1 << np.arange(15, -1, -1)).astype(np.int64)
        win = np.zeros(self.nbits + 16, dtype=np.int64)
        for k in range(16):
            win += bits[k : k + self.nbits + 16].astype(np.int64) * weights[k]
        self.window = win.tolist()
        self.offsets = offsets
        self.pos = 0

    def file_offset(self) -> int:
        i = min(self.pos // 8, len(self.offsets) - 1)
        return int(self.offsets[i]) if len(self.offsets) else 0

    def _check(self):
        if self.pos > self.nbits:
            raise JpegError("truncated entropy-coded data", offset=self.file_offset())

    def symbol(self, table: DecodeTable) -> int:
        if self.pos >= self.nbits:
            raise JpegError("truncated entropy-coded data", offset=self.file_offset())
        entry = int(table.lut[self.window[self.pos]])
        length = entry & 0xFF
        if length == 0:
            raise JpegError("invalid Huffman code", offset=self.file_offset())
        self.pos += length
        self._check()
        return entry >> 8

    def receive_extend(self, size: int) -> int:
        if size == 0:
            return 0
        if size > 16:
            raise JpegError(f"coefficient category {size} out of range", offset=self.file_offset())
        v = self.window[self.pos] >> (16 - size)
        self.pos += size
        self._check()
        if v < (1 << (size - 1)):
            v -= (1 << size) - 1
        return v


def decode_block(reader: BitReader, pred: int, dc_table: DecodeTable, ac_table: DecodeTable) -> tuple[np.ndarray, int]:
    """Read one block; returns (zigzag-ordered coefficients, new DC predictor)."""
    zz = np.zeros(64, dtype=np.int64)
    size = reader.symbol(dc_table)
    if size > MAX_DC_CATEGORY:
        raise JpegError(f"DC category {size} out of range", offset=reader.file_offset())
    dc = pred + reader.receive_extend(size)
    zz[0] = dc
    k = 1
    while k < 64:
        rs = reader.symbol(ac_table)
        run, size = rs >> 4, rs & 0x0F
        if size == 0:
            if run == 15:
                k += 16
                continue
            break
        k += run
        if k > 63:
            raise JpegError("AC run past end of block", offset=reader.file_offset())
        zz[k] = reader.receive_extend(size)
        k += 1
    return zz, dc
