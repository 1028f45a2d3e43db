"""Baseline sequential JFIF encoder and decoder.

Images are numpy arrays of shape (H, W, C), dtype uint8, C in {1, 3}.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dct import fdct8x8, idct8x8, idct8x8_islow
from .errors import JpegError
from .huffman import BitReader, BitWriter, DecodeTable, build_codes, decode_block, encode_block
from .tables import AC_CHROMA, AC_LUMA, DC_CHROMA, DC_LUMA, ZIGZAG, from_zigzag, quality_to_tables, to_zigzag

SOI, EOI, SOS, DQT, DHT, DRI, APP0, COM = 0xD8, 0xD9, 0xDA, 0xDB, 0xC4, 0xDD, 0xE0, 0xFE
SOF0, SOF1 = 0xC0, 0xC1

_UNSUPPORTED_SOF = {
    0xC2: "progressive DCT (SOF2)",
    0xC3: "lossless (SOF3)",
    0xC5: "differential sequential DCT (SOF5)",
    0xC6: "differential progressive DCT (SOF6)",
    0xC7: "differential lossless (SOF7)",
    0xC9: "arithmetic-coded sequential DCT (SOF9)",
    0xCA: "arithmetic-coded progressive DCT (SOF10)",
    0xCB: "arithmetic-coded lossless (SOF11)",
    0xCD: "arithmetic-coded differential sequential DCT (SOF13)",
    0xCE: "arithmetic-coded differential progressive DCT (SOF14)",
    0xCF: "arithmetic-coded differential lossless (SOF15)",
    0xCC: "arithmetic coding conditioning (DAC)",
    0xDE: "hierarchical progression (DHP)",
    0xDF: "hierarchical expansion (EXP)",
}

SUBSAMPLING = ("4:2:0", "4:4:4")


@dataclass(frozen=True)
class CodecConfig:
    quality: int = 75
    chroma_subsampling: str = "4:2:0"
    restart_interval: int = 0

    def __post_init__(self):
        if not 1 <= int(self.quality) <= 100:
            raise ValueError(f"quality must be in 1..100, got {self.quality}")
        if self.chroma_subsampling not in SUBSAMPLING:
            raise ValueError(f"chroma_subsampling must be one of {SUBSAMPLING}")
        if self.restart_interval != 0:
            raise ValueError("restart markers are not emitted; restart_interval must be 0")


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _to_u8(x):
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def rgb_to_ycbcr(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128
    return _to_u8(np.stack([y, cb, cr], axis=-1))


def ycbcr_to_rgb(ycc):
    ycc = np.asarray(ycc, dtype=np.float64)
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128, ycc[..., 2] - 128
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return _to_u8(np.stack([r, g, b], axis=-1))


def _fix16(x):
    return int(x * 65536 + 0.5)


_X = np.arange(256, dtype=np.int64) - 128
_CR_R = (_fix16(1.40200) * _X + 32768) >> 16
_CB_B = (_fix16(1.77200) * _X + 32768) >> 16
_CR_G = -_fix16(0.71414) * _X
_CB_G = -_fix16(0.34414) * _X + 32768


def ycbcr_to_rgb_fixed(ycc):
    """16-bit fixed-point conversion with per-term rounding, as libjpeg does it."""
    ycc = np.asarray(ycc, dtype=np.uint8)
    y = ycc[..., 0].astype(np.int64)
    cb, cr = ycc[..., 1], ycc[..., 2]
    r = y + _CR_R[cr]
    g = y + ((_CB_G[cb] + _CR_G[cr]) >> 16)
    b = y + _CB_B[cb]
    return np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)


def as_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise JpegError(f"image must be (H, W, 1|3), got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise JpegError("image has a zero dimension")
    if img.dtype != np.uint8:
        raise JpegError(f"image must be uint8, got {img.dtype}")
    return img


def _pad_edge(plane, mh, mw):
    h, w = plane.shape
    return np.pad(plane, ((0, -h % mh), (0, -w % mw)), mode="edge")


def _blocks(plane):
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _quantize(plane, qtable):
    coefs = fdct8x8(_blocks(plane.astype(np.float64) - 128.0))
    q = qtable.reshape(8, 8)
    return round_half_away(coefs / q).astype(np.int64)


# ---------------------------------------------------------------------------
# encoder


def _segment(marker, payload):
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _dht(cls, ident, spec):
    counts, symbols = spec
    return bytes([(cls << 4) | ident]) + bytes(counts) + bytes(symbols)


def encode(img, cfg: CodecConfig = CodecConfig()) -> bytes:
    img = as_image(img)
    h, w, nc = img.shape
    tables = quality_to_tables(cfg.quality)
    if nc == 1:
        planes = [img[:, :, 0]]
        sampling = [(1, 1)]
    else:
        ycc = rgb_to_ycbcr(img)
        planes = [ycc[:, :, 0], ycc[:, :, 1], ycc[:, :, 2]]
        sampling = [(2, 2), (1, 1), (1, 1)] if cfg.chroma_subsampling == "4:2:0" else [(1, 1)] * 3
    hmax = max(s[0] for s in sampling)
    vmax = max(s[1] for s in sampling)

    quant = []
    for i, (plane, (hs, vs)) in enumerate(zip(planes, sampling)):
        padded = _pad_edge(plane, 8 * vmax, 8 * hmax)
        if (hs, vs) != (hmax, vmax):
            fy, fx = vmax // vs, hmax // hs
            ph, pw = padded.shape
            padded = _to_u8(padded.reshape(ph // fy, fy, pw // fx, fx).astype(np.float64).mean(axis=(1, 3)))
        qt = tables.luma if i == 0 else tables.chroma
        quant.append(to_zigzag(_quantize(padded, qt).reshape(padded.shape[0] // 8, padded.shape[1] // 8, 64)))

    dc_l, ac_l = build_codes(*DC_LUMA), build_codes(*AC_LUMA)
    dc_c, ac_c = build_codes(*DC_CHROMA), build_codes(*AC_CHROMA)
    writer = BitWriter()
    preds = [0] * nc
    mcux = -(-w // (8 * hmax))
    mcuy = -(-h // (8 * vmax))
    for my in range(mcuy):
        for mx in range(mcux):
            for c, (hs, vs) in enumerate(sampling):
                dc_codes, ac_codes = (dc_l, ac_l) if c == 0 else (dc_c, ac_c)
                for by in range(vs):
                    for bx in range(hs):
                        block = quant[c][my * vs + by, mx * hs + bx]
                        preds[c] = encode_block(writer, block, preds[c], dc_codes, ac_codes)
    scan = writer.flush()

    out = bytearray(b"\xff\xd8")
    out += _segment(APP0, b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0))
    out += _segment(DQT, b"\x00" + bytes(to_zigzag(tables.luma).tolist()))
    if nc == 3:
        out += _segment(DQT, b"\x01" + bytes(to_zigzag(tables.chroma).tolist()))
    sof = struct.pack(">BHHB", 8, h, w, nc)
    for c, (hs, vs) in enumerate(sampling):
        sof += bytes([c + 1, (hs << 4) | vs, 0 if c == 0 else 1])
    out += _segment(SOF0, sof)
    dht = _dht(0, 0, DC_LUMA) + _dht(1, 0, AC_LUMA)
    if nc == 3:
        dht += _dht(0, 1, DC_CHROMA) + _dht(1, 1, AC_CHROMA)
    out += _segment(DHT, dht)
    sos = bytes([nc])
    for c in range(nc):
        sos += bytes([c + 1, 0x00 if c == 0 else 0x11])
    sos += bytes([0, 63, 0])
    out += _segment(SOS, sos)
    out += scan
    out += b"\xff\xd9"
    return bytes(out)


# ---------------------------------------------------------------------------
# decoder


@dataclass
class _Component:
    ident: int
    h: int
    v: int
    tq: int
    coefs: np.ndarray | None = None  # (blocks_y, blocks_x, 64), zigzag order
    dc_table: int = 0
    ac_table: int = 0


def _marker_name(m):
    return _UNSUPPORTED_SOF.get(m, f"0x{m:02X}")


def _entropy_segment(buf, pos):
    """Unstuff scan data starting at ``pos`` up to the next non-RST marker.

    Returns (list of (data, offsets) per restart interval, position of the marker).
    """
    pieces = []
    n = len(buf)
    start = pos
    raw = np.frombuffer(buf, dtype=np.uint8)
    while True:
        # find the next 0xFF not followed by 0x00
        i = start
        while True:
            j = buf.find(b"\xff", i)
            if j < 0 or j + 1 >= n:
                raise JpegError("truncated stream: no marker after entropy-coded data", offset=n)
            if buf[j + 1] == 0x00:
                i = j + 2
                continue
            if buf[j + 1] == 0xFF:  # fill byte
                i = j + 1
                continue
            break
        end = j
        while end > start and raw[end - 1] == 0xFF:  # fill bytes before the marker
            end -= 1
        idx = np.arange(start, end)
        chunk = raw[start:end]
        keep = np.ones(len(chunk), dtype=bool)
        ff = np.flatnonzero(chunk == 0xFF)
        keep[ff + 1] = False
        pieces.append((chunk[keep].tobytes(), idx[keep]))
        m = buf[j + 1]
        if 0xD0 <= m <= 0xD7:
            start = j + 2
            continue
        return pieces, j


IDCT_METHODS = ("islow", "float")


def decode(data: bytes, idct: str = "islow") -> np.ndarray:
    """Decode a baseline JFIF stream to an (H, W, C) uint8 array.

    ``idct="islow"`` uses the integer inverse DCT and fixed-point color
    conversion of libjpeg; ``"float"`` uses the orthonormal float IDCT and
    BT.601 conversion with round-half-away-from-zero.
    """
    if idct not in IDCT_METHODS:
        raise ValueError(f"idct must be one of {IDCT_METHODS}")
    buf = bytes(data)
    n = len(buf)
    if n < 2 or buf[:2] != b"\xff\xd8":
        raise JpegError("missing SOI marker", offset=0)
    pos = 2
    qtables: dict[int, np.ndarray] = {}
    dc_tabs: dict[int, DecodeTable] = {}
    ac_tabs: dict[int, DecodeTable] = {}
    comps: list[_Component] = []
    frame = None
    restart = 0
    while True:
        # skip fill bytes
        while pos < n and buf[pos] == 0xFF and pos + 1 < n and buf[pos + 1] == 0xFF:
            pos += 1
        if pos + 2 > n:
            raise JpegError("truncated stream: expected a marker", offset=pos)
        if buf[pos] != 0xFF:
            raise JpegError(f"expected marker, found byte 0x{buf[pos]:02X}", offset=pos)
        m = buf[pos + 1]
        mpos = pos
        pos += 2
        if m == EOI:
            break
        if m in _UNSUPPORTED_SOF:
            raise JpegError(f"unsupported JPEG process: {_marker_name(m)}", offset=mpos)
        if 0xD0 <= m <= 0xD7 or m == 0x01:
            continue
        if pos + 2 > n:
            raise JpegError(f"truncated segment header for marker 0x{m:02X}", offset=pos)
        (length,) = struct.unpack(">H", buf[pos : pos + 2])
        if length < 2 or pos + length > n:
            raise JpegError(f"truncated segment for marker 0x{m:02X}: length {length}", offset=pos)
        seg = buf[pos + 2 : pos + length]
        seg_off = pos + 2
        pos += length

        if m == DQT:
            k = 0
            while k < len(seg):
                pq, tq = seg[k] >> 4, seg[k] & 0x0F
                size = 128 if pq else 64
                if k + 1 + size > len(seg):
                    raise JpegError("truncated DQT segment", offset=seg_off + k)
                if pq:
                    vals = np.frombuffer(seg[k + 1 : k + 1 + size], dtype=">u2").astype(np.int64)
                else:
                    vals = np.frombuffer(seg[k + 1 : k + 1 + size], dtype=np.uint8).astype(np.int64)
                qtables[tq] = from_zigzag(vals)
                k += 1 + size
        elif m == DHT:
            k = 0
            while k < len(seg):
                if k + 17 > len(seg):
                    raise JpegError("truncated DHT segment", offset=seg_off + k)
                tc, th = seg[k] >> 4, seg[k] & 0x0F
                counts = tuple(seg[k + 1 : k + 17])
                total = sum(counts)
                if k + 17 + total > len(seg):
                    raise JpegError("truncated DHT segment", offset=seg_off + k)
                symbols = tuple(seg[k + 17 : k + 17 + total])
                (dc_tabs if tc == 0 else ac_tabs)[th] = DecodeTable(counts, symbols)
                k += 17 + total
        elif m in (SOF0, SOF1):
            if len(seg) < 6:
                raise JpegError("truncated SOF segment", offset=seg_off)
            precision, height, width, nc = struct.unpack(">BHHB", seg[:6])
            if precision != 8:
                raise JpegError(f"unsupported sample precision {precision}", offset=seg_off)
            if height == 0:
                raise JpegError("DNL-defined height is not supported", offset=seg_off)
            if nc not in (1, 3) or len(seg) < 6 + 3 * nc:
                raise JpegError(f"unsupported component count {nc}", offset=seg_off)
            comps = []
            for c in range(nc):
                ident, hv, tq = seg[6 + 3 * c : 9 + 3 * c]
                comps.append(_Component(ident, hv >> 4, hv & 0x0F, tq))
            frame = (height, width)
            hmax = max(c.h for c in comps)
            vmax = max(c.v for c in comps)
            mcux = -(-width // (8 * hmax))
            mcuy = -(-height // (8 * vmax))
            for c in comps:
                if hmax % c.h or vmax % c.v:
                    raise JpegError("non-integer sampling ratios are not supported", offset=seg_off)
                c.coefs = np.zeros((mcuy * c.v, mcux * c.h, 64), dtype=np.int64)
        elif m == DRI:
            (restart,) = struct.unpack(">H", seg[:2])
        elif m == SOS:
            if frame is None:
                raise JpegError("SOS before SOF", offset=mpos)
            ns = seg[0]
            scomps = []
            for k in range(ns):
                cid, tables = seg[1 + 2 * k], seg[2 + 2 * k]
                try:
                    comp = next(c for c in comps if c.ident == cid)
                except StopIteration:
                    raise JpegError(f"scan references unknown component {cid}", offset=seg_off) from None
                comp.dc_table, comp.ac_table = tables >> 4, tables & 0x0F
                scomps.append(comp)
            pieces, pos = _entropy_segment(buf, pos)
            _decode_scan(pieces, scomps, comps, frame, restart, dc_tabs, ac_tabs, pos)
        # APPn, COM and anything else carry nothing the decoder needs

    if frame is None:
        raise JpegError("no frame header (SOF) found", offset=pos)
    return _reconstruct(comps, frame, qtables, idct)


def _cdiv(a, b):
    return -(-a // b)


def _decode_scan(pieces, scomps, comps, frame, restart, dc_tabs, ac_tabs, end_pos):
    height, width = frame
    hmax = max(c.h for c in comps)
    vmax = max(c.v for c in comps)
    for c in scomps:
        if c.dc_table not in dc_tabs or c.ac_table not in ac_tabs:
            raise JpegError(f"component {c.ident} uses an undefined Huffman table", offset=end_pos)
    if len(scomps) == 1:
        c = scomps[0]
        bw = _cdiv(_cdiv(width * c.h, hmax), 8)
        bh = _cdiv(_cdiv(height * c.v, vmax), 8)
        units = [[(c, by, bx)] for by in range(bh) for bx in range(bw)]
    else:
        mcux = -(-width // (8 * hmax))
        mcuy = -(-height // (8 * vmax))
        units = [
            [(c, my * c.v + by, mx * c.h + bx) for c in scomps for by in range(c.v) for bx in range(c.h)]
            for my in range(mcuy)
            for mx in range(mcux)
        ]
    interval = restart or len(units)
    piece_iter = iter(pieces)
    for start in range(0, len(units), interval):
        try:
            data, offsets = next(piece_iter)
        except StopIteration:
            raise JpegError("missing restart interval data", offset=end_pos) from None
        reader = BitReader(data, offsets)
        preds = {id(c): 0 for c in scomps}
        for unit in units[start : start + interval]:
            for c, by, bx in unit:
                zz, preds[id(c)] = decode_block(reader, preds[id(c)], dc_tabs[c.dc_table], ac_tabs[c.ac_table])
                c.coefs[by, bx] = zz


def _reconstruct(comps, frame, qtables, idct):
    height, width = frame
    hmax = max(c.h for c in comps)
    vmax = max(c.v for c in comps)
    planes = []
    for c in comps:
        if c.tq not in qtables:
            raise JpegError(f"component {c.ident} uses undefined quantization table {c.tq}")
        nat = from_zigzag(c.coefs) * qtables[c.tq]
        by, bx = nat.shape[:2]
        if idct == "islow":
            pix = idct8x8_islow(nat.reshape(by, bx, 8, 8))
        else:
            pix = _to_u8(idct8x8(nat.reshape(by, bx, 8, 8)) + 128.0)
        plane = pix.transpose(0, 2, 1, 3).reshape(by * 8, bx * 8)
        plane = np.repeat(np.repeat(plane, vmax // c.v, axis=0), hmax // c.h, axis=1)
        planes.append(plane[:height, :width])
    if len(planes) == 1:
        return planes[0][:, :, None]
    ycc = np.stack(planes, axis=-1)
    return ycbcr_to_rgb_fixed(ycc) if idct == "islow" else ycbcr_to_rgb(ycc)


def jpg_project(img, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """Compress and decompress; an image-to-image map onto decodable JPEG bitmaps."""
    return decode(encode(img, cfg))


# exposed for tests of the entropy-coding layer
def quantized_blocks(img, cfg: CodecConfig = CodecConfig()):
    """Zigzag-ordered quantized luma blocks of a grayscale image."""
    img = as_image(img)
    tables = quality_to_tables(cfg.quality)
    plane = _pad_edge(img[:, :, 0], 8, 8)
    return to_zigzag(_quantize(plane, tables.luma).reshape(-1, 64))


__all__ = ["CodecConfig", "JpegError", "encode", "decode", "jpg_project", "ZIGZAG"]
