"""Orthonormal 8x8 DCT-II as used by JPEG (row index = vertical frequency)."""
import numpy as np

_u = np.arange(8)[:, None]
_x = np.arange(8)[None, :]
# C[u, x] = c(u)/2 cos((2x+1) u pi / 16), c(0) = 1/sqrt(2)
DCT_MATRIX = np.where(_u == 0, 1 / np.sqrt(2), 1.0) / 2 * np.cos((2 * _x + 1) * _u * np.pi / 16)


def _as_blocks(a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-2:] == (8, 8):
        return a, False
    if a.shape[-1] == 64:
        return a.reshape(a.shape[:-1] + (8, 8)), True
    raise ValueError(f"expected (..., 8, 8) or (..., 64) blocks, got {a.shape}")


def fdct8x8(block):
    """Forward DCT of level-shifted samples; accepts any leading batch shape."""
    b, flat = _as_blocks(block)
    out = DCT_MATRIX @ b @ DCT_MATRIX.T
    return out.reshape(out.shape[:-2] + (64,)) if flat else out


def idct8x8(coeffs):
    c, flat = _as_blocks(coeffs)
    out = DCT_MATRIX.T @ c @ DCT_MATRIX
    return out.reshape(out.shape[:-2] + (64,)) if flat else out


# Integer "islow" inverse DCT (13-bit constants, 2 extra bits between
# passes), the default in libjpeg. Decoding with it reproduces libjpeg's
# rasters exactly for non-subsampled streams.
_CONST_BITS = 13
_PASS1_BITS = 2


def _fix(x):
    return int(x * (1 << _CONST_BITS) + 0.5)


_F0298, _F0390, _F0541, _F0765 = _fix(0.298631336), _fix(0.390180644), _fix(0.541196100), _fix(0.765366865)
_F0899, _F1175, _F1501, _F1847 = _fix(0.899976223), _fix(1.175875602), _fix(1.501321110), _fix(1.847759065)
_F1961, _F2053, _F2562, _F3072 = _fix(1.961570560), _fix(2.053119869), _fix(2.562915447), _fix(3.072711026)


def _descale(x, n):
    return (x + (1 << (n - 1))) >> n


def _idct_1d(v, shift):
    """One islow pass along axis -2; ``v`` is int64 (..., 8, 8)."""
    z2, z3 = v[..., 2, :], v[..., 6, :]
    z1 = (z2 + z3) * _F0541
    tmp2 = z1 - z3 * _F1847
    tmp3 = z1 + z2 * _F0765
    tmp0 = (v[..., 0, :] + v[..., 4, :]) << _CONST_BITS
    tmp1 = (v[..., 0, :] - v[..., 4, :]) << _CONST_BITS
    t10, t13 = tmp0 + tmp3, tmp0 - tmp3
    t11, t12 = tmp1 + tmp2, tmp1 - tmp2

    o0, o1, o2, o3 = v[..., 7, :], v[..., 5, :], v[..., 3, :], v[..., 1, :]
    z1, z2, z3, z4 = o0 + o3, o1 + o2, o0 + o2, o1 + o3
    z5 = (z3 + z4) * _F1175
    o0, o1, o2, o3 = o0 * _F0298, o1 * _F2053, o2 * _F3072, o3 * _F1501
    z1, z2 = z1 * -_F0899, z2 * -_F2562
    z3, z4 = z3 * -_F1961 + z5, z4 * -_F0390 + z5
    o0 += z1 + z3
    o1 += z2 + z4
    o2 += z2 + z3
    o3 += z1 + z4
    rows = [t10 + o3, t11 + o2, t12 + o1, t13 + o0, t13 - o0, t12 - o1, t11 - o2, t10 - o3]
    return np.stack([_descale(r, shift) for r in rows], axis=-2)


def idct8x8_islow(coeffs):
    """Dequantized natural-order coefficients (..., 8, 8) -> uint8 samples, level shift included."""
    c = np.asarray(coeffs, dtype=np.int64)
    cols = _idct_1d(c, _CONST_BITS - _PASS1_BITS)
    # second pass over rows: transpose so axis -2 is the horizontal frequency
    out = _idct_1d(np.swapaxes(cols, -1, -2), _CONST_BITS + _PASS1_BITS + 3)
    return np.clip(np.swapaxes(out, -1, -2) + 128, 0, 255).astype(np.uint8)
