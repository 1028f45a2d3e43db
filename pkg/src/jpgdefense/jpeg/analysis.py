"""Image-difference metrics: PSNR and the per-frequency DCT energy profile."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import _pad_edge, as_image
from .dct import fdct8x8
from .tables import to_zigzag


def mse(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak=255.0) -> float:
    m = mse(a, b)
    return float("inf") if m == 0 else float(10 * np.log10(peak**2 / m))


def luma(img) -> np.ndarray:
    """Unrounded BT.601 luma as float64, (H, W)."""
    x = np.asarray(img, dtype=np.float64)
    if x.shape[2] == 1:
        return x[:, :, 0]
    return 0.299 * x[:, :, 0] + 0.587 * x[:, :, 1] + 0.114 * x[:, :, 2]


@dataclass(frozen=True)
class DctProfile:
    energy: np.ndarray  # 64 entries, zigzag order

    @property
    def total(self) -> float:
        return float(self.energy.sum())

    def band_fractions(self, edges=(1, 6, 28, 64)):
        """Energy share in consecutive zigzag ranges, e.g. DC / low / mid / high."""
        tot = self.total
        out, lo = [], 0
        for hi in edges:
            out.append(float(self.energy[lo:hi].sum() / tot) if tot else 0.0)
            lo = hi
        return out


def dct_profile(a, b) -> DctProfile:
    """Mean squared DCT coefficient of the luma difference ``a - b`` per zigzag bin.

    Partial edge tiles are completed by edge replication, as in the codec.
    """
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    diff = _pad_edge(luma(a) - luma(b), 8, 8)
    h, w = diff.shape
    tiles = diff.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coefs = fdct8x8(tiles).reshape(-1, 64)
    return DctProfile(to_zigzag(np.mean(coefs**2, axis=0)))
