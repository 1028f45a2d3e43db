"""Resize / center-crop / standardize."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ModelWeights, image_to_input


@dataclass(frozen=True)
class PreprocessConfig:
    resize_min_dim: int | None = None
    crop_size: int | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.resize_min_dim is not None and self.crop_size is not None and self.crop_size > self.resize_min_dim:
            raise ValueError("crop_size must not exceed resize_min_dim")


class PreprocessError(ValueError):
    pass


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def resized_shape(h: int, w: int, min_dim: int) -> tuple[int, int]:
    """Aspect-preserving size whose smaller side is ``min_dim``; the other side rounds half up."""
    if h <= w:
        return min_dim, _round_half_up(w * min_dim / h)
    return _round_half_up(h * min_dim / w), min_dim


def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment, rounded back to uint8."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    y0, y1, fy = coords(out_h, h)
    x0, x1, fx = coords(out_w, w)
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def crop_offsets(h: int, w: int, size: int) -> tuple[int, int]:
    return (h - size) // 2, (w - size) // 2


def prepare_image(img, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Geometry part of preprocessing; stays an 8-bit bitmap so it can be attacked and compressed."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if cfg.resize_min_dim is not None:
        img = resize_bilinear(img, *resized_shape(img.shape[0], img.shape[1], cfg.resize_min_dim))
    if cfg.crop_size is not None:
        h, w = img.shape[:2]
        if h < cfg.crop_size or w < cfg.crop_size:
            raise PreprocessError(f"image {h}x{w} smaller than crop {cfg.crop_size}")
        oy, ox = crop_offsets(h, w, cfg.crop_size)
        img = img[oy : oy + cfg.crop_size, ox : ox + cfg.crop_size]
    return np.ascontiguousarray(img)


def preprocess(img, cfg: PreprocessConfig, weights: ModelWeights) -> np.ndarray:
    """Image -> standardized (C, H, W) input using the model's frozen statistics."""
    img = prepare_image(img, cfg)
    if not cfg.standardize:
        return (img.astype(np.float64).transpose(2, 0, 1) / 255.0).astype(np.float32)
    return image_to_input(weights, img)
