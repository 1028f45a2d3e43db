"""Baseline JPEG codec used as the JPG[x] operator."""
from .analysis import DctProfile, dct_profile, mse, psnr
from .codec import CodecConfig, decode, encode, jpg_project
from .dct import fdct8x8, idct8x8
from .errors import JpegError
from .tables import QuantTables, ZIGZAG, from_zigzag, quality_to_tables, to_zigzag

__all__ = [
    "CodecConfig", "DctProfile", "JpegError", "QuantTables", "ZIGZAG",
    "dct_profile", "decode", "encode", "fdct8x8", "from_zigzag", "idct8x8",
    "jpg_project", "mse", "psnr", "quality_to_tables", "to_zigzag",
]
