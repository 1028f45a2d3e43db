"""Regenerate the pinned codec fixtures in ``tests/fixtures``.

Run once; outputs are committed and tests compare against them. Requires
scikit-image (source pictures) and Pillow (third-party libjpeg reference).

    python scripts/make_fixtures.py
"""
import hashlib
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

from jpgdefense.jpeg import CodecConfig, encode, jpg_project, psnr
from jpgdefense.pnm import write_pnm

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

NATURAL = {
    "astronaut": lambda: data.astronaut()[90:186, 160:260],
    "coffee": lambda: data.coffee()[60:141, 210:307],
    "chelsea": lambda: data.chelsea()[40:112, 110:221],
    "camera": lambda: data.camera()[80:160, 200:283][:, :, None],
    "rocket": lambda: data.rocket()[100:164, 180:244],
    "moon": lambda: data.moon()[200:264, 200:275][:, :, None],
}


def _finite(x):
    return round(x, 3) if np.isfinite(x) else None


def golden16():
    y, x = np.mgrid[0:16, 0:16]
    r = (x * 16 + y) % 256
    g = (255 - y * 15) % 256
    b = ((x ^ y) * 17) % 256
    return np.stack([r, g, b], axis=-1).astype(np.uint8)


def libjpeg_reference(img, subsampling, quality=75):
    bio = io.BytesIO()
    pil = Image.fromarray(img[:, :, 0] if img.shape[2] == 1 else img)
    pil.save(bio, "JPEG", quality=quality, subsampling=subsampling)
    stream = bio.getvalue()
    raster = np.asarray(Image.open(io.BytesIO(stream)))
    if raster.ndim == 2:
        raster = raster[:, :, None]
    return stream, raster


def main():
    (OUT / "natural").mkdir(parents=True, exist_ok=True)
    manifest = {"psnr_floor_db": 25.0, "fixed_point_floor_db": 40.0, "natural": {}}
    for name, get in NATURAL.items():
        img = np.ascontiguousarray(get())
        ext = "pgm" if img.shape[2] == 1 else "ppm"
        write_pnm(OUT / "natural" / f"{name}.{ext}", img)
        once = jpg_project(img, CodecConfig(75))
        twice = jpg_project(once, CodecConfig(75))
        manifest["natural"][name] = {
            "file": f"natural/{name}.{ext}",
            "shape": list(img.shape),
            "psnr_q75_db": round(psnr(once, img), 3),
            # null when the second projection reproduces the first exactly
            "fixed_point_psnr_db": _finite(psnr(twice, once)),
        }

    g = golden16()
    write_pnm(OUT / "golden16.ppm", g)
    stream = encode(g, CodecConfig(75))
    (OUT / "golden16_q75.jpg").write_bytes(stream)
    manifest["golden16_q75_sha256"] = hashlib.sha256(stream).hexdigest()

    chelsea = data.chelsea()[60:108, 150:190]
    for tag, img, ss in [("libjpeg_444", chelsea, 0), ("libjpeg_gray", data.camera()[300:340, 250:306][:, :, None], 0),
                         ("libjpeg_420", chelsea, 2)]:
        stream, raster = libjpeg_reference(img, ss)
        (OUT / f"ref_{tag}.jpg").write_bytes(stream)
        write_pnm(OUT / f"ref_{tag}.{'pgm' if raster.shape[2] == 1 else 'ppm'}", raster)
    manifest["reference_decoder"] = f"Pillow {Image.__version__} (libjpeg), quality 75"

    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps(manifest, indent=2))


if __name__ == "__main__":
    main()
