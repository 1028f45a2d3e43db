"""
JPG projection of a natural image
=================================

Encode a fixture at several quality levels, decode it again, and look at
how much error each level introduces and where (by DCT frequency) the
error sits.
"""
from pathlib import Path

import numpy as np

from jpgdefense.jpeg import CodecConfig, dct_profile, decode, encode, jpg_project, psnr
from jpgdefense.pnm import read_pnm

here = Path(__file__).resolve().parent
img = read_pnm(here.parent / "tests" / "fixtures" / "natural" / "astronaut.ppm")
print("image", img.shape, img.dtype)

# Projection is encode followed by decode. The stream is an ordinary
# baseline JFIF file, so it can be written out and opened by any viewer.
for q in (95, 75, 40, 10):
    stream = encode(img, CodecConfig(q))
    out = decode(stream)
    print(f"quality {q:3d}: {len(stream):6d} bytes, PSNR {psnr(out, img):5.2f} dB")

# Projecting twice changes very little: the decoded image already lies
# almost exactly on the set of images the codec can represent.
once = jpg_project(img)
twice = jpg_project(once)
print(f"re-projection PSNR {psnr(twice, once):.1f} dB")

# The compression error lives mostly in high frequencies. Sum the energy
# of the luma difference over the 8x8 DCT bins, in zigzag order.
prof = dct_profile(once, img)
low, mid, high = prof.energy[:6].sum(), prof.energy[6:28].sum(), prof.energy[28:].sum()
print(f"error energy low/mid/high: {low / prof.total:.2f} {mid / prof.total:.2f} {high / prof.total:.2f}")

# Projection does not simply subtract a small perturbation. A +-1 random
# sign pattern flips many rounding decisions in the quantizer, so the two
# projected images end up about as far apart as the inputs were.
rng = np.random.default_rng(0)
noisy = np.clip(img.astype(int) + rng.choice([-1, 1], img.shape), 0, 255).astype(np.uint8)
err_before = np.abs(noisy.astype(int) - img).mean()
err_after = np.abs(jpg_project(noisy).astype(int) - once).mean()
print(f"mean |difference| {err_before:.2f} before projection, {err_after:.2f} after")
