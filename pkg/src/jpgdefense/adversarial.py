"""Fast Gradient Sign images, JPG projection deltas and the permuted JPG-noise control."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import loss_and_gradients
from .jpeg import CodecConfig, jpg_project
from .jpeg.codec import as_image
from .model import ModelWeights, image_to_input, predict


class TieWarning(UserWarning):
    """The clean prediction's maximum probability is attained by several classes."""


@dataclass(frozen=True)
class AttackSpec:
    epsilon: int
    clamp: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


@dataclass(frozen=True)
class PermSeed:
    global_seed: int
    image_index: int

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.global_seed, self.image_index]))


def gradient_sign(weights: ModelWeights, img):
    """Sign of d loss(x, top label) / d pixel, as int8 (H, W, C), plus the clean prediction.

    The loss is taken w.r.t. the standardized input and mapped to pixel units
    through the positive standardization scale, which leaves the sign intact.
    """
    img = as_image(img)
    x = image_to_input(weights, img)
    pred = predict(weights, x)
    if pred.tie_flag:
        warnings.warn(f"clean prediction is tied; attacking lowest-index label {pred.top_class}", TieWarning,
                      stacklevel=2)
    _, grads = loss_and_gradients(weights, x, pred.top_class)
    pixel_grad = grads.input_grad / (255.0 * weights.std_scale)
    sign = np.sign(pixel_grad).astype(np.int8).transpose(1, 2, 0)
    return sign, pred


def apply_sign(img, sign, spec: AttackSpec):
    out = np.asarray(img, dtype=np.int16) + np.int16(spec.epsilon) * sign.astype(np.int16)
    if spec.clamp:
        return np.clip(out, 0, 255).astype(np.uint8)
    return out


def fgsm(weights: ModelWeights, img, spec: AttackSpec):
    """``clamp(img + eps * sign(grad), 0, 255)`` where eps is in 0..255 pixel units.

    With ``clamp=False`` the unclipped int16 result is returned: it need not
    be a valid 8-bit image.
    """
    if spec.epsilon == 0:
        return as_image(img).copy()
    sign, _ = gradient_sign(weights, img)
    return apply_sign(img, sign, spec)


def jpg_delta(img, cfg: CodecConfig = CodecConfig()) -> np.ndarray:
    """``JPG[img] - img`` as exact int16."""
    img = as_image(img)
    return jpg_project(img, cfg).astype(np.int16) - img.astype(np.int16)


def permuted_delta(img_adv, cfg: CodecConfig, seed: PermSeed, permutation=None) -> np.ndarray:
    """The JPG delta with all pixel-channel positions shuffled (before adding and clamping)."""
    delta = jpg_delta(img_adv, cfg)
    flat = delta.reshape(-1)
    if permutation is None:
        permutation = seed.rng().permutation(flat.size)
    permutation = np.asarray(permutation)
    if permutation.shape != flat.shape:
        raise ValueError(f"permutation has {permutation.size} entries, need {flat.size}")
    return flat[permutation].reshape(delta.shape)


def jpg_noise(img_adv, cfg: CodecConfig = CodecConfig(), seed: PermSeed = PermSeed(0, 0), permutation=None):
    """``clamp(img_adv + P * (JPG[img_adv] - img_adv))`` for a seeded random permutation P.

    ``permutation`` overrides the seeded draw (e.g. the identity, which
    reduces this to plain JPG projection).
    """
    img_adv = as_image(img_adv)
    noise = permuted_delta(img_adv, cfg, seed, permutation)
    return np.clip(img_adv.astype(np.int16) + noise, 0, 255).astype(np.uint8)
