import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_cnn
from jpgdefense.adversarial import (
    AttackSpec, PermSeed, TieWarning, apply_sign, fgsm, gradient_sign, jpg_delta, jpg_noise, permuted_delta,
)
from jpgdefense.autodiff import finite_diff_gradient, loss_and_gradients
from jpgdefense.jpeg import CodecConfig, jpg_project
from jpgdefense.model import ArchitectureSpec, ModelWeights, affine, image_to_input, predict
from jpgdefense.pnm import read_pnm


def four_pixel_model():
    """A single affine layer on a 2x2 gray image with fixed weights."""
    arch = ArchitectureSpec((1, 2, 2), (affine(3),))
    w = np.array([[0.9, -0.4, 0.2, 0.0], [-0.3, 0.8, -0.5, 0.1], [0.1, 0.1, 0.6, -0.7]])
    return ModelWeights(arch, [(w, np.array([0.2, 0.0, -0.1]))], std_mean=0.4, std_scale=0.3)


def mid_image(rng, shape=(8, 8, 1)):
    return rng.integers(40, 216, shape, dtype=np.uint8)


class TestFgsm:
    def test_zero_epsilon_is_identity(self, rng):
        img = mid_image(rng)
        out = fgsm(small_cnn(0), img, AttackSpec(0))
        assert np.array_equal(out, img) and out is not img

    def test_saturated_pixel_stays_255(self):
        img = np.full((8, 8, 1), 255, np.uint8)
        sign = np.ones((8, 8, 1), np.int8)
        assert np.all(apply_sign(img, sign, AttackSpec(10)) == 255)

    def test_unclamped_leaves_range(self):
        img = np.full((2, 2, 1), 250, np.uint8)
        out = apply_sign(img, np.ones((2, 2, 1), np.int8), AttackSpec(10, clamp=False))
        assert out.max() == 260

    def test_sign_matches_finite_difference_oracle(self):
        w = four_pixel_model()
        img = np.array([[[100], [30]], [[200], [140]]], np.uint8)
        top = predict(w, image_to_input(w, img)).top_class

        def loss_of_pixels(p):
            x = w.standardize(p.reshape(1, 2, 2) / 255.0)
            return loss_and_gradients(w, x, top, dtype=np.float64)[0]

        fd = finite_diff_gradient(loss_of_pixels, img[:, :, 0].astype(np.float64).reshape(-1), 1e-3)
        sign, _ = gradient_sign(w, img)
        assert np.array_equal(sign.reshape(-1), np.sign(fd).astype(np.int8))
        out = fgsm(w, img, AttackSpec(5))
        assert np.array_equal(out.astype(int) - img, 5 * np.sign(fd).reshape(2, 2, 1))

    def test_zero_gradient_means_no_change(self):
        # pixel 2 has an all-zero weight column, so its gradient is exactly zero
        arch = ArchitectureSpec((1, 2, 2), (affine(2),))
        w = ModelWeights(arch, [(np.array([[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.0, 0.5]]), np.zeros(2))])
        img = np.array([[[10], [20]], [[30], [40]]], np.uint8)
        sign, _ = gradient_sign(w, img)
        assert sign[1, 0, 0] == 0
        assert fgsm(w, img, AttackSpec(3))[1, 0, 0] == 30

    @pytest.mark.parametrize("eps", [1, 5, 10, 40])
    def test_linf_bound(self, eps, rng):
        img = rng.integers(0, 256, (8, 8, 1), dtype=np.uint8)
        out = fgsm(small_cnn(1), img, AttackSpec(eps))
        assert out.dtype == np.uint8
        assert np.abs(out.astype(int) - img).max() <= eps

    def test_deterministic(self, rng):
        img = mid_image(rng)
        w = small_cnn(2)
        assert fgsm(w, img, AttackSpec(4)).tobytes() == fgsm(w, img, AttackSpec(4)).tobytes()

    def test_eps_and_two_eps_share_sign(self, rng):
        img = mid_image(rng)
        w = small_cnn(3)
        d1 = fgsm(w, img, AttackSpec(3)).astype(int) - img
        d2 = fgsm(w, img, AttackSpec(6)).astype(int) - img
        assert np.array_equal(np.sign(d1), np.sign(d2))

    def test_increases_loss_of_clean_label(self, rng):
        w = small_cnn(5)
        img = mid_image(rng)
        x = image_to_input(w, img)
        top = predict(w, x).top_class
        before = loss_and_gradients(w, x, top)[0]
        after = loss_and_gradients(w, image_to_input(w, fgsm(w, img, AttackSpec(2))), top)[0]
        assert after > before

    def test_tied_prediction_warns_and_uses_lowest_label(self):
        arch = ArchitectureSpec((1, 2, 2), (affine(3),))
        w = ModelWeights(arch, [(np.zeros((3, 4)), np.zeros(3))])
        with pytest.warns(TieWarning):
            _, pred = gradient_sign(w, np.zeros((2, 2, 1), np.uint8))
        assert pred.top_class == 0 and pred.tie_flag

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError):
            AttackSpec(-1)

    def test_color_geometry(self, rng):
        w = small_cnn(0, in_ch=3)
        img = mid_image(rng, (8, 8, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TieWarning)
            assert fgsm(w, img, AttackSpec(2)).shape == (8, 8, 3)


class TestJpgDelta:
    def test_reconstructs_projection(self, rng):
        img = rng.integers(0, 256, (17, 23, 3), dtype=np.uint8)
        d = jpg_delta(img)
        assert d.dtype == np.int16
        assert np.array_equal((img.astype(np.int16) + d).astype(np.uint8), jpg_project(img))

    @pytest.mark.parametrize("value", [0, 1, 77, 128, 254, 255])
    def test_uniform_image_delta_within_one(self, value):
        assert np.abs(jpg_delta(np.full((16, 16, 3), value, np.uint8))).max() <= 1

    def test_near_idempotence_on_fixtures(self, fixtures_dir):
        manifest = json.loads((fixtures_dir / "manifest.json").read_text())
        for name, entry in manifest["natural"].items():
            img = read_pnm(fixtures_dir / entry["file"])
            first = np.linalg.norm(jpg_delta(img).astype(float))
            second = np.linalg.norm(jpg_delta(jpg_project(img)).astype(float))
            assert second < first, name


class TestJpgNoise:
    def test_identity_permutation_is_projection(self, rng):
        img = rng.integers(0, 256, (12, 12, 3), dtype=np.uint8)
        ident = np.arange(img.size)
        assert np.array_equal(jpg_noise(img, permutation=ident), jpg_project(img))

    def test_multiset_preserved(self, rng):
        img = rng.integers(0, 256, (16, 16, 1), dtype=np.uint8)
        noise = permuted_delta(img, CodecConfig(), PermSeed(0, 3))
        assert np.array_equal(np.sort(noise.reshape(-1)), np.sort(jpg_delta(img).reshape(-1)))

    def test_same_seed_bit_identical(self, rng):
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        a = jpg_noise(img, seed=PermSeed(7, 11))
        b = jpg_noise(img, seed=PermSeed(7, 11))
        assert a.tobytes() == b.tobytes()

    def test_seed_components_matter(self, rng):
        img = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        a = permuted_delta(img, CodecConfig(), PermSeed(7, 11))
        assert not np.array_equal(a, permuted_delta(img, CodecConfig(), PermSeed(7, 12)))
        assert not np.array_equal(a, permuted_delta(img, CodecConfig(), PermSeed(8, 11)))

    def test_output_is_clamped_image(self, rng):
        img = rng.choice(np.array([0, 255], np.uint8), (16, 16, 1))
        out = jpg_noise(img, seed=PermSeed(0, 0))
        assert out.dtype == np.uint8 and out.shape == img.shape

    def test_permutation_length_checked(self, rng):
        img = rng.integers(0, 256, (8, 8, 1), dtype=np.uint8)
        with pytest.raises(ValueError):
            jpg_noise(img, permutation=np.arange(10))

    def test_permutation_is_uniform_ish(self):
        # each position should land everywhere with roughly equal frequency
        counts = np.zeros((6, 6))
        for k in range(3000):
            perm = PermSeed(1, k).rng().permutation(6)
            counts[np.arange(6), perm] += 1
        assert np.abs(counts / 3000 - 1 / 6).max() < 0.03


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), index=st.integers(0, 10**6), h=st.integers(1, 24), w=st.integers(1, 24),
       c=st.sampled_from([1, 3]))
def test_property_noise_histogram_matches_delta(seed, index, h, w, c):
    img = np.random.default_rng(seed).integers(0, 256, (h, w, c), dtype=np.uint8)
    noise = permuted_delta(img, CodecConfig(), PermSeed(seed, index))
    delta = jpg_delta(img)
    assert np.array_equal(np.bincount(noise.reshape(-1) + 255), np.bincount(delta.reshape(-1) + 255))
