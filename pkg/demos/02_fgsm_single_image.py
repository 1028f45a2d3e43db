"""
One digit, attacked and projected
=================================

Train the reference CNN on a slice of MNIST, attack one test digit with
FGSM and follow the probability of its clean top label through JPG
projection and the JPG-noise control.

Needs ``data/mnist`` (see ``scripts/fetch_mnist.py``).
"""
from pathlib import Path

import numpy as np

from jpgdefense.adversarial import AttackSpec, PermSeed, fgsm, jpg_noise
from jpgdefense.jpeg import jpg_project
from jpgdefense.model import TrainConfig, image_to_input, predict, reference_arch, train
from jpgdefense.pipeline import load_dataset

root = Path(__file__).resolve().parent.parent / "data" / "mnist"
data = load_dataset(root, "mnist-idx", "train").head(10000)
weights = train(reference_arch(), data, TrainConfig(epochs=2))
print("epoch losses", np.round(weights.meta["epoch_losses"], 4))

test = load_dataset(root, "mnist-idx", "test")
img, label = test.images[0], test.labels[0]
clean = predict(weights, image_to_input(weights, img))
top = clean.top_class
print(f"label {label}, clean prediction {top} with p = {clean.top_prob:.3f}")


def p_top(x):
    return predict(weights, image_to_input(weights, x)).probs[top]


# Epsilon is in 0..255 pixel units. MNIST models shrug off tiny
# perturbations, so the interesting range is much larger than for photos.
for eps in (8, 16, 32, 64):
    adv = fgsm(weights, img, AttackSpec(eps))
    row = [p_top(adv), p_top(jpg_project(adv)), p_top(jpg_noise(adv, seed=PermSeed(0, 0)))]
    argmax = predict(weights, image_to_input(weights, adv)).top_class
    print(f"eps {eps:2d}: p(top) adv {row[0]:.3f}  JPG {row[1]:.3f}  noise {row[2]:.3f}  (adv argmax {argmax})")

# A text rendering of the clean and eps=32 images.
adv = fgsm(weights, img, AttackSpec(32))
for a, b in zip(img[:, :, 0][4:24], adv[:, :, 0][4:24]):
    print("".join(" .:#"[v // 64] for v in a[2:26]), "  ", "".join(" .:#"[v // 64] for v in b[2:26]))
