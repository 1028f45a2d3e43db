"""
The full transformation table at desk scale
===========================================

Train the reference CNN with default settings, then evaluate the chains
x, JPG[x], ADV_e(x), JPG[ADV_e(x)] and NOISE[ADV_e(x)] on the first 1000
MNIST test images with the epsilons recorded in ``configs/mnist.cfg``.
Takes about two minutes on one core.

The same run from the shell::

    jpgdefense train --config configs/mnist.cfg --output-dir runs/mnist
    jpgdefense eval --config configs/mnist.cfg --output-dir runs/mnist
    jpgdefense report --output-dir runs/mnist
"""
from pathlib import Path

from jpgdefense.config import resolve
from jpgdefense.model import TrainConfig, reference_arch, train
from jpgdefense.pipeline import EvalConfig, emit_report, evaluate, load_dataset, standard_chains

repo = Path(__file__).resolve().parent.parent
cfg = resolve(repo / "configs" / "mnist.cfg", {"dataset": str(repo / "data" / "mnist")})

weights = train(reference_arch(), load_dataset(cfg.dataset, cfg.format, "train"), TrainConfig())
test = load_dataset(cfg.dataset, cfg.format, cfg.split).head(cfg.limit)
chains = standard_chains(cfg.epsilons, cfg.quality, cfg.epsilons[0])
report = evaluate(weights, test, chains, EvalConfig(seed=cfg.seed))
print(emit_report(report))

# Accuracy recovered by projection, as a fraction of what the attack took away.
clean = report.summary("x").accuracy
for eps in cfg.epsilons:
    adv = report.summary(f"ADV_{eps}(x)").accuracy
    jpg = report.summary(f"JPG[ADV_{eps}(x)]").accuracy
    print(f"eps {eps:2d}: recovered {(jpg - adv) / (clean - adv):.2f} of the gap")

# Per-image box statistics of the clean-label probability, one chain.
box = report.summary(f"JPG[ADV_{cfg.epsilons[0]}(x)]").box
print("JPG[ADV] p(top) median", round(box.median, 3), "IQR", round(box.q1, 3), round(box.q3, 3),
      "outliers", box.outlier_count)
