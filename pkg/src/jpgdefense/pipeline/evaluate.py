"""Per-image evaluation of transformation chains and aggregation into an EvalReport.

For every image x the clean top label l(x) is computed once. For each chain f
we record ``p(l(x) | f(x))`` (the probability of the *clean* top label after
the transformation), the post-transformation argmax, and whether that argmax
matches the ground-truth label.
"""
from __future__ import annotations

import json
import logging
import multiprocessing as mp
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..adversarial import AttackSpec, PermSeed, TieWarning, apply_sign, gradient_sign, jpg_noise
from ..jpeg import CodecConfig, JpegError, jpg_project
from ..model import ModelWeights, image_to_input, predict_probs
from .chains import TransformChain, parse_chain
from .metrics import BoxStats, boxplot_stats
from .preprocess import PreprocessConfig, PreprocessError, prepare_image

log = logging.getLogger(__name__)

SKIP_BUDGET = 0.01


class EvalError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    seed: int = 0
    subsampling: str = "4:2:0"
    preprocess: PreprocessConfig = PreprocessConfig()
    workers: int = 1
    skip_budget: float = SKIP_BUDGET


@dataclass(frozen=True)
class ChainSummary:
    name: str
    accuracy: float
    mean_prob: float
    box: BoxStats | None = None
    count: int = 0


@dataclass
class EvalReport:
    chains: list[str]
    image_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    clean_top: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    top_label_prob: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (images, chains)
    predicted: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int64))
    summaries: list[ChainSummary] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    tied: int = 0

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.labels[:, None]

    @classmethod
    def from_records(cls, chains, image_ids, labels, clean_top, top_label_prob, predicted, skipped=(), tied=0):
        rep = cls(list(chains), np.asarray(image_ids, np.int64), np.asarray(labels, np.int64),
                  np.asarray(clean_top, np.int64), np.asarray(top_label_prob, np.float64),
                  np.asarray(predicted, np.int64), [], list(skipped), int(tied))
        rep.summaries = summarize(rep)
        return rep

    @classmethod
    def from_summaries(cls, rows):
        """A report carrying only aggregates, from (name, accuracy, mean prob) rows."""
        return cls([r[0] for r in rows], summaries=[ChainSummary(r[0], float(r[1]), float(r[2])) for r in rows])

    def summary(self, name) -> ChainSummary:
        return self.summaries[self.chains.index(name)]

    def column(self, name) -> np.ndarray:
        return self.top_label_prob[:, self.chains.index(name)]


def summarize(rep: EvalReport) -> list[ChainSummary]:
    out = []
    correct = rep.correct
    for k, name in enumerate(rep.chains):
        p = rep.top_label_prob[:, k]
        if p.size == 0:
            out.append(ChainSummary(name, float("nan"), float("nan"), None, 0))
            continue
        out.append(ChainSummary(name, float(correct[:, k].mean()), float(p.mean()), boxplot_stats(p), int(p.size)))
    return out


# ---------------------------------------------------------------------------
# per-image work


def _apply(chain: TransformChain, img, sign, image_id, seed, subsampling, cache):
    """Apply ``chain`` to ``img``, reusing results of shared prefixes through ``cache``."""
    out = img
    for depth, step in enumerate(chain.steps):
        key = chain.steps[: depth + 1]
        if key in cache:
            out = cache[key]
            continue
        if step.kind == "fgsm":
            out = img.copy() if step.param == 0 else apply_sign(img, sign, AttackSpec(step.param))
        elif step.kind == "jpg":
            out = jpg_project(out, CodecConfig(step.param, subsampling))
        else:
            out = jpg_noise(out, CodecConfig(step.param, subsampling), PermSeed(seed, int(image_id)))
        cache[key] = out
    return out


def evaluate_image(weights: ModelWeights, img, image_id, chains, cfg: EvalConfig):
    """Returns (clean top label, tie flag, probs of clean label per chain, argmax per chain)."""
    img = prepare_image(img, cfg.preprocess)
    needs_sign = any(c.epsilon for c in chains)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TieWarning)
        if needs_sign:
            sign, pred = gradient_sign(weights, img)
            top, tied = pred.top_class, pred.tie_flag
        else:
            sign = None
            probs = predict_probs(weights, image_to_input(weights, img))
            top = int(np.argmax(probs))
            tied = bool(np.sum(probs >= probs[top] - 1e-9) > 1)
    cache = {}
    batch = np.stack([
        image_to_input(weights, _apply(c, img, sign, image_id, cfg.seed, cfg.subsampling, cache)) for c in chains
    ])
    probs = predict_probs(weights, batch)
    return top, tied, probs[:, top], probs.argmax(axis=1)


_WORKER = {}


def _init_worker(weights, chains, cfg):
    _WORKER.update(weights=weights, chains=chains, cfg=cfg)


def _run_chunk(items):
    w, chains, cfg = _WORKER["weights"], _WORKER["chains"], _WORKER["cfg"]
    return [_guarded(w, img, iid, chains, cfg) for iid, img in items]


def _guarded(weights, img, image_id, chains, cfg):
    try:
        return evaluate_image(weights, img, image_id, chains, cfg)
    except (JpegError, PreprocessError, ValueError) as exc:
        log.warning("skipping image %d: %s", image_id, exc)
        return None


def evaluate(weights: ModelWeights, data, chains, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Run every chain on every image; aggregation order follows the dataset order."""
    chains = [c if isinstance(c, TransformChain) else parse_chain(c) for c in chains]
    items = list(zip(data.ids.tolist(), data.images))
    if cfg.workers <= 1:
        results = [_guarded(weights, img, iid, chains, cfg) for iid, img in items]
    else:
        size = max(1, -(-len(items) // (cfg.workers * 4)))
        chunks = [items[i : i + size] for i in range(0, len(items), size)]
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(cfg.workers, mp_context=ctx, initializer=_init_worker,
                                 initargs=(weights, chains, cfg)) as pool:
            results = [r for chunk in pool.map(_run_chunk, chunks) for r in chunk]

    keep = [i for i, r in enumerate(results) if r is not None]
    skipped = [int(data.ids[i]) for i, r in enumerate(results) if r is None]
    if items and len(skipped) > cfg.skip_budget * len(items):
        raise EvalError(f"{len(skipped)} of {len(items)} images skipped, over the {cfg.skip_budget:.0%} budget")
    k = len(chains)
    top = np.array([results[i][0] for i in keep], dtype=np.int64)
    tied = sum(results[i][1] for i in keep)
    probs = np.array([results[i][2] for i in keep], dtype=np.float64).reshape(-1, k)
    pred = np.array([results[i][3] for i in keep], dtype=np.int64).reshape(-1, k)
    return EvalReport.from_records([c.name for c in chains], data.ids[keep], data.labels[keep], top, probs, pred,
                                   skipped, tied)


# ---------------------------------------------------------------------------
# persistence


def save_report(report: EvalReport, path) -> None:
    meta = json.dumps({"chains": report.chains, "skipped": report.skipped, "tied": report.tied})
    with open(path, "wb") as f:
        np.savez(f, meta=np.frombuffer(meta.encode(), dtype=np.uint8), image_ids=report.image_ids,
                 labels=report.labels, clean_top=report.clean_top, top_label_prob=report.top_label_prob,
                 predicted=report.predicted)


def load_report(path) -> EvalReport:
    with np.load(Path(path)) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        return EvalReport.from_records(meta["chains"], z["image_ids"], z["labels"], z["clean_top"],
                                       z["top_label_prob"], z["predicted"], meta["skipped"], meta["tied"])
