"""``jpgdefense`` command line: train, attack, eval, report, codec-selftest.

Every command reads an optional flat config file (``--config``); any
config key can also be given as a flag (``--output-dir``, ``--quality`` ...),
and flags win. The fully resolved configuration is written into the output
directory as ``<command>.config``, which can be fed back with ``--config``.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError, RunConfig

log = logging.getLogger("jpgdefense")

COMMANDS = ("train", "attack", "eval", "report", "codec-selftest")


class CommandError(RuntimeError):
    pass


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jpgdefense", description="FGSM attacks and JPG projection defense experiments.")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)
    helps = {
        "train": "train the reference CNN and write the weight file",
        "attack": "write FGSM images (PGM/PPM) for every epsilon",
        "eval": "evaluate transformation chains; writes report.npz, report.csv, report.txt",
        "report": "render the report stored in the output directory",
        "codec-selftest": "run the codec invariant checks",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        sp.add_argument("--config", help="flat 'key = value' file")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in config_mod.FIELDS:
            sp.add_argument(_flag(key), dest=f"set_{key}", metavar="VALUE", default=None)
    return p


def overrides_from_args(args) -> dict:
    out = {}
    for key in config_mod.FIELDS:
        raw = getattr(args, f"set_{key}")
        if raw is not None:
            try:
                out[key] = config_mod.coerce(key, raw)
            except ConfigError as exc:
                raise ConfigError(f"{_flag(key)}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# commands


def _load_model(cfg: RunConfig):
    from .model import load_weights

    path = cfg.model_path
    if not path.exists():
        raise CommandError(f"model file not found: {path}")
    return load_weights(path)


def _load_data(cfg: RunConfig, split=None, limit=None):
    from .pipeline import load_dataset

    return load_dataset(cfg.dataset, cfg.format, split or cfg.split).head(limit)


def cmd_train(cfg: RunConfig, out):
    from .model import TrainConfig, reference_arch, save_weights, train

    data = _load_data(cfg, "train", cfg.train_limit)
    val = _load_data(cfg, "validation") if cfg.format != "ppm-dir" else None
    shape = np.asarray(data.images[0]).shape
    arch = reference_arch((shape[2], shape[0], shape[1]), len(data.class_names) or int(data.labels.max()) + 1)
    hyper = TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum, cfg.seed, cfg.std_mode)
    weights = train(arch, data, hyper, validation=val, class_names=data.class_names)
    path = cfg.model_path
    path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, path)
    losses = ", ".join(f"{v:.4f}" for v in weights.meta["epoch_losses"])
    acc = weights.meta.get("val_accuracy")
    out(f"epoch losses: {losses}")
    if acc is not None:
        out(f"validation accuracy: {acc:.4f}")
    out(f"wrote {path}")


def cmd_attack(cfg: RunConfig, out):
    from .adversarial import AttackSpec, TieWarning, apply_sign, gradient_sign
    from .pipeline import PreprocessConfig, prepare_image
    from .pnm import write_pnm

    weights = _load_model(cfg)
    data = _load_data(cfg, limit=cfg.limit)
    pre = PreprocessConfig(cfg.resize_min_dim, cfg.crop_size)
    root = Path(cfg.output_dir) / "adversarial"
    count = 0
    for image_id, img, label in zip(data.ids, data.images, data.labels):
        img = prepare_image(img, pre)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TieWarning)
            sign, _ = gradient_sign(weights, img)
        ext = "pgm" if img.shape[2] == 1 else "ppm"
        for eps in cfg.epsilons:
            d = root / f"eps_{eps}"
            d.mkdir(parents=True, exist_ok=True)
            write_pnm(d / f"{int(image_id):06d}_{int(label)}.{ext}", apply_sign(img, sign, AttackSpec(eps)))
            count += 1
    out(f"wrote {count} images under {root}")


def _chains(cfg: RunConfig):
    from .pipeline import parse_chain, standard_chains

    if cfg.chains:
        return [parse_chain(c) for c in cfg.chains]
    return standard_chains(cfg.epsilons, cfg.quality, cfg.epsilons[0] if cfg.epsilons else None)


def cmd_eval(cfg: RunConfig, out):
    from .pipeline import EvalConfig, PreprocessConfig, emit_report, evaluate, save_report

    weights = _load_model(cfg)
    data = _load_data(cfg, limit=cfg.limit)
    ecfg = EvalConfig(cfg.seed, cfg.subsampling, PreprocessConfig(cfg.resize_min_dim, cfg.crop_size), cfg.workers)
    report = evaluate(weights, data, _chains(cfg), ecfg)
    root = Path(cfg.output_dir)
    save_report(report, root / "report.npz")
    (root / "report.csv").write_bytes(emit_report(report, "csv").encode("utf-8"))
    table = emit_report(report, "text-table")
    (root / "report.txt").write_text(table, encoding="utf-8")
    out(table.rstrip("\n"))
    if report.skipped:
        out(f"skipped {len(report.skipped)} images: {report.skipped}")
    if report.tied:
        out(f"{report.tied} clean predictions were tied")


def cmd_report(cfg: RunConfig, out):
    from .pipeline import emit_report, load_report

    path = Path(cfg.output_dir) / "report.npz"
    if not path.exists():
        raise CommandError(f"no report at {path}; run eval first")
    out(emit_report(load_report(path), cfg.report_format).rstrip("\r\n"))


def cmd_codec_selftest(cfg: RunConfig, out):
    from .jpeg import selftest

    if not selftest.run(cfg.seed, out):
        raise CommandError("codec self-test failed")


HANDLERS = {"train": cmd_train, "attack": cmd_attack, "eval": cmd_eval, "report": cmd_report,
            "codec-selftest": cmd_codec_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_mod.resolve(args.config, overrides_from_args(args))
        config_mod.write_snapshot(cfg, args.command)
        HANDLERS[args.command](cfg, print)
    except (ConfigError, CommandError) as exc:
        print(f"jpgdefense {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        # dataset, weight file, codec and skip-budget failures all land here
        print(f"jpgdefense {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
