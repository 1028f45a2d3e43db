"""Flat ``key = value`` run configuration with flag overrides and a resolved snapshot.

Example file::

    # MNIST desk run
    dataset = data/mnist
    format = mnist-idx
    epsilons = 16, 32, 64
    limit = 1000
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

OUTPUT_ENV = "JPGDEFENSE_OUTPUT_DIR"
DEFAULT_OUTPUT = "runs"


class ConfigError(ValueError):
    pass


def _output_default():
    return os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)


@dataclass
class RunConfig:
    dataset: str = "data/mnist"
    format: str = "mnist-idx"
    split: str = "test"
    limit: int | None = None
    model: str | None = None  # default: <output_dir>/model.jshd
    epsilons: list[int] = field(default_factory=lambda: [1, 5, 10])
    quality: int = 75
    subsampling: str = "4:2:0"
    chains: list[str] = field(default_factory=list)  # empty: the standard layout from epsilons
    seed: int = 0
    output_dir: str = field(default_factory=_output_default)
    workers: int = 1
    resize_min_dim: int | None = None
    crop_size: int | None = None
    epochs: int = 3
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    std_mode: str = "global"
    train_limit: int | None = None
    report_format: str = "text-table"

    def validate(self):
        if any(e < 0 for e in self.epsilons):
            raise ConfigError("epsilons: values must be >= 0")
        if not 1 <= self.quality <= 100:
            raise ConfigError("quality: must be within 1..100")
        if self.subsampling not in ("4:2:0", "4:4:4"):
            raise ConfigError("subsampling: must be 4:2:0 or 4:4:4")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")
        if self.report_format not in ("text-table", "csv"):
            raise ConfigError("report_format: must be text-table or csv")
        return self

    @property
    def model_path(self) -> Path:
        return Path(self.model) if self.model else Path(self.output_dir) / "model.jshd"


FIELDS = {f.name: f for f in fields(RunConfig)}


def _kind(name):
    t = str(FIELDS[name].type)
    if t.startswith("list[int]"):
        return "ints"
    if t.startswith("list[str]"):
        return "strs"
    if t.startswith("int"):
        return "int?" if "None" in t else "int"
    if t.startswith("float"):
        return "float"
    return "str?" if "None" in t else "str"


def coerce(name: str, raw: str):
    kind = _kind(name)
    raw = raw.strip()
    if kind.endswith("?") and raw.lower() in ("", "none"):
        return None
    try:
        if kind in ("int", "int?"):
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "strs":
            return [v.strip() for v in raw.split(";") if v.strip()]
    except ValueError:
        want = {"int": "an integer", "int?": "an integer", "float": "a number", "ints": "comma-separated integers"}
        raise ConfigError(f"{name}: expected {want[kind]}, got {raw!r}") from None
    return raw


def render(name: str, value) -> str:
    if value is None:
        return "none"
    if _kind(name) == "ints":
        return ", ".join(str(v) for v in value)
    if _kind(name) == "strs":
        return "; ".join(value)
    return str(value)


def parse_text(text: str, source="<config>") -> dict:
    """Key/value pairs from config text; errors name the key and the line number."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def resolve(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (already coerced or raw strings)."""
    values = {}
    if path is not None:
        p = Path(path)
        values.update(parse_text(p.read_text(), str(p)))
    for key, value in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = coerce(key, value) if isinstance(value, str) else value
    return RunConfig(**values).validate()


def dumps(cfg: RunConfig) -> str:
    lines = ["# resolved configuration; rerun with --config on this file"]
    lines += [f"{name} = {render(name, getattr(cfg, name))}".rstrip() for name in FIELDS]
    return "\n".join(lines) + "\n"


def write_snapshot(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{command}.config"
    path.write_text(dumps(cfg), encoding="utf-8")
    return path
