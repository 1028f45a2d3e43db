"""Transformation chains such as ``JPG[ADV_1(x)]`` and their textual names."""
from __future__ import annotations

import re
from dataclasses import dataclass

DEFAULT_QUALITY = 75


@dataclass(frozen=True)
class Step:
    kind: str  # "fgsm", "jpg" or "noise"
    param: int

    def wrap(self, inner: str) -> str:
        if self.kind == "fgsm":
            return f"ADV_{self.param}({inner})"
        tag = "JPG" if self.kind == "jpg" else "NOISE"
        q = "" if self.param == DEFAULT_QUALITY else str(self.param)
        return f"{tag}{q}[{inner}]"


@dataclass(frozen=True)
class TransformChain:
    """Steps applied innermost-first; an empty chain is the identity."""

    steps: tuple[Step, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for i, s in enumerate(self.steps):
            if s.kind not in ("fgsm", "jpg", "noise"):
                raise ValueError(f"unknown step {s.kind!r}")
            if s.kind == "fgsm" and i != 0:
                raise ValueError("fgsm must be the first step and appear at most once")
            if s.param < 0 or (s.kind != "fgsm" and not 1 <= s.param <= 100):
                raise ValueError(f"bad parameter for {s.kind}: {s.param}")

    @property
    def name(self) -> str:
        out = "x"
        for s in self.steps:
            out = s.wrap(out)
        return out

    @property
    def epsilon(self) -> int | None:
        return self.steps[0].param if self.steps and self.steps[0].kind == "fgsm" else None

    def __str__(self):
        return self.name


IDENTITY = TransformChain()

_TOKEN = re.compile(r"ADV_(\d+)\(|(JPG|NOISE)(\d*)\[")


def parse_chain(text: str) -> TransformChain:
    """Inverse of :attr:`TransformChain.name`; also accepts ``identity``."""
    s = text.strip()
    if s in ("x", "identity"):
        return IDENTITY
    outer = []
    pos = 0
    closers = []
    while True:
        m = _TOKEN.match(s, pos)
        if not m:
            break
        if m.group(1) is not None:
            outer.append(Step("fgsm", int(m.group(1))))
            closers.append(")")
        else:
            kind = "jpg" if m.group(2) == "JPG" else "noise"
            outer.append(Step(kind, int(m.group(3)) if m.group(3) else DEFAULT_QUALITY))
            closers.append("]")
        pos = m.end()
    if s[pos : pos + 1] != "x" or s[pos + 1 :] != "".join(reversed(closers)):
        raise ValueError(f"cannot parse transformation {text!r}")
    return TransformChain(tuple(reversed(outer)))


def standard_chains(epsilons=(1, 5, 10), quality=DEFAULT_QUALITY, noise_eps=None) -> list[TransformChain]:
    """x, JPG[x], ADV_e(x) for each e, JPG[ADV_e(x)] for each e, NOISE[ADV_e0(x)]."""
    eps = list(epsilons)
    noise_eps = eps[0] if noise_eps is None else noise_eps
    chains = [IDENTITY, TransformChain((Step("jpg", quality),))]
    chains += [TransformChain((Step("fgsm", e),)) for e in eps]
    chains += [TransformChain((Step("fgsm", e), Step("jpg", quality))) for e in eps]
    chains.append(TransformChain((Step("fgsm", noise_eps), Step("noise", quality))))
    return chains
