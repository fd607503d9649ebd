"""Toolkit configuration from a single TOML file.

Every section is optional and an empty file is a valid config::

    [segmenter]
    punctuation = ".?!"
    abbreviations = ["e.g", "i.e"]

    [[rules]]
    rule_id = "R1"
    current_threshold = 5
    history = []

    [replay]
    format = "csv"
    budgets = [1000, 2000]

    [synth]
    preset = "default"
    seed = 42

    [miner]
    depth = 3
    trees = 50

    [stream]
    per_token = false

Command-line flags override file values.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .rules import RuleSet, default_rcpd_rules
from .segmenter import SegmenterConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


def toml_loads(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"malformed TOML: {exc}") from None


@dataclass(frozen=True)
class ReplayOptions:
    format: str = "table"
    budgets: tuple[int, ...] = ()
    deer_threshold: float = 0.95


@dataclass(frozen=True)
class SynthOptions:
    preset: str = "default"
    n: int | None = None
    seed: int | None = None


@dataclass(frozen=True)
class MinerOptions:
    depth: int = 3
    trees: int = 50
    lr: float = 0.1
    seed: int = 0
    max_rules: int = 4
    log_transform: bool = True
    min_leaf: int = 5
    folds: int = 5


@dataclass(frozen=True)
class StreamOptions:
    per_token: bool = False


@dataclass(frozen=True)
class ToolkitConfig:
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    rules: RuleSet = field(default_factory=default_rcpd_rules)
    replay: ReplayOptions = field(default_factory=ReplayOptions)
    synth: SynthOptions = field(default_factory=SynthOptions)
    miner: MinerOptions = field(default_factory=MinerOptions)
    stream: StreamOptions = field(default_factory=StreamOptions)


_SECTIONS = {"segmenter", "rules", "replay", "synth", "miner", "stream"}


def _options(cls, raw, section):
    if not isinstance(raw, dict):
        raise ValidationError(f"[{section}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"[{section}] unknown keys: {sorted(unknown)}")
    kw = dict(raw)
    if "budgets" in kw:
        kw["budgets"] = tuple(int(b) for b in kw["budgets"])
    return cls(**kw)


def config_from_dict(data: dict) -> ToolkitConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    kw = {}
    if "segmenter" in data:
        try:
            kw["segmenter"] = SegmenterConfig.from_dict(data["segmenter"])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"[segmenter] {exc}") from None
    if "rules" in data:
        kw["rules"] = RuleSet.from_list(data["rules"])
    if "replay" in data:
        kw["replay"] = _options(ReplayOptions, data["replay"], "replay")
        if kw["replay"].format not in ("table", "csv"):
            raise ValidationError(f"[replay] format must be table or csv, got {kw['replay'].format!r}")
    if "synth" in data:
        kw["synth"] = _options(SynthOptions, data["synth"], "synth")
    if "miner" in data:
        kw["miner"] = _options(MinerOptions, data["miner"], "miner")
    if "stream" in data:
        kw["stream"] = _options(StreamOptions, data["stream"], "stream")
    return ToolkitConfig(**kw)


def load_config(path=None) -> ToolkitConfig:
    """Parse a config file; ``None`` gives the all-defaults config."""
    if path is None:
        return ToolkitConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    return config_from_dict(toml_loads(text))
