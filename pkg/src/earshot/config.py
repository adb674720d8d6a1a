"""Run configuration: flat INI file with sections, defaults built in.

A single top-level seed fans out to every stochastic component through a
name-keyed hash, so adding a component never reshuffles the others.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .evalharness import SYSTEMS
from .features import FeatureParams


def derive_seed(seed: int, name: str) -> int:
    """Stable per-component seed: hash of the component name mixed with the
    master seed. Independent of Python's hash randomization."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class RunConfig:
    # paths
    manifest: str = "dataset.jsonl"
    cache_dir: str = "cache"
    out_dir: str = "out"
    splits_dir: str = ""
    # run
    seed: int = 1234
    jobs: int = 1
    allow_any_rate: bool = False
    # features
    features: FeatureParams = field(default_factory=FeatureParams)
    # label tree embedding
    lte_max_frames: int = 20000
    # model dims
    q: int = 1000
    hidden: int = 256
    transform_dim: int = 256
    widths: tuple[int, ...] = (3, 5, 7)
    dropout_cnn: float = 0.5
    dropout_rnn: float = 0.1
    dropout_fusion: float = 0.5
    # training
    lam: float = 1e-3
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    # evaluation
    n_splits: int = 20
    train_ratio: float = 0.8
    systems: tuple[str, ...] = SYSTEMS
    # synthetic corpus
    synth_categories: int = 8
    synth_per_category: int = 25
    synth_duration_s: float = 30.0

    def validate(self):
        if self.lr <= 0 or self.lam < 0:
            raise ConfigError("lr must be > 0 and lam >= 0")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("train_ratio must be in (0, 1)")
        for system in self.systems:
            if system not in SYSTEMS:
                raise ConfigError(f"unknown system {system!r}; valid: {', '.join(SYSTEMS)}")
        if self.synth_duration_s < 4:
            raise ConfigError("synth duration_s must be >= 4")
        return self


# section -> option -> (attribute, parser)
def _parse_widths(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _parse_systems(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


_SCHEMA = {
    "paths": {
        "manifest": ("manifest", str),
        "cache_dir": ("cache_dir", str),
        "out_dir": ("out_dir", str),
        "splits_dir": ("splits_dir", str),
    },
    "run": {
        "seed": ("seed", int),
        "jobs": ("jobs", int),
        "allow_any_rate": ("allow_any_rate", lambda s: s.lower() in ("1", "true", "yes")),
    },
    "lte": {"max_frames": ("lte_max_frames", int)},
    "model": {
        "q": ("q", int),
        "hidden": ("hidden", int),
        "transform_dim": ("transform_dim", int),
        "widths": ("widths", _parse_widths),
        "dropout_cnn": ("dropout_cnn", float),
        "dropout_rnn": ("dropout_rnn", float),
        "dropout_fusion": ("dropout_fusion", float),
    },
    "train": {
        "lam": ("lam", float),
        "lr": ("lr", float),
        "batch_size": ("batch_size", int),
        "max_epochs": ("max_epochs", int),
    },
    "eval": {
        "n_splits": ("n_splits", int),
        "train_ratio": ("train_ratio", float),
        "systems": ("systems", _parse_systems),
    },
    "synth": {
        "categories": ("synth_categories", int),
        "per_category": ("synth_per_category", int),
        "duration_s": ("synth_duration_s", float),
    },
}

_FEATURE_FIELDS = {f.name: f.type for f in fields(FeatureParams)}


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = RunConfig()
    feature_overrides = {}
    for section in parser.sections():
        if section == "features":
            for option, value in parser.items(section):
                if option not in _FEATURE_FIELDS:
                    raise ConfigError(f"unknown option [features] {option}")
                current = getattr(cfg.features, option)
                feature_overrides[option] = type(current)(value)
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for option, value in parser.items(section):
            if option not in _SCHEMA[section]:
                raise ConfigError(f"unknown option [{section}] {option}")
            attr, parse = _SCHEMA[section][option]
            try:
                setattr(cfg, attr, parse(value))
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {option}: {exc}")
    if feature_overrides:
        cfg.features = FeatureParams(
            **{**{f.name: getattr(cfg.features, f.name) for f in fields(FeatureParams)},
               **feature_overrides}
        )
    return cfg.validate()
