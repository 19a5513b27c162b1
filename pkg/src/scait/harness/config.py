"""Experiment configuration read from ``key = value`` text files.

Blank lines and ``#`` comments are ignored. List values are comma
separated. Unknown keys are an error so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from ..channel import FEC_CHOICES
from ..dataset import DatasetError, build_dataset, load_pgm_dir
from ..nn import TrainConfig
from ..pipeline import SCHEMES


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # dataset
    per_class: int = 300
    size: int = 32
    test_fraction: float = 0.2
    data_seed: int = 0
    data_dir: str = ""
    # training of the semantic (noise- and prune-aware) model
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_schedule: str = "cosine"
    train_seed: int = 0
    channel_mode: str = "analog_awgn"
    snr_lo_db: float = 0.0
    snr_hi_db: float = 20.0
    prune_aware: bool = True
    keep_lo: float = 1 / 32
    keep_hi: float = 1.0
    keep_sampling: str = "log"
    keep_min_prob: float = 0.0
    prune_order: str = "index"  # "index" | "random"
    # training of the clean classifier used by the codec baseline
    clean_epochs: int = 30
    # sweep
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    cr: list = field(default_factory=lambda: [0.0, 0.5, 0.875, 0.97])
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    quality: list = field(default_factory=lambda: [75])
    fec: list = field(default_factory=lambda: ["hamming74"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    master_seed: int = 0
    link_rate_bps: float = 1e6
    timing_images: int = 32
    task_id: int = 0
    # files
    out_dir: str = "runs/default"
    checkpoint: str = ""
    baseline_checkpoint: str = ""
    kb_path: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("schemes", "cr", "snr_db", "fec", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)}")
        if "baseline_codec" in self.schemes and not self.quality:
            raise ConfigError("baseline_codec needs at least one quality value")
        for q in self.quality:
            if not 1 <= q <= 100:
                raise ConfigError(f"quality {q} outside [1, 100]")
        for c in self.cr:
            if not 0 <= c < 1:
                raise ConfigError(f"compression ratio {c} outside [0, 1)")
        for f in self.fec:
            if f not in FEC_CHOICES:
                raise ConfigError(f"fec must be one of {FEC_CHOICES}, got {f!r}")
        for s in self.snr_db:
            if math.isnan(s) or s == -math.inf:
                raise ConfigError(f"invalid snr {s}")
        if self.link_rate_bps <= 0:
            raise ConfigError("link_rate_bps must be positive")
        if self.prune_order not in ("index", "random"):
            raise ConfigError("prune_order must be 'index' or 'random'")

    # derived paths
    def path(self, name):
        import os

        explicit = {"semantic.scnn": self.checkpoint, "clean.scnn": self.baseline_checkpoint, "kb.txt": self.kb_path}
        return explicit.get(name) or os.path.join(self.out_dir, name)

    def dataset(self):
        try:
            if self.data_dir:
                return load_pgm_dir(self.data_dir, test_fraction=self.test_fraction, seed=self.data_seed)
            return build_dataset(self.per_class, self.size, self.test_fraction, self.data_seed)
        except DatasetError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self, num_maps=32):
        try:
            return TrainConfig(
                epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                momentum=self.momentum, lr_schedule=self.lr_schedule, seed=self.train_seed,
                channel_mode=self.channel_mode, snr_lo_db=self.snr_lo_db, snr_hi_db=self.snr_hi_db,
                prune_aware=self.prune_aware, keep_lo=self.keep_lo, keep_hi=self.keep_hi,
                keep_sampling=self.keep_sampling, keep_min_prob=self.keep_min_prob,
                prune_priority=tuple(range(num_maps)) if self.prune_order == "index" else None,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def clean_train_config(self):
        return dataclasses.replace(
            self.train_config(), epochs=self.clean_epochs, channel_mode="clean", prune_aware=False,
            prune_priority=None,
        )


_LIST_ITEM = {"schemes": str, "cr": float, "snr_db": float, "quality": int, "fec": str, "seeds": int}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name, raw):
    if name in _LIST_ITEM:
        items = [t.strip() for t in raw.split(",") if t.strip()]
        return [_LIST_ITEM[name](t) for t in items]
    default = ExperimentConfig.__dataclass_fields__[name].default
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def parse_config(text, **overrides):
    """Build an :class:`ExperimentConfig` from config text plus keyword overrides."""
    values = {}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides):
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


def format_config(config):
    """Render a config back to text (round-trips through :func:`parse_config`)."""
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
