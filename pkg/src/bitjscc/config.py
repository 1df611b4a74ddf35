"""Experiment configuration: flat ``key = value`` text files.

Blank lines and ``#`` comments are ignored.  Unknown or repeated keys are
errors.  List values are comma separated; ``cpp`` accepts fractions such as
``1/8``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .codec import feature_channels_for
from .modem import get_constellation
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _fraction(text):
    return Fraction(text.strip())


@dataclass
class ExperimentConfig:
    dataset: str = "mixed"
    n_train: int = 512
    n_test: int = 64
    height: int = 32
    width: int = 32
    modulation: str = "qpsk"
    cpp: Fraction = Fraction(1, 8)
    snr_grid: tuple = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0)
    mode: str = "soft"
    widths: tuple = (16, 32)
    bits_per_feature: int = 1
    out_dir: str = "runs/default"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.snr_grid:
            raise ConfigError("snr_grid must not be empty")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be positive")
        if self.mode not in ("soft", "hard"):
            raise ConfigError(f"mode must be soft or hard, got {self.mode!r}")
        self.constellation  # validates the modulation name
        try:
            self.feature_channels
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def seed(self):
        return self.train.seed

    @property
    def constellation(self):
        try:
            return get_constellation(self.modulation)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def n_bits(self):
        n = self.cpp * self.height * self.width * self.constellation.bits_per_symbol
        return int(n)

    @property
    def feature_channels(self):
        return feature_channels_for(self.cpp, self.constellation.bits_per_symbol,
                                    self.height, self.width, self.bits_per_feature)


_TRAIN_KEYS = {
    "batch_size": int,
    "lr": float,
    "lr_decay": float,
    "decay_interval": int,
    "stage1_epochs": int,
    "stage2_epochs": int,
    "train_snr_db": float,
    "tau_start": float,
    "tau_end": float,
    "seed": int,
}

_KEYS = {
    "dataset": str,
    "n_train": int,
    "n_test": int,
    "height": int,
    "width": int,
    "modulation": str,
    "cpp": _fraction,
    "snr_grid": _floats,
    "mode": str,
    "widths": _ints,
    "bits_per_feature": int,
    "out_dir": str,
}


def parse_config(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS and key not in _TRAIN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        conv = _KEYS.get(key) or _TRAIN_KEYS[key]
        try:
            values[key] = conv(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    train_kw = {k: values.pop(k) for k in list(values) if k in _TRAIN_KEYS}
    if "mode" in values:
        train_kw["mode"] = values["mode"]
    try:
        train = TrainConfig(**train_kw)
        return ExperimentConfig(train=train, **values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def with_mode(cfg, mode):
    """Copy of ``cfg`` with the decision mode replaced."""
    return dataclasses.replace(cfg, mode=mode, train=dataclasses.replace(cfg.train, mode=mode))


def dump_config(cfg):
    lines = []
    for key in _KEYS:
        v = getattr(cfg, key)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{key} = {v}")
    for key in _TRAIN_KEYS:
        lines.append(f"{key} = {getattr(cfg.train, key)}")
    return "\n".join(lines) + "\n"
