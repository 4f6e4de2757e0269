"""Run configuration: INI-style files with typed sections and CLI overrides.

One schema drives every model variant (regression / contrastive / deep-mel /
external features) and every ablation as pure config switches. Precedence is
file < command-line ``--set section.key=value``; the effective config is
snapshotted into every run directory.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .brain_net import ABLATION_FLAGS


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    root: str = ""
    window_s: float = 3.0
    anchor_s: float = 0.5
    shift_s: float = 0.150


@dataclass
class PreprocessingSection:
    clamp: Optional[float] = 20.0  # None disables clamping (ablation)
    baseline_s: float = 0.5


@dataclass
class SpeechSection:
    representation: str = "external"  # mel | deep-mel | external
    n_mels: int = 40
    deep_mel_dim: int = 32


@dataclass
class ModelSection:
    d1: int = 270
    d2: int = 320
    blocks: int = 5
    kernel: int = 3
    harmonics: int = 32
    drop_radius: float = 0.2
    pos_margin: float = 0.1
    ablation: str = "none"  # one of ABLATION_FLAGS or "none"


@dataclass
class TrainingSection:
    objective: str = "clip"  # clip | regression
    lr: float = 3e-4
    batch_size: int = 256
    updates_per_epoch: int = 1200
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0


@dataclass
class EvalSection:
    topk: tuple = (1, 5, 10)
    restricted_n: int = 50
    restricted_seed: int = 0


@dataclass
class Config:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    preprocessing: PreprocessingSection = field(default_factory=PreprocessingSection)
    speech: SpeechSection = field(default_factory=SpeechSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self) -> None:
        if self.speech.representation not in ("mel", "deep-mel", "external"):
            raise ConfigError(
                f"speech.representation: {self.speech.representation!r} is not one of "
                "mel, deep-mel, external"
            )
        if self.speech.n_mels not in (20, 40, 80, 120):
            raise ConfigError("speech.n_mels: must be one of 20, 40, 80, 120")
        if self.training.objective not in ("clip", "regression"):
            raise ConfigError("training.objective: must be clip or regression")
        if self.training.objective == "regression" and self.speech.representation != "mel":
            raise ConfigError(
                "training.objective: regression requires speech.representation=mel"
            )
        if self.model.ablation != "none" and self.model.ablation not in ABLATION_FLAGS:
            raise ConfigError(
                f"model.ablation: {self.model.ablation!r} not in {ABLATION_FLAGS}"
            )
        if self.training.batch_size < 2:
            raise ConfigError("training.batch_size: must be >= 2")

    def to_dict(self) -> dict:
        out = {}
        for sec in fields(self):
            sub = getattr(self, sec.name)
            out[sec.name] = {f.name: _plain(getattr(sub, f.name)) for f in fields(sub)}
        return out


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _coerce(raw: str, current):
    """Parse an INI value against the default's type."""
    raw = raw.strip()
    if raw.lower() in ("none", "null"):
        return None
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float) or current is None:
        try:
            return float(raw)
        except ValueError:
            return raw
    if isinstance(current, tuple):
        val = ast.literal_eval(raw)
        return tuple(val) if isinstance(val, (list, tuple)) else (val,)
    return raw


def _apply(config: Config, section: str, key: str, raw: str) -> None:
    if not hasattr(config, section):
        raise ConfigError(f"unknown config section [{section}]")
    sub = getattr(config, section)
    if not hasattr(sub, key):
        raise ConfigError(f"unknown config key {section}.{key}")
    try:
        setattr(sub, key, _coerce(raw, getattr(sub, key)))
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})")


def load_config(path: Optional[str] = None, overrides: Optional[list] = None) -> Config:
    config = Config()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(config, section, key, raw)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        _apply(config, section.strip(), key.strip(), raw)
    config.validate()
    return config


def dump_config(config: Config, path: Path) -> None:
    parser = configparser.ConfigParser()
    for sec in fields(config):
        sub = getattr(config, sec.name)
        parser[sec.name] = {
            f.name: ("none" if getattr(sub, f.name) is None else str(_plain(getattr(sub, f.name))))
            for f in fields(sub)
        }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
