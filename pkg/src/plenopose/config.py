"""Pipeline configuration: one JSON document, strictly validated.

Every section is optional and falls back to its defaults, but unknown keys
anywhere are rejected so that a typo cannot silently leave a default in
place.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, List

from .dlv import DlvConfig
from .losses import LossConfig
from .pose import DiffusionConfig, LikelihoodConfig, TerminationConfig

SECTIONS = {
    "dlv": DlvConfig,
    "likelihood": LikelihoodConfig,
    "diffusion": DiffusionConfig,
    "termination": TerminationConfig,
    "loss": LossConfig,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    dlv: DlvConfig = field(default_factory=DlvConfig)
    likelihood: LikelihoodConfig = field(default_factory=LikelihoodConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(d) - set(SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parts = {}
        for name, kind in SECTIONS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in fields(kind)}
            bad = sorted(set(sub) - allowed)
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {', '.join(bad)}")
            try:
                parts[name] = kind(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {name!r} section: {exc}") from exc
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        return cls(seed=seed, **parts)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            part = getattr(self, name)
            out[name] = part.to_dict() if hasattr(part, "to_dict") else \
                {f.name: getattr(part, f.name) for f in fields(part)}
        out["seed"] = self.seed
        return out

    def with_seed(self, seed: int) -> "PipelineConfig":
        return PipelineConfig(self.dlv, self.likelihood, self.diffusion, self.termination, self.loss, int(seed))


def load_config(path) -> PipelineConfig:
    """Read a config file; a missing path means all defaults."""
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return PipelineConfig.from_dict(d)


def config_keys(sections: Iterable[str] = tuple(SECTIONS) + ("seed",)) -> List[str]:
    """Dotted names of every key in the given sections, with defaults."""
    defaults = PipelineConfig().to_dict()
    keys = []
    for name in sections:
        if name == "seed":
            keys.append(f"seed (default {defaults['seed']})")
            continue
        for key, value in defaults[name].items():
            keys.append(f"{name}.{key} (default {json.dumps(value)})")
    return keys


def describe(sections: Iterable[str]) -> str:
    return "config keys read:\n" + "\n".join("  " + k for k in config_keys(sections))
