"""Layered run configuration: defaults, config file, then CLI overrides.

A config is four parameter groups (sim, agent, twin, hitl) plus run-level
settings, each backed by its dataclass defaults. A JSON config file may
override any subset; `--set section.key=value` overrides win last. Unknown
sections or keys are rejected by name rather than silently ignored.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .agent import Hyperparams
from .errors import ContractViolation
from .hitl import HitlParams
from .twin import TwinParams
from .world import SimParams


@dataclass
class RunSettings:
    """Run-level knobs not owned by any component."""

    seed: int = 0
    episodes: int = 400  # pre-training episodes
    trials: int = 50  # evaluation episodes
    max_ticks: int = 2000  # deployment tick cap
    drop_rate: float = 0.0  # telemetry drop injection for local sessions
    cold_start: bool = False  # retrain from fresh buffers instead of warm ones

    def __post_init__(self):
        if self.episodes < 0 or self.trials < 0 or self.max_ticks < 0:
            raise ContractViolation("episode, trial, and tick counts must be non-negative")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ContractViolation("drop_rate must lie in [0, 1)")


_SECTIONS = {
    "sim": SimParams,
    "agent": Hyperparams,
    "twin": TwinParams,
    "hitl": HitlParams,
    "run": RunSettings,
}


@dataclass
class RunConfig:
    sim: SimParams = field(default_factory=SimParams)
    agent: Hyperparams = field(default_factory=Hyperparams)
    twin: TwinParams = field(default_factory=TwinParams)
    hitl: HitlParams = field(default_factory=HitlParams)
    run: RunSettings = field(default_factory=RunSettings)


def _section_fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls)}


def config_to_dict(cfg: RunConfig) -> dict:
    return {name: dataclasses.asdict(getattr(cfg, name)) for name in _SECTIONS}


def _build_section(name: str, cls, values: dict):
    known = _section_fields(cls)
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ContractViolation(f"unknown config key(s) in [{name}]: {', '.join(unknown)}")
    return cls(**values)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ContractViolation("config root must be a mapping of sections")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ContractViolation(f"unknown config section(s): {', '.join(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        values = data.get(name, {})
        if not isinstance(values, dict):
            raise ContractViolation(f"config section [{name}] must be a mapping")
        sections[name] = _build_section(name, cls, dict(values))
    return RunConfig(**sections)


def _parse_override(text: str) -> tuple:
    if "=" not in text:
        raise ContractViolation(f"override {text!r} must look like section.key=value")
    path, raw = text.split("=", 1)
    if "." not in path:
        raise ContractViolation(f"override key {path!r} must look like section.key")
    section, key = path.split(".", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings may be written without quotes
    return section.strip(), key.strip(), value


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, overlaid by an optional JSON file, then by --set overrides."""
    layered: dict = {name: {} for name in _SECTIONS}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ContractViolation(f"config file is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ContractViolation("config root must be a mapping of sections")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ContractViolation(f"unknown config section(s): {', '.join(unknown)}")
        for name, values in data.items():
            if not isinstance(values, dict):
                raise ContractViolation(f"config section [{name}] must be a mapping")
            layered[name].update(values)
    for text in overrides:
        section, key, value = _parse_override(text)
        if section not in _SECTIONS:
            raise ContractViolation(f"unknown config section: {section}")
        layered[section][key] = value
    return config_from_dict(layered)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
