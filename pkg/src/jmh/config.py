"""YAML experiment configuration.

A file holds up to three mappings, ``scenario``, ``solver`` and
``hotspot``, whose keys are the field names of the matching config classes.
Scenario and solver fields may also sit at the top level. Any other key is
an error naming that key.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import yaml

from .hotspot import HotspotConfig
from .relaxed import SolverConfig
from .scenario import ScenarioConfig

SECTIONS = {"scenario": ScenarioConfig, "solver": SolverConfig, "hotspot": HotspotConfig}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    solver: SolverConfig = SolverConfig()
    hotspot: HotspotConfig = HotspotConfig()


def _coerce(key: str, value, default):
    """Convert a YAML value to the type of the field's default."""
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if isinstance(default, int):
            number = float(value)
            if number != int(number):
                raise TypeError("expected an integer")
            return int(number)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            return tuple(float(v) for v in value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"bad value {value!r} ({exc})") from None
    return value


def _build(cls, values: dict, prefix: str):
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{prefix}{key}", "unknown key")
        kwargs[key] = _coerce(f"{prefix}{key}", value, getattr(defaults, key))
    try:
        return replace(defaults, **kwargs)
    except ValueError as exc:
        raise ConfigError(prefix.rstrip(".") or "config", str(exc)) from None


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    sections = {name: dict(data.get(name) or {}) for name in SECTIONS}
    scenario_keys = {f.name for f in fields(ScenarioConfig)}
    solver_keys = {f.name for f in fields(SolverConfig)}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, (dict, type(None))):
                raise ConfigError(key, "section must be a mapping")
        elif key in scenario_keys:
            sections["scenario"][key] = value
        elif key in solver_keys:
            sections["solver"][key] = value
        else:
            raise ConfigError(str(key), "unknown key")
    return ExperimentConfig(**{name: _build(cls, sections[name], f"{name}.") for name, cls in SECTIONS.items()})


def load_config(path=None) -> ExperimentConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"malformed YAML: {exc}") from None
    return parse_config(data)
