"""Experiment configuration: schema, strict loading, overrides, derived seeds.

One JSON document describes a whole experiment: the model operating point, the
engine to run, its controls, the level schedule, and optionally up to two
sweep axes.  Every key has a default, every unknown key is rejected with its
full path, and every grid point gets a seed derived from the master seed and
the point's own coordinates, so any emitted row can be re-run on its own.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from resplit.core import LevelSchedule, derive_seed
from resplit.mc import McConfig
from resplit.netmodel import NetParams, default_levels
from resplit.policy import LookaheadConfig, PolicySet
from resplit.smc import SmcConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PolicyStudy",
    "SweepAxis",
    "apply_axis_value",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "point_seed",
    "sweep_points",
]

ENGINES = ("mc", "smc", "smc+policy")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass(frozen=True)
class PolicyStudy:
    """Shape of the candidate family; rates anchor at the model baseline."""

    size: int = 5
    increment_fraction: float = 0.5
    cost_scale: float = 0.5

    def build(self, params: NetParams) -> PolicySet:
        return PolicySet.from_params(
            params, self.size, self.increment_fraction, self.cost_scale
        )


@dataclass(frozen=True)
class SweepAxis:
    """One swept parameter: a dotted key path and the grid of values."""

    name: str
    values: tuple

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("axis name must be a nonempty key path")
        if len(self.values) == 0:
            raise ValueError(f"axis '{self.name}' has an empty grid")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    engine: str = "smc"
    master_seed: int = 0
    replications: int = 1
    output_dir: str | None = None
    model: NetParams = field(default_factory=NetParams)
    levels: LevelSchedule = field(default_factory=default_levels)
    smc: SmcConfig = field(default_factory=SmcConfig)
    mc: McConfig = field(default_factory=McConfig)
    policy: PolicyStudy = field(default_factory=PolicyStudy)
    lookahead: LookaheadConfig = field(default_factory=LookaheadConfig)
    axes: tuple[SweepAxis, ...] = ()

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got '{self.engine}'")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if len(self.axes) > 2:
            raise ValueError(f"at most 2 sweep axes supported, got {len(self.axes)}")
        names = [axis.name for axis in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"sweep axes overlap: {names}")

    def policy_set(self) -> PolicySet:
        return self.policy.build(self.model)


_TOP_KEYS = (
    "engine", "master_seed", "replications", "output_dir",
    "model", "levels", "smc", "mc", "policy", "lookahead", "sweep",
)


def _reject_unknown(data: dict, allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(
                f"{path}{key}: unknown key (allowed: {', '.join(sorted(allowed))})"
            )


def _build_section(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    _reject_unknown(data, allowed, f"{path}.")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_levels(data: dict, path: str) -> LevelSchedule:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    _reject_unknown(data, {"thresholds", "labels"}, f"{path}.")
    if "thresholds" not in data:
        raise ConfigError(f"{path}.thresholds: required when levels are given")
    labels = data.get("labels")
    try:
        return LevelSchedule(
            thresholds=tuple(data["thresholds"]),
            labels=tuple(labels) if labels is not None else None,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_axes(data: dict, path: str) -> tuple[SweepAxis, ...]:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    _reject_unknown(data, {"axes"}, f"{path}.")
    raw_axes = data.get("axes", [])
    if not isinstance(raw_axes, list):
        raise ConfigError(f"{path}.axes: expected a list of axis objects")
    axes = []
    for i, entry in enumerate(raw_axes):
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}.axes[{i}]: expected an object")
        _reject_unknown(entry, {"name", "values"}, f"{path}.axes[{i}].")
        try:
            axes.append(
                SweepAxis(entry.get("name", ""), tuple(entry.get("values", ())))
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.axes[{i}]: {exc}") from exc
    return tuple(axes)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from plain JSON data, rejecting anything off-schema."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config root: expected an object, got {type(raw).__name__}")
    _reject_unknown(raw, _TOP_KEYS, "")

    mc_raw = dict(raw.get("mc", {}))
    # an explicit trajectory count replaces the default budget
    if "trajectories" in mc_raw and "budget_steps" not in mc_raw:
        mc_raw["budget_steps"] = None

    kwargs: dict[str, Any] = {}
    for key in ("engine", "master_seed", "replications", "output_dir"):
        if key in raw:
            kwargs[key] = raw[key]
    if "model" in raw:
        kwargs["model"] = _build_section(NetParams, raw["model"], "model")
    if "levels" in raw:
        kwargs["levels"] = _build_levels(raw["levels"], "levels")
    if "smc" in raw:
        kwargs["smc"] = _build_section(SmcConfig, raw["smc"], "smc")
    if "mc" in raw:
        kwargs["mc"] = _build_section(McConfig, mc_raw, "mc")
    if "policy" in raw:
        kwargs["policy"] = _build_section(PolicyStudy, raw["policy"], "policy")
    if "lookahead" in raw:
        kwargs["lookahead"] = _build_section(LookaheadConfig, raw["lookahead"], "lookahead")
    if "sweep" in raw:
        kwargs["axes"] = _build_axes(raw["sweep"], "sweep")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def _section_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical plain-data echo; feeding it back reproduces the config."""
    return {
        "engine": cfg.engine,
        "master_seed": cfg.master_seed,
        "replications": cfg.replications,
        "model": _section_dict(cfg.model),
        "levels": {
            "thresholds": list(cfg.levels.thresholds),
            "labels": list(cfg.levels.labels) if cfg.levels.labels else None,
        },
        "smc": _section_dict(cfg.smc),
        "mc": _section_dict(cfg.mc),
        "policy": _section_dict(cfg.policy),
        "lookahead": _section_dict(cfg.lookahead),
        "sweep": {
            "axes": [
                {"name": axis.name, "values": list(axis.values)} for axis in cfg.axes
            ]
        },
    }


def apply_axis_value(raw: dict, name: str, value) -> dict:
    """Return a copy of the raw config with one dotted key path overridden.

    Top-level names ('engine') set a root key; 'section.field' sets one field
    inside a section.  Whether the resulting key is valid is decided by the
    rebuild, which reports the full path.
    """
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    if "." in name:
        section, leaf = name.split(".", 1)
        if "." in leaf:
            raise ConfigError(f"{name}: axis paths go at most one level deep")
        target = dict(out.get(section, {}))
        target[leaf] = value
        out[section] = target
    else:
        out[name] = value
    return out


def point_seed(master_seed: int, coordinates: dict, replication: int) -> int:
    """Stable per-point seed: master seed, axis names and values, replication."""
    parts: list = []
    for name in sorted(coordinates):
        parts.append(name)
        parts.append(coordinates[name])
    parts.append("rep")
    parts.append(replication)
    return derive_seed(master_seed, *parts)


def sweep_points(cfg: ExperimentConfig):
    """Yield ``(coordinates, point_config)`` over the axis cross product.

    Coordinates map axis names to values in declared axis order; the point
    config is rebuilt from scratch with the overrides applied, so section
    validation runs per point.  A sweep needs at least one axis.
    """
    if not cfg.axes:
        raise ConfigError("sweep: at least one axis is required")
    base = config_to_dict(cfg)
    base.pop("sweep", None)

    def rebuild(coords: dict) -> ExperimentConfig:
        raw = base
        for name, value in coords.items():
            raw = apply_axis_value(raw, name, value)
        return config_from_dict(raw)

    if len(cfg.axes) == 1:
        for v0 in cfg.axes[0].values:
            coords = {cfg.axes[0].name: v0}
            yield coords, rebuild(coords)
    else:
        for v0 in cfg.axes[0].values:
            for v1 in cfg.axes[1].values:
                coords = {cfg.axes[0].name: v0, cfg.axes[1].name: v1}
                yield coords, rebuild(coords)
