"""TOML run configuration: parsing with strict keys, preset expansion, dumping."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .factors import CouplingSigmas
from .lanes import VARIANTS, LaneConfig
from .sim import PRESETS, RNG_ALGORITHM, ScenarioSpec, SensorNoiseSpec
from .solver import SolverSettings


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: ScenarioSpec
    noise: SensorNoiseSpec


@dataclass(frozen=True)
class RunConfig:
    scenarios: tuple[Scenario, ...]
    lanes: tuple[LaneConfig, ...]
    solver: SolverSettings
    seeds: tuple[int, ...]
    output_dir: Path

    def with_seed(self, seed: int) -> RunConfig:
        return replace(self, seeds=(int(seed),))

    def with_output(self, path) -> RunConfig:
        return replace(self, output_dir=Path(path))


_SCENARIO_KEYS = {f.name for f in fields(ScenarioSpec)} - {"seed"}
_NOISE_KEYS = {f.name for f in fields(SensorNoiseSpec)}
_LANE_KEYS = {f.name for f in fields(LaneConfig)} - {"coupling"} | {"coupling_sigmas"}
_SOLVER_KEYS = {f.name for f in fields(SolverSettings)}
_TOP_KEYS = {"scenario", "noise", "lanes", "solver", "seeds", "output_dir", "meta"}


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key" if where else f"{key}: unknown key")


def _build(cls, kwargs: dict, where: str):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _scenario(entry: Any, shared_noise: dict, where: str) -> Scenario:
    if isinstance(entry, str):
        entry = {"preset": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: expected a preset name or a table")
    _reject_unknown(entry, _SCENARIO_KEYS | {"preset", "name", "noise"}, where)
    preset_name = entry.get("preset")
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"{where}.preset: unknown preset {preset_name!r}; known: {sorted(PRESETS)}")
        base_spec, base_noise = PRESETS[preset_name]
    else:
        base_spec, base_noise = ScenarioSpec(), SensorNoiseSpec()
    overrides = {k: entry[k] for k in _SCENARIO_KEYS if k in entry}
    try:
        spec = replace(base_spec, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    noise_table = dict(shared_noise)
    own = entry.get("noise", {})
    if not isinstance(own, dict):
        raise ConfigError(f"{where}.noise: expected a table")
    noise_table.update(own)
    _reject_unknown(noise_table, _NOISE_KEYS, f"{where}.noise")
    try:
        noise = replace(base_noise, **noise_table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.noise: {exc}") from None
    name = entry.get("name") or preset_name or "custom"
    return Scenario(str(name), spec, noise)


def _lane(entry: Any, where: str) -> LaneConfig:
    if isinstance(entry, str):
        entry = {"variant": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: expected a variant name or a table")
    _reject_unknown(entry, _LANE_KEYS, where)
    kwargs = dict(entry)
    if kwargs.get("variant", "parallel") not in VARIANTS:
        raise ConfigError(f"{where}.variant: unknown variant {kwargs['variant']!r}; expected one of {VARIANTS}")
    if "coupling_sigmas" in kwargs:
        try:
            kwargs["coupling"] = CouplingSigmas(kwargs.pop("coupling_sigmas"))
        except ValueError as exc:
            raise ConfigError(f"{where}.coupling_sigmas: {exc}") from None
    return _build(LaneConfig, kwargs, where)


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    _reject_unknown(data, _TOP_KEYS, "")
    shared_noise = data.get("noise", {})
    if not isinstance(shared_noise, dict):
        raise ConfigError("noise: expected a table")
    raw = data.get("scenario", "factory")
    entries = raw if isinstance(raw, list) else [raw]
    if not entries:
        raise ConfigError("scenario: at least one scenario is required")
    scenarios = tuple(_scenario(e, shared_noise, f"scenario[{i}]") for i, e in enumerate(entries))
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError(f"scenario: duplicate scenario names {names}")

    lanes_raw = data.get("lanes", list(VARIANTS))
    if not isinstance(lanes_raw, list) or not lanes_raw:
        raise ConfigError("lanes: expected a non-empty array")
    lanes = tuple(_lane(e, f"lanes[{i}]") for i, e in enumerate(lanes_raw))

    solver_raw = data.get("solver", {})
    if not isinstance(solver_raw, dict):
        raise ConfigError("solver: expected a table")
    _reject_unknown(solver_raw, _SOLVER_KEYS, "solver")
    solver = _build(SolverSettings, solver_raw, "solver")

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds: expected a non-empty array of non-negative integers")

    out = Path(data.get("output_dir", "out"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return RunConfig(scenarios, lanes, solver, tuple(seeds), out)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a).reshape(-1)]


def expanded(cfg: RunConfig) -> dict:
    """Fully explicit form of ``cfg``; feeding it back to ``parse_config`` is lossless."""
    scenarios = []
    for sc in cfg.scenarios:
        entry = {"name": sc.name}
        for f in fields(ScenarioSpec):
            if f.name != "seed":
                entry[f.name] = getattr(sc.spec, f.name)
        entry["noise"] = sc.noise.to_dict()
        scenarios.append(entry)
    lanes = []
    for lane in cfg.lanes:
        lanes.append(
            {
                "variant": lane.variant,
                "lidar_between_sigmas": _floats(lane.lidar_between_sigmas),
                "fk_between_sigmas": _floats(lane.fk_between_sigmas),
                "coupling_sigmas": _floats(lane.coupling.sigmas),
                "elevation_sigma": float(lane.elevation_sigma),
                "anchor_sigmas": _floats(lane.anchor_sigmas),
                "couple_every": int(lane.couple_every),
                "serial_elevation_priors": bool(lane.serial_elevation_priors),
            }
        )
    solver = {f.name: getattr(cfg.solver, f.name) for f in fields(SolverSettings)}
    return {
        "seeds": list(cfg.seeds),
        "output_dir": str(cfg.output_dir),
        "scenario": scenarios,
        "lanes": lanes,
        "solver": solver,
    }


def dump_expanded(cfg: RunConfig, path: Path, meta: dict | None = None) -> None:
    doc = expanded(cfg)
    doc["meta"] = {"format_version": 1, "rng_algorithm": RNG_ALGORITHM, **(meta or {})}
    Path(path).write_text(tomli_w.dumps(doc), encoding="utf-8")
