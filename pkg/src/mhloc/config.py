"""Configuration documents: one JSON file holds the map paths, sensor
description, filter / matcher / lifecycle parameters, and the RNG seed.
Scenario scripts for the simulator use the same format family.

Every numeric bound is validated at load time and violations name the
offending field, e.g. "filter.winner_pct".
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import Transform2D
from .matcher import MatcherParams
from .multihyp import LocalizerConfig, MultiHypParams
from .particle_filter import MotionNoiseParams, SensorModelParams
from .sim import ScenarioScript, SensorSpec


class ConfigError(ValueError):
    """Raised for missing files, unknown values, or out-of-range fields."""


@dataclass
class Config:
    map_image: str
    map_metadata: str
    seed: int
    laser: SensorSpec
    localizer: LocalizerConfig
    recovery_threshold: float = 0.3
    recovery_hold: float = 5.0


def _get(doc: dict, path: str, default):
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _number(doc: dict, path: str, default, lo=None, hi=None, integer=False):
    value = _get(doc, path, default)
    try:
        value = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field {path!r} must be a number, got {value!r}") from None
    if lo is not None and value < lo:
        raise ConfigError(f"field {path!r} = {value} is below the minimum {lo}")
    if hi is not None and value > hi:
        raise ConfigError(f"field {path!r} = {value} is above the maximum {hi}")
    return value


def _triple(doc: dict, path: str, default) -> tuple[float, float, float]:
    value = _get(doc, path, default)
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"field {path!r} must be a list of three numbers")
    return tuple(float(v) for v in value)


def _load_json(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def load_config(path, seed_override: int | None = None) -> Config:
    doc = _load_json(path)

    image = _get(doc, "map.image", None)
    metadata = _get(doc, "map.metadata", None)
    if image is None or metadata is None:
        raise ConfigError("fields 'map.image' and 'map.metadata' are required")
    base = os.path.dirname(os.path.abspath(path))
    image = os.path.join(base, image)
    metadata = os.path.join(base, metadata)
    for p in (image, metadata):
        if not os.path.exists(p):
            raise ConfigError(f"map file not found: {p}")

    seed = int(_number(doc, "seed", 0, integer=True))
    if seed_override is not None:
        seed = seed_override

    laser = SensorSpec(
        beam_count=int(_number(doc, "laser.beam_count", 90, lo=1, integer=True)),
        angle_min=_number(doc, "laser.angle_min", -math.pi),
        angle_increment=_number(doc, "laser.angle_increment", 2.0 * math.pi / 90),
        range_max=_number(doc, "laser.range_max", 12.0, lo=1e-9),
        range_noise_std=_number(doc, "laser.range_noise_std", 0.0, lo=0.0),
        mount=Transform2D(*_triple(doc, "laser.mount", [0.0, 0.0, 0.0])),
    )

    sensor = SensorModelParams(
        sigma=_number(doc, "sensor_model.sigma", 0.05, lo=1e-9),
        hit_threshold_factor=_number(doc, "sensor_model.hit_threshold_factor", 2.0, lo=1e-9),
        max_usable_range=_number(doc, "sensor_model.max_usable_range", laser.range_max, lo=0.0),
        beam_stride=int(_number(doc, "sensor_model.beam_stride", 1, lo=1, integer=True)),
    )

    particles_min = int(_number(doc, "filter.particles_min", 100, lo=1, integer=True))
    particles_max = int(_number(doc, "filter.particles_max", 400, lo=1, integer=True))
    if particles_min > particles_max:
        raise ConfigError(
            f"field 'filter.particles_min' = {particles_min} exceeds "
            f"'filter.particles_max' = {particles_max}"
        )
    motion = MotionNoiseParams(
        trans_per_meter=_number(doc, "filter.motion_noise.trans_per_meter", 0.1, lo=0.0),
        yaw_per_rad=_number(doc, "filter.motion_noise.yaw_per_rad", 0.1, lo=0.0),
        yaw_per_meter=_number(doc, "filter.motion_noise.yaw_per_meter", 0.05, lo=0.0),
    )
    winner_pct = _number(doc, "filter.winner_pct", 0.1, lo=0.0, hi=1.0)
    loser_pct = _number(doc, "filter.loser_pct", 0.3, lo=0.0, hi=1.0)
    if winner_pct + loser_pct > 1.0:
        raise ConfigError(
            "fields 'filter.winner_pct' + 'filter.loser_pct' must not exceed 1"
        )
    grow_above = _number(doc, "filter.grow_above", 0.3, lo=1e-12)
    shrink_below = _number(doc, "filter.shrink_below", 0.1, lo=1e-12)
    if grow_above <= shrink_below:
        raise ConfigError(
            "field 'filter.grow_above' must be greater than 'filter.shrink_below'"
        )

    matcher = MatcherParams(
        levels=int(_number(doc, "matcher.levels", 4, lo=1, integer=True)),
        keep_per_level=int(_number(doc, "matcher.keep_per_level", 16, lo=1, integer=True)),
        min_score=_number(doc, "matcher.min_score", 0.5, lo=0.0, hi=1.0),
    )

    multihyp = MultiHypParams(
        max_hypotheses=int(_number(doc, "multihyp.max_hypotheses", 5, lo=1, integer=True)),
        destroy_below=_number(doc, "multihyp.destroy_below", 0.25, lo=0.0, hi=1.0),
        spawn_above=_number(doc, "multihyp.spawn_above", 0.5, lo=0.0, hi=1.0),
        merge_dist=_number(doc, "multihyp.merge_dist", 0.5, lo=0.0),
        merge_yaw=_number(doc, "multihyp.merge_yaw", 0.3, lo=0.0),
        quality_alpha=_number(doc, "multihyp.quality_alpha", 0.5, lo=1e-9, hi=1.0),
        predict_hz=_number(doc, "multihyp.rates.predict_hz", 100.0, lo=1e-9),
        correct_hz=_number(doc, "multihyp.rates.correct_hz", 10.0, lo=1e-9),
        reseed_hz=_number(doc, "multihyp.rates.reseed_hz", 0.3, lo=1e-9),
        match_period_s=_number(doc, "multihyp.rates.match_period_s", 5.0, lo=1e-9),
        stall_timeout_s=_number(doc, "multihyp.stall_timeout_s", 2.0, lo=1e-9),
    )

    localizer = LocalizerConfig(
        particles_min=particles_min,
        particles_max=particles_max,
        init_std=_triple(doc, "filter.init_std", [0.1, 0.1, 0.1]),
        motion_noise=motion,
        sensor=sensor,
        base_to_laser=laser.mount,
        winner_pct=winner_pct,
        loser_pct=loser_pct,
        reseed_jitter=_triple(doc, "filter.reseed_jitter", [0.03, 0.03, 0.03]),
        grow_above=grow_above,
        shrink_below=shrink_below,
        matcher=matcher,
        multihyp=multihyp,
        seed=seed,
    )

    return Config(
        map_image=image,
        map_metadata=metadata,
        seed=seed,
        laser=laser,
        localizer=localizer,
        recovery_threshold=_number(doc, "bench.recovery_threshold", 0.3, lo=1e-9),
        recovery_hold=_number(doc, "bench.recovery_hold", 5.0, lo=0.0),
    )


def load_scenario(path, default_seed: int = 0) -> ScenarioScript:
    doc = _load_json(path)
    raw_waypoints = _get(doc, "waypoints", None)
    if not isinstance(raw_waypoints, list) or not raw_waypoints:
        raise ConfigError("field 'waypoints' must be a non-empty list")
    waypoints = []
    for i, wp in enumerate(raw_waypoints):
        try:
            waypoints.append(
                (float(wp["t"]), Transform2D(float(wp["x"]), float(wp["y"]), float(wp["yaw"])))
            )
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"field 'waypoints[{i}]' needs numeric t, x, y, yaw") from None
    kidnaps = []
    for i, ev in enumerate(_get(doc, "kidnaps", []) or []):
        try:
            kidnaps.append(
                (float(ev["t"]), Transform2D(float(ev["x"]), float(ev["y"]), float(ev["yaw"])))
            )
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"field 'kidnaps[{i}]' needs numeric t, x, y, yaw") from None
    noise = MotionNoiseParams(
        trans_per_meter=_number(doc, "odom_noise.trans_per_meter", 0.0, lo=0.0),
        yaw_per_rad=_number(doc, "odom_noise.yaw_per_rad", 0.0, lo=0.0),
        yaw_per_meter=_number(doc, "odom_noise.yaw_per_meter", 0.0, lo=0.0),
    )
    return ScenarioScript(
        waypoints=waypoints,
        kidnaps=kidnaps,
        odom_noise=noise,
        odom_hz=_number(doc, "rates.odom_hz", 50.0, lo=1e-9),
        scan_hz=_number(doc, "rates.scan_hz", 10.0, lo=1e-9),
        seed=int(_number(doc, "seed", default_seed, integer=True)),
    )


def named_stream(seed: int, name: str) -> np.random.Generator:
    """One of the fixed per-consumer RNG streams derived from the global seed."""
    ids = {"motion": 0, "reseed": 1, "init": 2, "sensor": 3}
    if name not in ids:
        raise ValueError(f"unknown stream {name!r}")
    return np.random.default_rng(np.random.SeedSequence([seed, ids[name]]))
