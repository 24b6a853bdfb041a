"""Scenario configuration files: YAML key/value documents with nested lists."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .active import SignalConfig
from .engine import SlamParams
from .scenario import NoiseModel, Scenario, Wall


class ConfigError(ValueError):
    """Malformed or incomplete scenario configuration."""


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    noise: NoiseModel
    signal: SignalConfig
    n_beams: int
    slam: SlamParams
    raw: dict


def _require(mapping: dict, field: str, where: str):
    if field not in mapping:
        raise ConfigError(f"missing field {field!r} in {where}")
    return mapping[field]


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"cannot parse config {path}{loc}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")

    try:
        walls = [Wall(a=(ax, ay), b=(bx, by))
                 for ax, ay, bx, by in _require(raw, "walls", "config")]
        scenario = Scenario(
            walls=walls,
            pas=[tuple(p) for p in _require(raw, "pas", "config")],
            waypoints=[tuple(p) for p in _require(raw, "waypoints", "config")],
            step_length=float(_require(raw, "step_length", "config")),
            sample_period=float(_require(raw, "sample_period", "config")),
        )
        nz = _require(raw, "noise", "config")
        noise = NoiseModel(
            toa_sigma=float(_require(nz, "toa_sigma", "noise")),
            p_detect=float(_require(nz, "p_detect", "noise")),
            mu_false=float(_require(nz, "mu_false", "noise")),
            roi_radius=float(_require(nz, "roi_radius", "noise")),
        )
        sg = _require(raw, "signal", "config")
        signal = SignalConfig(
            carrier_freq=float(_require(sg, "carrier_freq", "signal")),
            subcarrier_spacing=float(_require(sg, "subcarrier_spacing", "signal")),
            num_subcarriers=int(_require(sg, "num_subcarriers", "signal")),
            noise_var=float(_require(sg, "noise_var", "signal")),
            rcs_gamma=float(_require(sg, "rcs_gamma", "signal")),
            rcs_eta=float(_require(sg, "rcs_eta", "signal")),
        )
        n_beams = int(_require(raw, "n_beams", "config"))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed value in config {path}: {exc}") from exc

    slam_kwargs = dict(raw.get("slam") or {})
    slam_kwargs.setdefault("p_detect", noise.p_detect)
    slam_kwargs.setdefault("mu_false", noise.mu_false)
    slam_kwargs.setdefault("toa_sigma", noise.toa_sigma)
    slam_kwargs.setdefault("roi_radius", noise.roi_radius)
    try:
        slam = SlamParams(**slam_kwargs)
    except TypeError as exc:
        raise ConfigError(f"unknown field in slam section of {path}: {exc}") from exc

    return RunConfig(scenario=scenario, noise=noise, signal=signal,
                     n_beams=n_beams, slam=slam, raw=raw)
