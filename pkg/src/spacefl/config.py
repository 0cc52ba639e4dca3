"""Config-file parsing for single runs and sweeps.

Config files are YAML mappings; every key is optional and an empty file
yields an all-defaults single-run configuration.  Unknown keys, invalid
algorithm/augmentation combinations, and out-of-catalog station counts are
rejected with descriptive errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Optional

import yaml

from .fl_core import HyperParams, ModelSpec
from .orbital import ConstellationSpec
from .sim import SimConfig
from .stations import VALID_NETWORK_SIZES
from .strategies import StrategyConfig, all_variants
from .sweep import DatasetSpec, SweepSpec, desk_sweep


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


_TOP_KEYS = {
    "algorithm", "augmentation", "clusters", "sats_per_cluster", "altitude_km",
    "inclination_deg", "raan_spread_deg", "stations", "start_date", "end_date",
    "horizon_days", "max_rounds", "seed", "flops_rate", "flops_per_epoch",
    "bandwidth_bps", "min_elev_deg", "gmst0_rad", "max_exec_epochs",
    "client_side_eval", "hyperparams", "model", "dataset", "sweep",
}
_HP_KEYS = {"C", "B", "E", "eta", "mu_prox", "D", "staleness_max", "min_epochs"}
_MODEL_KEYS = {"input_dim", "hidden", "n_classes"}
_SWEEP_KEYS = {"clusters", "sats_per_cluster", "stations", "variants", "seeds"}


@dataclass(frozen=True)
class ResolvedConfig:
    sim: SimConfig
    dataset: DatasetSpec
    sweep: Optional[SweepSpec] = None


def _parse_date(v) -> date:
    if isinstance(v, date):
        return v
    try:
        return date.fromisoformat(str(v))
    except ValueError as exc:
        raise ConfigError(f"bad date {v!r}: {exc}") from exc


def _check_keys(mapping: dict, allowed: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} key(s): {sorted(unknown)}; "
                          f"valid keys: {sorted(allowed)}")


def parse_config(path: str | Path | None = None,
                 overrides: Optional[dict] = None) -> ResolvedConfig:
    """Resolve a config file plus overrides into a fully defaulted config."""
    raw: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        raw = loaded
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    _check_keys(raw, _TOP_KEYS, "config")

    hp_raw = raw.get("hyperparams") or {}
    _check_keys(hp_raw, _HP_KEYS, "hyperparams")
    try:
        hp = HyperParams(**hp_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparams: {exc}") from exc

    try:
        dataset = DatasetSpec.parse(str(raw.get("dataset", "synthetic")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    model_raw = raw.get("model")
    if model_raw is not None:
        _check_keys(model_raw, _MODEL_KEYS, "model")
        if "hidden" in model_raw:
            model_raw = {**model_raw, "hidden": tuple(model_raw["hidden"])}
        try:
            model = ModelSpec(**model_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model spec: {exc}") from exc
    else:
        model = dataset.model_spec()

    try:
        strategy = StrategyConfig(str(raw.get("algorithm", "fedavg")),
                                  str(raw.get("augmentation", "base")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    n_stations = int(raw.get("stations", 13))
    if n_stations not in VALID_NETWORK_SIZES:
        raise ConfigError(f"invalid station count {n_stations}; "
                          f"valid sizes are {list(VALID_NETWORK_SIZES)}")

    try:
        constellation = ConstellationSpec(
            n_clusters=int(raw.get("clusters", 2)),
            sats_per_cluster=int(raw.get("sats_per_cluster", 10)),
            altitude_km=float(raw.get("altitude_km", 500.0)),
            inclination_rad=math.radians(float(raw.get("inclination_deg", 90.0))),
            raan_spread_rad=math.radians(float(raw.get("raan_spread_deg", 180.0))),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    start = _parse_date(raw.get("start_date", date(2024, 4, 14)))
    if "horizon_days" in raw:
        end = start + timedelta(days=float(raw["horizon_days"]))
    else:
        end = _parse_date(raw.get("end_date", date(2024, 7, 13)))

    try:
        sim = SimConfig(
            constellation=constellation,
            n_stations=n_stations,
            strategy=strategy,
            hp=hp,
            model=model,
            start_date=start,
            end_date=end,
            max_rounds=int(raw.get("max_rounds", 500)),
            seed=int(raw.get("seed", 0)),
            flops_rate=float(raw.get("flops_rate", 40e9)),
            flops_per_epoch=float(raw.get("flops_per_epoch", 98e6)),
            bandwidth_bps=float(raw.get("bandwidth_bps", 580e6)),
            min_elev_deg=float(raw.get("min_elev_deg", 10.0)),
            gmst0_rad=float(raw.get("gmst0_rad", 0.0)),
            max_exec_epochs=int(raw.get("max_exec_epochs", 50)),
            client_side_eval=bool(raw.get("client_side_eval", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    sweep = None
    if "sweep" in raw and raw["sweep"] is not None:
        sweep = _parse_sweep(raw["sweep"])
    return ResolvedConfig(sim=sim, dataset=dataset, sweep=sweep)


def _parse_variant(text: str) -> StrategyConfig:
    alg, _, aug = str(text).partition(":")
    try:
        return StrategyConfig(alg, aug or "base")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_sweep(raw: dict) -> SweepSpec:
    _check_keys(raw, _SWEEP_KEYS, "sweep")
    kwargs = {}
    for key in ("clusters", "sats_per_cluster", "stations", "seeds"):
        if key in raw:
            kwargs[key] = tuple(int(v) for v in raw[key])
    if "variants" in raw:
        kwargs["variants"] = tuple(_parse_variant(v) for v in raw["variants"])
    try:
        return SweepSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def apply_profile(resolved: ResolvedConfig, profile: Optional[str]) -> ResolvedConfig:
    """Apply a named scale profile.

    ``desk`` shrinks the horizon to 7 simulated days and, for sweeps, the
    grid to {1,2} clusters x {2,10} sats x {1,3,13} stations; ``paper``
    keeps the full three-month horizon and 768-cell grid.
    """
    if profile is None:
        return resolved
    if profile == "desk":
        sim = resolved.sim.with_horizon_days(7)
        sweep = resolved.sweep
        if sweep is None:
            sweep = desk_sweep()
        else:
            sweep = replace(sweep, clusters=(1, 2), sats_per_cluster=(2, 10),
                            stations=(1, 3, 13))
        return ResolvedConfig(sim=sim, dataset=resolved.dataset, sweep=sweep)
    if profile == "paper":
        sweep = resolved.sweep if resolved.sweep is not None else SweepSpec(
            variants=tuple(all_variants()))
        return ResolvedConfig(sim=resolved.sim, dataset=resolved.dataset,
                              sweep=sweep)
    raise ConfigError(f"unknown profile {profile!r}; choose 'desk' or 'paper'")
