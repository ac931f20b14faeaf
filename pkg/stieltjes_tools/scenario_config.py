"""
Scenario configuration files.

A scenario file is a dotenv-style KEY=value file. Keys mirror the panel,
battery, initial state, demand and run fields; unknown keys are errors.
Weather comes from WEATHER_CSV (relative to the config file) or is
synthesized from the SYNTH_* keys.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from dotenv import dotenv_values

from stieltjes_tools.errors import ConfigError, InputError
from stieltjes_tools.pv_thermal_model import (
    BatteryParams,
    DemandSchedule,
    InitialState,
    PanelParams,
    Scenario,
    WeatherSeries,
    load_weather_csv,
    synth_clear_sky,
)
from stieltjes_tools.utils import get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

PANEL_KEYS = {
    "PANEL_AREA_M2": "area",
    "PANEL_ALPHA_REF": "alpha_ref",
    "PANEL_GAMMA_PER_C": "gamma",
    "PANEL_RHO": "rho",
    "PANEL_NOCT_C": "noct",
    "PANEL_T_OP_C": "t_op",
    "PANEL_MU1": "mu1",
    "PANEL_MU2": "mu2",
    "PANEL_BETA": "beta",
    "PANEL_BETA_R": "beta_r",
}

BATTERY_KEYS = {
    "BATTERY_E_MAX_WH": "e_max",
    "BATTERY_ETA0": "eta0",
    "BATTERY_T_OPT_C": "t_opt",
    "BATTERY_DELTA_T": "delta_t",
    "BATTERY_LAMBDA0_PER_H": "lambda0",
    "BATTERY_DELTA": "delta",
    "BATTERY_NU_PER_H": "nu",
    "BATTERY_T_THRESH_C": "t_thresh",
    "BATTERY_BETA_THERMAL": "beta_thermal",
}

INITIAL_KEYS = {
    "INITIAL_E_WH": "e_wh",
    "INITIAL_H": "h",
    "INITIAL_S": "s",
}

RUN_KEYS = ("DEMAND_SCHEDULE", "STEP_HOURS", "DAYS", "WEATHER_CSV")

SYNTH_KEYS = (
    "SYNTH_DAYS",
    "SYNTH_PEAK_POA_WM2",
    "SYNTH_T_MIN_C",
    "SYNTH_T_MAX_C",
    "SYNTH_STEP_HOURS",
)

KNOWN_KEYS = frozenset(
    list(PANEL_KEYS) + list(BATTERY_KEYS) + list(INITIAL_KEYS) + list(RUN_KEYS) + list(SYNTH_KEYS)
)

# Synthetic weather used when neither WEATHER_CSV nor SYNTH_* values are given.
_SYNTH_DEFAULTS = {
    "SYNTH_DAYS": "7",
    "SYNTH_PEAK_POA_WM2": "900",
    "SYNTH_T_MIN_C": "22",
    "SYNTH_T_MAX_C": "36",
}

BUNDLED_SCENARIO = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "scenarios", "summer_scenario.env"
)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Validated raw key/value pairs of a scenario file.
    """

    values: Dict[str, str] = field(default_factory=dict)
    base_dir: str = "."

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key, default)


def _check_keys(keys: Iterable[str], source: str):
    unknown = sorted(set(keys) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(unknown)}")


def load_scenario_config(path: str) -> ScenarioConfig:
    """
    Reads and validates a scenario file.

    :param path: The file path.
    :returns: The configuration; relative paths resolve against its directory.
    """
    if not os.path.exists(path):
        raise ConfigError(f"Scenario file not found: {path}")
    raw = dotenv_values(path)
    _check_keys(raw.keys(), path)
    missing = sorted(key for key, value in raw.items() if value is None)
    if missing:
        raise ConfigError(f"{path}: keys without values: {', '.join(missing)}")
    _LOG.debug("Loaded %d scenario keys from %s", len(raw), path)
    return ScenarioConfig(
        values={key: str(value) for key, value in raw.items()},
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


def with_override(config: ScenarioConfig, key: str, value: Any) -> ScenarioConfig:
    """
    Returns a copy of the configuration with one key replaced.
    """
    _check_keys([key], "override")
    values = dict(config.values)
    values[key] = str(value)
    return replace(config, values=values)


def _typed(config: ScenarioConfig, key: str, cast: Callable[[str], Any], default=None):
    raw = config.get(key)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for {key}: {raw!r}") from e


def _params(config: ScenarioConfig, keys: Dict[str, str]) -> Dict[str, float]:
    return {
        name: _typed(config, key, float)
        for key, name in keys.items()
        if config.get(key) not in (None, "")
    }


def build_weather(config: ScenarioConfig, step: float) -> WeatherSeries:
    """
    Weather from WEATHER_CSV, or synthetic clear-sky weather from SYNTH_*.
    """
    csv = config.get("WEATHER_CSV")
    has_synth = any(config.get(key) not in (None, "") for key in SYNTH_KEYS)
    if csv:
        if has_synth:
            raise ConfigError("WEATHER_CSV and SYNTH_* keys are mutually exclusive")
        path = csv if os.path.isabs(csv) else os.path.join(config.base_dir, csv)
        return load_weather_csv(path)
    synth = dict(_SYNTH_DEFAULTS)
    synth.update({k: v for k, v in config.values.items() if k in SYNTH_KEYS and v})
    synth_config = replace(config, values=synth)
    return synth_clear_sky(
        days=_typed(synth_config, "SYNTH_DAYS", int),
        peak_poa=_typed(synth_config, "SYNTH_PEAK_POA_WM2", float),
        t_min=_typed(synth_config, "SYNTH_T_MIN_C", float),
        t_max=_typed(synth_config, "SYNTH_T_MAX_C", float),
        step=_typed(synth_config, "SYNTH_STEP_HOURS", float, step),
    )


def build_scenario(config: ScenarioConfig, default_step: float = 0.1) -> Scenario:
    """
    Turns a configuration into a scenario.

    :param config: The configuration.
    :param default_step: Step in hours when STEP_HOURS is absent.
    :returns: The scenario; parameter validation errors become ConfigError.
    """
    step = _typed(config, "STEP_HOURS", float, default_step)
    try:
        schedule_text = config.get("DEMAND_SCHEDULE")
        demand = DemandSchedule.parse(schedule_text) if schedule_text else DemandSchedule()
        panel = PanelParams(**_params(config, PANEL_KEYS))
        battery = BatteryParams(**_params(config, BATTERY_KEYS))
        initial_values = _params(config, INITIAL_KEYS)
        initial_values.setdefault(
            "e_wh", battery.e_max * min(0.8, initial_values.get("h", 0.9))
        )
        initial = InitialState(**initial_values)
        weather = build_weather(config, step)
        return Scenario(
            weather=weather,
            panel=panel,
            battery=battery,
            demand=demand,
            initial=initial,
            step=step,
            days=_typed(config, "DAYS", float),
        )
    except ConfigError:
        raise
    except InputError as e:
        if type(e) is not InputError:
            raise
        raise ConfigError(str(e)) from e


def parse_sweep(text: str) -> Tuple[str, List[str]]:
    """
    Parses "KEY=v1,v2,..." into the key and its values.
    """
    key, sep, values = text.partition("=")
    key = key.strip()
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not sep or not items:
        raise ConfigError(f"Malformed sweep {text!r}; expected KEY=v1,v2,...")
    _check_keys([key], "sweep")
    return key, items


def sweep_configs(config: ScenarioConfig, sweep: str) -> List[Tuple[str, ScenarioConfig]]:
    """
    One configuration per swept value, labelled "KEY=value".
    """
    key, items = parse_sweep(sweep)
    return [(f"{key}={item}", with_override(config, key, item)) for item in items]


def with_weather_csv(config: ScenarioConfig, path: str) -> ScenarioConfig:
    """
    Returns a copy reading weather from path, dropping any SYNTH_* keys.
    """
    values = {k: v for k, v in config.values.items() if k not in SYNTH_KEYS}
    values["WEATHER_CSV"] = path
    return replace(config, values=values)
