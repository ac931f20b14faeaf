"""
Coupled photovoltaic panel and battery model driven by weather.

The state (E, H, S) holds the stored energy in Wh, the battery health in
(0, 1] and the accumulated panel thermal stress in [0, 1]. E evolves in
time (g1 = identity), H against g2, the thermally weighted time, and S
against g3, the signed thermal stress accumulator. Time is in hours and
power in W.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from stieltjes_tools.derivator import LEFT_RECTANGLE, Derivator
from stieltjes_tools.errors import InputError, NonUniformGrid, SchemaError
from stieltjes_tools.stieltjes_solver import (
    Guard,
    GuardPolicy,
    StieltjesIVP,
    Trajectory,
    euler_solve,
)
from stieltjes_tools.utils import get_default_logger, write_frame_csv


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

WEATHER_COLUMNS = ["time_hours", "t_ambient_c", "poa_wm2"]
OUTPUT_COLUMNS = [
    "time_hours",
    "E_wh",
    "H",
    "S",
    "t_cell_c",
    "power_w",
    "demand_w",
    "alpha",
]

HOURS_PER_DAY = 24.0

# Health floor keeping the divisions by H finite.
H_FLOOR = 1e-3

# Relative tolerance for uniform grids read from text files.
_GRID_RTOL = 1e-6

# Daily demand in W by hour of day.
DEFAULT_DEMAND_TABLE = (
    (0.0, 120.0),
    (6.0, 180.0),
    (9.0, 130.0),
    (13.0, 180.0),
    (15.0, 130.0),
    (18.0, 200.0),
    (23.0, 120.0),
)


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """
    Ambient temperature (degC) and plane-of-array irradiance (W/m2) on a
    uniform grid in hours.
    """

    grid: np.ndarray
    t_ambient: np.ndarray
    poa: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        t_ambient = np.array(self.t_ambient, dtype=float)
        poa = np.array(self.poa, dtype=float)
        if not grid.ndim == t_ambient.ndim == poa.ndim == 1:
            raise InputError("Weather series must be one-dimensional")
        if not grid.size == t_ambient.size == poa.size:
            raise InputError(
                f"Weather series lengths differ: {grid.size}, {t_ambient.size}, {poa.size}"
            )
        if grid.size == 0:
            raise InputError("Weather series is empty")
        if not (
            np.all(np.isfinite(grid))
            and np.all(np.isfinite(t_ambient))
            and np.all(np.isfinite(poa))
        ):
            raise InputError("Weather series contains non-finite values")
        if np.any(poa < 0.0):
            raise InputError("POA irradiance must be nonnegative")
        if grid.size > 1:
            steps = np.diff(grid)
            if np.any(steps <= 0.0) or not np.allclose(
                steps, steps[0], rtol=_GRID_RTOL, atol=0.0
            ):
                raise NonUniformGrid("Weather time grid is not uniform and increasing")
        for arr in (grid, t_ambient, poa):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "t_ambient", t_ambient)
        object.__setattr__(self, "poa", poa)

    @property
    def step(self) -> float:
        if self.grid.size < 2:
            return 0.0
        return (self.grid[-1] - self.grid[0]) / (self.grid.size - 1)

    @property
    def start(self) -> float:
        return float(self.grid[0])

    @property
    def end(self) -> float:
        return float(self.grid[-1])

    def at(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """
        Linearly interpolated (T_ambient, POA) at times t.
        """
        return (
            np.interp(t, self.grid, self.t_ambient),
            np.interp(t, self.grid, self.poa),
        )

    def resample(self, step: float, end: Optional[float] = None) -> "WeatherSeries":
        """
        Series on a uniform grid with the given step, by linear interpolation.

        :param step: New step; it must be an integer multiple or divisor of
            the current step.
        :param end: Optional earlier end time; must be a node of the new grid.
        :returns: The resampled series.
        """
        end = self.end if end is None else end
        if end > self.end + _GRID_RTOL * max(self.step, 1.0) or end < self.start:
            raise InputError(
                f"Requested end {end} h is outside the weather data [{self.start}, {self.end}]"
            )
        if self.grid.size > 1:
            ratio = self.step / step
            if not (_is_integer(ratio) or _is_integer(1.0 / ratio)):
                raise InputError(
                    f"Step {step} h is neither a multiple nor a divisor of the "
                    f"weather step {self.step} h"
                )
        count = (end - self.start) / step
        if not _is_integer(count):
            raise InputError(f"The horizon {end - self.start} h is not a multiple of {step} h")
        grid = np.linspace(self.start, end, int(round(count)) + 1)
        t_ambient, poa = self.at(grid)
        return WeatherSeries(grid, t_ambient, np.maximum(poa, 0.0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time_hours": self.grid,
                "t_ambient_c": self.t_ambient,
                "poa_wm2": self.poa,
            },
            columns=WEATHER_COLUMNS,
        )


def _is_integer(value: float) -> bool:
    return abs(value - round(value)) <= 1e-9 * max(1.0, abs(value))


@dataclass(frozen=True)
class PanelParams:
    """
    PV panel efficiency and thermal stress parameters.
    Temperatures in degC, mu1 and mu2 in 1/(degC h).
    """

    area: float = 18.0
    alpha_ref: float = 0.18
    gamma: float = 0.004
    rho: float = 0.3
    noct: float = 45.0
    t_op: float = 25.0
    mu1: float = 1e-4
    mu2: float = 0.5e-4
    beta: float = 1.0
    beta_r: float = 1.0

    def __post_init__(self):
        if not self.area > 0.0:
            raise InputError("Panel area must be positive")
        if not 0.0 < self.alpha_ref < 1.0:
            raise InputError("alpha_ref must lie in (0, 1)")
        if self.rho < 0.0 or self.mu1 < 0.0 or self.mu2 < 0.0:
            raise InputError("rho, mu1 and mu2 must be nonnegative")
        if self.beta < 1.0 or self.beta_r < 1.0:
            raise InputError("beta and beta_r must be at least 1")


@dataclass(frozen=True)
class BatteryParams:
    """
    Battery storage and degradation parameters. Energy in Wh, rates in 1/h.
    """

    e_max: float = 20000.0
    eta0: float = 0.95
    t_opt: float = 25.0
    delta_t: float = 0.005
    lambda0: float = 1e-4
    delta: float = 1.0
    nu: float = 2e-4
    t_thresh: float = 30.0
    beta_thermal: float = 0.07

    def __post_init__(self):
        if not self.e_max > 0.0:
            raise InputError("e_max must be positive")
        if not 0.0 < self.eta0 < 1.0:
            raise InputError("eta0 must lie in (0, 1)")
        if self.lambda0 < 0.0 or self.nu < 0.0:
            raise InputError("lambda0 and nu must be nonnegative")


@dataclass(frozen=True)
class DemandSchedule:
    """
    Piecewise-constant daily demand: values[j] W from starts[j] hours (mod 24)
    until the next start.
    """

    starts: Tuple[float, ...] = tuple(start for start, _ in DEFAULT_DEMAND_TABLE)
    values: Tuple[float, ...] = tuple(value for _, value in DEFAULT_DEMAND_TABLE)

    def __post_init__(self):
        starts = tuple(float(s) for s in self.starts)
        values = tuple(float(v) for v in self.values)
        if not starts or len(starts) != len(values):
            raise InputError("Demand schedule needs one value per start hour")
        if starts[0] != 0.0 or starts[-1] >= HOURS_PER_DAY:
            raise InputError("Demand schedule branches must cover [0, 24) starting at 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InputError("Demand schedule start hours must be strictly increasing")
        if any(v < 0.0 or not math.isfinite(v) for v in values):
            raise InputError("Demand values must be finite and nonnegative")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "values", values)

    @classmethod
    def parse(cls, text: str) -> "DemandSchedule":
        """
        Parses "0:120,6:180,..." (hour:watts pairs).
        """
        try:
            pairs = [item.split(":") for item in text.split(",") if item.strip()]
            return cls(
                tuple(float(h) for h, _ in pairs), tuple(float(w) for _, w in pairs)
            )
        except ValueError as e:
            raise InputError(f"Malformed demand schedule {text!r}") from e

    def to_text(self) -> str:
        return ",".join(f"{s:g}:{v:g}" for s, v in zip(self.starts, self.values))

    def __call__(self, t):
        hour = np.mod(np.asarray(t, dtype=float), HOURS_PER_DAY)
        idx = np.searchsorted(np.asarray(self.starts), hour, side="right") - 1
        values = np.asarray(self.values)[idx]
        if np.ndim(values) == 0:
            return float(values)
        return values


@dataclass(frozen=True)
class InitialState:
    """
    E0 in Wh, H0 in (0, 1], S0 in [0, 1].
    """

    e_wh: float = 16000.0
    h: float = 0.9
    s: float = 0.1

    def as_array(self) -> np.ndarray:
        return np.array([self.e_wh, self.h, self.s], dtype=float)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Everything needed to run the model; days defaults to the weather horizon.
    """

    weather: WeatherSeries
    panel: PanelParams = field(default_factory=PanelParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    demand: DemandSchedule = field(default_factory=DemandSchedule)
    initial: InitialState = field(default_factory=InitialState)
    step: float = 0.1
    days: Optional[float] = None

    def __post_init__(self):
        init = self.initial
        if not 0.0 < init.h <= 1.0:
            raise InputError(f"H0 = {init.h} must lie in (0, 1]")
        if not 0.0 <= init.s <= 1.0:
            raise InputError(f"S0 = {init.s} must lie in [0, 1]")
        if not 0.0 <= init.e_wh <= self.battery.e_max * init.h:
            raise InputError(
                f"E0 = {init.e_wh} Wh must lie in [0, e_max * H0] = "
                f"[0, {self.battery.e_max * init.h}]"
            )
        if not self.step > 0.0:
            raise InputError("The scenario step must be positive")
        if self.days is not None and self.days < 0.0:
            raise InputError("days must be nonnegative")

    @property
    def horizon(self) -> float:
        """
        Simulated duration in hours.
        """
        if self.days is None:
            return self.weather.end - self.weather.start
        return HOURS_PER_DAY * self.days


def cell_temperature(w: WeatherSeries, noct: float) -> np.ndarray:
    """
    Steady-state cell temperature T_amb + (NOCT - 20) / 800 * POA.
    """
    return ross_temperature(w.t_ambient, w.poa, noct)


def ross_temperature(t_ambient, poa, noct: float):
    if noct < 20.0:
        raise InputError(f"NOCT = {noct} must be at least 20 degC")
    return t_ambient + (noct - 20.0) / 800.0 * poa


def efficiency(panel: PanelParams, t_cell, s):
    """
    alpha_ref (1 - gamma (T_cell - T_op)) (1 - rho S).
    """
    return (
        panel.alpha_ref
        * (1.0 - panel.gamma * (np.asarray(t_cell) - panel.t_op))
        * (1.0 - panel.rho * np.asarray(s))
    )


def power(panel: PanelParams, t_cell, poa, s):
    """
    Electrical power in W: A * efficiency * POA.
    """
    return panel.area * efficiency(panel, t_cell, s) * np.asarray(poa)


def demand(schedule: DemandSchedule, t):
    return schedule(t)


def build_g2(w: WeatherSeries, battery: BatteryParams) -> Derivator:
    """
    Thermally weighted time: density exp(beta_thermal max(0, T_amb - T_thresh)).
    """
    density = np.exp(
        battery.beta_thermal * np.maximum(0.0, w.t_ambient - battery.t_thresh)
    )
    return Derivator.sampled(w.grid, density, LEFT_RECTANGLE)


def build_g3(w: WeatherSeries, panel: PanelParams) -> Derivator:
    """
    Thermal stress accumulator: density mu1 max(0, T_cell - T_op)^beta minus
    mu2 max(0, T_op - T_cell)^beta_r.
    """
    t_cell = cell_temperature(w, panel.noct)
    heating = np.maximum(0.0, t_cell - panel.t_op) ** panel.beta
    cooling = np.maximum(0.0, panel.t_op - t_cell) ** panel.beta_r
    density = panel.mu1 * heating - panel.mu2 * cooling
    return Derivator.sampled(w.grid, density, LEFT_RECTANGLE)


def model_rates(
    panel: PanelParams,
    battery: BatteryParams,
    t_ambient: float,
    t_cell: float,
    poa: float,
    demand_w: float,
    state: Sequence[float],
) -> np.ndarray:
    """
    (rate_E, rate_H, rate_S) for given conditions; rate_E in W.
    """
    energy, health, stress = state
    charge = energy / (battery.e_max * health)
    produced = float(power(panel, t_cell, poa, stress))
    rate_e = battery.eta0 * health * (produced - demand_w) / (
        1.0 + battery.delta_t * (t_ambient - battery.t_opt) ** 2
    ) * (1.0 - charge) - battery.lambda0 * (
        1.0 + battery.delta * (1.0 - health) ** 2
    ) * energy
    rate_h = -battery.nu * (charge - 0.5) ** 4 * health
    rate_s = (1.0 - stress) if t_cell >= panel.t_op else stress
    return np.array([rate_e, rate_h, rate_s])


def rhs(scenario: Scenario, t: float, state: Sequence[float]) -> np.ndarray:
    """
    Model rates at time t with weather interpolated from the scenario.
    """
    t_ambient, poa = scenario.weather.at(t)
    t_cell = ross_temperature(float(t_ambient), float(poa), scenario.panel.noct)
    return model_rates(
        scenario.panel,
        scenario.battery,
        float(t_ambient),
        float(t_cell),
        float(poa),
        float(scenario.demand(t)),
        state,
    )


class _GridRhs:
    """
    Model rates on a fixed weather grid, looking conditions up by node.
    """

    def __init__(self, scenario: Scenario, weather: WeatherSeries):
        self.scenario = scenario
        self.weather = weather
        self.t_cell = cell_temperature(weather, scenario.panel.noct)

    def __call__(self, t: float, state: np.ndarray) -> np.ndarray:
        k = int(round((t - self.weather.start) / self.weather.step))
        k = min(max(k, 0), self.weather.grid.size - 1)
        return model_rates(
            self.scenario.panel,
            self.scenario.battery,
            float(self.weather.t_ambient[k]),
            float(self.t_cell[k]),
            float(self.weather.poa[k]),
            float(self.scenario.demand(t)),
            state,
        )


def model_guards(battery: BatteryParams) -> Tuple[Guard, Guard, Guard]:
    """
    E in [0, e_max H], H in [H_FLOOR, 1], S in [0, 1], all clamped.
    """
    return (
        Guard(lower=0.0, upper_fn=lambda x: battery.e_max * x[1]),
        Guard(lower=H_FLOOR, upper=1.0, policy=GuardPolicy.CLAMP),
        Guard(lower=0.0, upper=1.0, policy=GuardPolicy.CLAMP),
    )


@dataclass(eq=False)
class SimulationResult:
    """
    Trajectory of (E, H, S) plus the derived series as a frame with the
    output CSV columns.
    """

    trajectory: Trajectory
    frame: pd.DataFrame

    def to_csv(self, path: str):
        write_frame_csv(self.frame, path)


def scenario_weather(scenario: Scenario) -> WeatherSeries:
    """
    The weather resampled to the scenario step over the simulated horizon.
    """
    return scenario.weather.resample(
        scenario.step, end=scenario.weather.start + scenario.horizon
    )


def _derived_frame(
    scenario: Scenario, weather: WeatherSeries, grid: np.ndarray, states: np.ndarray
) -> pd.DataFrame:
    t_ambient, poa = weather.at(grid)
    t_cell = ross_temperature(t_ambient, poa, scenario.panel.noct)
    stress = states[:, 2]
    return pd.DataFrame(
        {
            "time_hours": grid,
            "E_wh": states[:, 0],
            "H": states[:, 1],
            "S": stress,
            "t_cell_c": t_cell,
            "power_w": power(scenario.panel, t_cell, poa, stress),
            "demand_w": scenario.demand(grid),
            "alpha": efficiency(scenario.panel, t_cell, stress),
        },
        columns=OUTPUT_COLUMNS,
    )


def simulate(scenario: Scenario) -> SimulationResult:
    """
    Runs the Stieltjes-Euler scheme on (identity, g2, g3) at the scenario step.

    :param scenario: The scenario.
    :returns: The trajectory and the output frame.
    """
    x0 = scenario.initial.as_array()
    if scenario.horizon == 0.0:
        grid = np.array([scenario.weather.start])
        trajectory = Trajectory(grid, x0.reshape(1, -1), meta={"scheme": "euler"})
        return SimulationResult(
            trajectory, _derived_frame(scenario, scenario.weather, grid, trajectory.states)
        )
    weather = scenario_weather(scenario)
    ivp = StieltjesIVP(
        (
            Derivator.identity(weather.start, weather.end),
            build_g2(weather, scenario.battery),
            build_g3(weather, scenario.panel),
        ),
        _GridRhs(scenario, weather),
        x0,
        model_guards(scenario.battery),
    )
    _LOG.info(
        "Simulating %g h at step %g h (%d nodes)",
        scenario.horizon,
        scenario.step,
        weather.grid.size,
    )
    trajectory = euler_solve(ivp, scenario.step)
    return SimulationResult(
        trajectory, _derived_frame(scenario, weather, trajectory.grid, trajectory.states)
    )


def daily_peak_alpha(frame: pd.DataFrame, producing_only: bool = True) -> pd.Series:
    """
    Maximum efficiency per day index floor(t / 24); the final node at a whole
    day boundary is folded into the last day.

    :param frame: Output frame of simulate.
    :param producing_only: Only consider rows with positive power.
    :returns: Series indexed by day.
    """
    rows = frame[frame["power_w"] > 0.0] if producing_only else frame
    last_day = max(int(math.ceil(frame["time_hours"].max() / HOURS_PER_DAY)) - 1, 0)
    days = np.minimum(np.floor(rows["time_hours"] / HOURS_PER_DAY), last_day).astype(int)
    return rows["alpha"].groupby(days).max()


def synth_clear_sky(
    days: int,
    peak_poa: float,
    t_min: float,
    t_max: float,
    step: float = 0.1,
) -> WeatherSeries:
    """
    Deterministic clear-sky weather.

    POA is a half sine between 06:00 and 20:00 peaking at 13:00; ambient
    temperature rises from t_min at 05:00 to t_max at 15:00 along a cosine and
    falls back over the following 14 hours.
    """
    if days < 1:
        raise InputError("days must be at least 1")
    if t_min > t_max:
        raise InputError("t_min must not exceed t_max")
    if peak_poa < 0.0:
        raise InputError("peak_poa must be nonnegative")
    count = HOURS_PER_DAY * days / step
    if not _is_integer(count):
        raise InputError(f"Step {step} h does not divide a day")
    grid = np.linspace(0.0, HOURS_PER_DAY * days, int(round(count)) + 1)
    hour = np.mod(grid, HOURS_PER_DAY)
    daylight = (hour >= 6.0) & (hour <= 20.0)
    poa = np.where(daylight, peak_poa * np.sin(0.5 * np.pi * (hour - 6.0) / 7.0), 0.0)
    poa = np.maximum(poa, 0.0)
    swing = t_max - t_min
    rising = (hour >= 5.0) & (hour < 15.0)
    since_peak = np.where(hour >= 15.0, hour - 15.0, hour + 9.0)
    t_ambient = np.where(
        rising,
        t_min + swing * 0.5 * (1.0 - np.cos(np.pi * (hour - 5.0) / 10.0)),
        t_max - swing * 0.5 * (1.0 - np.cos(np.pi * since_peak / 14.0)),
    )
    return WeatherSeries(grid, t_ambient, poa)


def load_weather_csv(path: str) -> WeatherSeries:
    """
    Reads a weather CSV with header time_hours,t_ambient_c,poa_wm2.

    :param path: The file path.
    :returns: The validated series.
    """
    _LOG.debug("Reading weather file %s", path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path}: empty weather file") from e
    except pd.errors.ParserError as e:
        raise SchemaError(f"{path}: malformed CSV: {e}") from e
    if list(frame.columns) != WEATHER_COLUMNS:
        raise SchemaError(
            f"{path}: header must be {','.join(WEATHER_COLUMNS)}, "
            f"got {','.join(map(str, frame.columns))}"
        )
    if frame.empty:
        raise SchemaError(f"{path}: no data rows")
    numeric = {}
    for column in WEATHER_COLUMNS:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise SchemaError(
                f"{path}: line {row + 2}, column {column}: not a number: "
                f"{frame[column].iloc[row]!r}"
            )
        numeric[column] = values.to_numpy(dtype=float)
    negative = np.flatnonzero(numeric["poa_wm2"] < 0.0)
    if negative.size:
        row = int(negative[0])
        raise SchemaError(
            f"{path}: line {row + 2}, column poa_wm2: negative irradiance "
            f"{numeric['poa_wm2'][row]}"
        )
    try:
        return WeatherSeries(
            numeric["time_hours"], numeric["t_ambient_c"], numeric["poa_wm2"]
        )
    except NonUniformGrid as e:
        raise NonUniformGrid(f"{path}: {e}") from e


def write_weather_csv(weather: WeatherSeries, path: str):
    write_frame_csv(weather.to_frame(), path)


def summer_scenario(
    weather: Optional[WeatherSeries] = None, days: Optional[float] = None
) -> Scenario:
    """
    The summer scenario: reference parameters with beta = 1 and no stress
    recovery (mu2 = 0), on synthetic clear-sky weather unless given.
    """
    if weather is None:
        weather = synth_clear_sky(7, 900.0, 22.0, 36.0)
    return Scenario(
        weather=weather,
        panel=PanelParams(mu2=0.0),
        battery=BatteryParams(),
        demand=DemandSchedule(),
        initial=InitialState(e_wh=0.8 * 20000.0, h=0.9, s=0.1),
        step=0.1,
        days=days,
    )


def sweep_scenarios(
    scenarios: Sequence[Scenario], max_workers: int = 4
) -> List[SimulationResult]:
    """
    Simulates independent scenarios on a thread pool, preserving order.
    """
    if max_workers < 1:
        raise InputError("max_workers must be at least 1")
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(simulate, scenarios))
