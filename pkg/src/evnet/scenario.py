"""Scenario files: everything a simulation run needs, in one YAML document.

Parsing is strict. Unknown keys are rejected and every value is re-checked
against the invariants of the object it feeds, with the offending field
path in the error message.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .demand import DemandProfile, SpatialDemand, daily_demand_table
from .errors import ParameterError
from .station import StationConfig

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioError",
    "GameParams",
    "RunParams",
    "ProfitCosts",
    "NetworkScenario",
    "TIERS",
    "normalize_tier",
    "load_scenario",
    "parse_scenario",
    "dump_scenario",
    "scenario_to_dict",
    "preset_names",
    "load_preset",
]

SCHEMA_VERSION = 1

TIERS = ("baseline", "allocation_only", "full_control")
_TIER_ALIASES = {"allocation": "allocation_only", "full": "full_control"}


def normalize_tier(name: str) -> str:
    tier = _TIER_ALIASES.get(name, name)
    if tier not in TIERS:
        raise ParameterError(f"unknown tier {name!r}; expected one of baseline, allocation, full")
    return tier


class ScenarioError(ParameterError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class GameParams:
    gamma1: float = 0.45
    gamma2: float = 0.55
    urgency: float = 0.1
    incentive_range: tuple[float, float] = (0.75, 1.0)
    dissatisfaction_range: tuple[float, float] = (0.02, 0.05)
    drive_cost_rate: float = 0.03
    retry_fraction: float = 1.0 / 3.0
    retry_delay_mean: float = 0.25
    blocking_estimator: str = "analytic"
    theta_grid: tuple[float, float, float] = (0.0, 1.0, 0.05)
    theta_stations: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("incentive_range", "dissatisfaction_range", "theta_grid", "theta_stations"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if abs(self.gamma1 + self.gamma2 - 1.0) > 1e-9:
            raise ParameterError("gamma1 + gamma2 must equal 1")
        if not 0 <= self.gamma1 < self.gamma2:
            raise ParameterError("need 0 <= gamma1 < gamma2")
        if self.urgency < 0 or self.drive_cost_rate < 0:
            raise ParameterError("urgency and drive_cost_rate must be nonnegative")
        for name in ("incentive_range", "dissatisfaction_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ParameterError(f"{name} must satisfy 0 <= low <= high")
        if not 0 <= self.retry_fraction <= 1:
            raise ParameterError("retry_fraction must lie in [0, 1]")
        if not self.retry_delay_mean > 0:
            raise ParameterError("retry_delay_mean must be positive")
        if self.blocking_estimator not in ("analytic", "empirical"):
            raise ParameterError("blocking_estimator must be 'analytic' or 'empirical'")
        start, stop, step = self.theta_grid
        if not (0 <= start <= stop and step > 0):
            raise ParameterError("theta_grid must be (start, stop, step) with 0 <= start <= stop, step > 0")

    def theta_values(self) -> list[float]:
        start, stop, step = self.theta_grid
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 10) for k in range(n)]


@dataclass(frozen=True)
class RunParams:
    seed: int = 1
    start: float = 0.0
    horizon: float = 24.0
    replications: int = 20
    window: float = 0.25
    tier: str = "baseline"
    measure_start: float | None = None
    measure_end: float | None = None

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed must be a nonnegative integer")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ParameterError("horizon must be positive")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ParameterError("replications must be a positive integer")
        if not self.window > 0:
            raise ParameterError("window must be positive")
        object.__setattr__(self, "tier", normalize_tier(self.tier))


@dataclass(frozen=True)
class ProfitCosts:
    """Operating costs per unit time; calibration constants, not measured data."""

    grid_slot_cost: float = 1.2
    storage_unit_cost: float = 0.5

    def __post_init__(self):
        if self.grid_slot_cost < 0 or self.storage_unit_cost < 0:
            raise ParameterError("costs must be nonnegative")


@dataclass(frozen=True)
class NetworkScenario:
    name: str
    stations: tuple[StationConfig, ...]
    s_max: int
    s_limit: int
    allocation_time: float
    spatial: SpatialDemand
    profile: DemandProfile
    shares: tuple[float, ...] | None = None
    game: GameParams = field(default_factory=GameParams)
    run: RunParams = field(default_factory=RunParams)
    costs: ProfitCosts = field(default_factory=ProfitCosts)

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        if not self.stations:
            raise ParameterError("scenario needs at least one station")
        if self.s_limit > self.s_max or self.s_limit < 0:
            raise ParameterError("need 0 <= s_limit <= s_max")
        if self.shares is not None:
            sh = tuple(float(s) for s in self.shares)
            if len(sh) != len(self.stations):
                raise ParameterError("one demand share per station is required")
            if any(s < 0 for s in sh) or abs(sum(sh) - 1.0) > 1e-9:
                raise ParameterError("demand shares must be nonnegative and sum to 1")
            object.__setattr__(self, "shares", sh)
        for k in self.game.theta_stations:
            if not 0 <= k < len(self.stations):
                raise ParameterError(f"theta_stations index {k} out of range")

    @property
    def station_xy(self) -> np.ndarray:
        return np.array([c.location for c in self.stations], dtype=float)

    @property
    def baseline_slots(self) -> np.ndarray:
        return np.array([c.grid_slots for c in self.stations], dtype=int)

    def with_run(self, **changes) -> "NetworkScenario":
        return replace(self, run=replace(self.run, **changes))

    def with_thetas(self, thetas) -> "NetworkScenario":
        return replace(self, stations=tuple(replace(c, theta=float(t)) for c, t in zip(self.stations, thetas)))


# ---------------------------------------------------------------- parsing


def _mapping(value, path):
    if not isinstance(value, dict):
        raise ScenarioError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _build(cls, data, path, converters=None, required=()):
    data = _mapping(data, path)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ScenarioError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    for name in required:
        if name not in data:
            raise ScenarioError(f"{path}.{name}" if path else name, "missing required key")
    kwargs = {}
    for key, value in data.items():
        conv = (converters or {}).get(key)
        sub = f"{path}.{key}" if path else key
        try:
            kwargs[key] = conv(value, sub) if conv else value
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(sub, str(exc)) from None
    try:
        return cls(**kwargs)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from None


def _seq(n=None):
    def conv(value, path):
        if not isinstance(value, (list, tuple)):
            raise ScenarioError(path, "expected a list")
        if n is not None and len(value) != n:
            raise ScenarioError(path, f"expected {n} entries")
        return tuple(value)

    return conv


def _parse_profile(value, path):
    value = dict(_mapping(value, path))
    if value.get("table") == "default":
        value["table"] = daily_demand_table()
    return _build(DemandProfile, value, path, {"table": _seq()}, required=("kind",))


def _parse_stations(value, path, defaults):
    if not isinstance(value, list) or not value:
        raise ScenarioError(path, "expected a nonempty list of stations")
    out = []
    for k, item in enumerate(value):
        merged = dict(defaults)
        merged.update(_mapping(item, f"{path}[{k}]"))
        out.append(
            _build(StationConfig, merged, f"{path}[{k}]", {"location": _seq(2)}, required=("grid_slots", "location"))
        )
    return tuple(out)


_TOP_KEYS = {
    "schema_version",
    "name",
    "station_defaults",
    "stations",
    "topology",
    "demand",
    "game",
    "run",
    "costs",
}


def parse_scenario(data) -> NetworkScenario:
    data = _mapping(data, "")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ScenarioError(unknown[0], "unknown key")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}")
    defaults = _mapping(data.get("station_defaults", {}), "station_defaults")
    bad = sorted(set(defaults) - {f.name for f in fields(StationConfig)})
    if bad:
        raise ScenarioError(f"station_defaults.{bad[0]}", "unknown key")
    if "stations" not in data:
        raise ScenarioError("stations", "missing required key")
    stations = _parse_stations(data["stations"], "stations", defaults)

    topo = _mapping(data.get("topology", {}), "topology")
    bad = sorted(set(topo) - {"s_max", "s_limit", "allocation_time"})
    if bad:
        raise ScenarioError(f"topology.{bad[0]}", "unknown key")
    total = int(sum(c.grid_slots for c in stations))
    s_max = topo.get("s_max", total)
    s_limit = topo.get("s_limit", s_max)
    for key, val in (("s_max", s_max), ("s_limit", s_limit)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ScenarioError(f"topology.{key}", "expected a nonnegative integer")
    alloc_t = topo.get("allocation_time", 0.0)

    demand = _mapping(data.get("demand", {}), "demand")
    bad = sorted(set(demand) - {"shares", "spatial", "profile"})
    if bad:
        raise ScenarioError(f"demand.{bad[0]}", "unknown key")
    spatial = _build(
        SpatialDemand, demand.get("spatial", {}), "demand.spatial", {"beta_x": _seq(2), "beta_y": _seq(2)}
    )
    if "profile" not in demand:
        raise ScenarioError("demand.profile", "missing required key")
    profile = _parse_profile(demand["profile"], "demand.profile")
    shares = demand.get("shares")
    if shares is not None:
        shares = _seq(len(stations))(shares, "demand.shares")

    game = _build(
        GameParams,
        data.get("game", {}),
        "game",
        {
            "incentive_range": _seq(2),
            "dissatisfaction_range": _seq(2),
            "theta_grid": _seq(3),
            "theta_stations": _seq(),
        },
    )
    run = _build(RunParams, data.get("run", {}), "run")
    costs = _build(ProfitCosts, data.get("costs", {}), "costs")
    try:
        return NetworkScenario(
            name=str(data.get("name", "scenario")),
            stations=stations,
            s_max=s_max,
            s_limit=s_limit,
            allocation_time=float(alloc_t),
            spatial=spatial,
            profile=profile,
            shares=shares,
            game=game,
            run=run,
            costs=costs,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError("", str(exc)) from None


def load_scenario(path) -> NetworkScenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "document"
        raise ScenarioError(where, f"invalid YAML: {getattr(exc, 'problem', exc)}") from None
    return parse_scenario(data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def scenario_to_dict(sc: NetworkScenario) -> dict:
    return _plain(
        {
            "schema_version": SCHEMA_VERSION,
            "name": sc.name,
            "stations": [asdict(c) for c in sc.stations],
            "topology": {"s_max": sc.s_max, "s_limit": sc.s_limit, "allocation_time": sc.allocation_time},
            "demand": {
                "shares": None if sc.shares is None else list(sc.shares),
                "spatial": asdict(sc.spatial),
                "profile": asdict(sc.profile),
            },
            "game": asdict(sc.game),
            "run": asdict(sc.run),
            "costs": asdict(sc.costs),
        }
    )


def dump_scenario(sc: NetworkScenario, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text


def preset_names() -> list[str]:
    root = resources.files("evnet.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> NetworkScenario:
    if name not in preset_names():
        raise ParameterError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = resources.files("evnet.presets").joinpath(f"{name}.yaml").read_text()
    return parse_scenario(yaml.safe_load(text))
