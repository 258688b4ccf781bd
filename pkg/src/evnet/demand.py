"""Where and when charging requests appear.

Customer positions follow a two-part mixture over a square service area: a
share of the population sits in a downtown patch whose coordinates are
scaled Beta variates, the rest is spread uniformly over the whole area.
Total demand over time is a constant, a sine wave or an hourly table.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ParameterError

__all__ = [
    "SpatialDemand",
    "DemandProfile",
    "sample_location",
    "sample_locations",
    "sample_locations_in_cell",
    "nearest_station",
    "nearest_stations",
    "station_shares",
    "rate_at",
    "daily_demand_table",
]


@dataclass(frozen=True)
class SpatialDemand:
    area: float = 30.0
    hotspot_fraction: float = 0.5
    beta_x: tuple[float, float] = (4.42, 0.763)
    beta_y: tuple[float, float] = (2.42, 0.799)
    patch_scale: float = 15.0

    def __post_init__(self):
        if not self.area > 0:
            raise ParameterError("area must be positive")
        if not 0.0 <= self.hotspot_fraction <= 1.0:
            raise ParameterError("hotspot_fraction must lie in [0, 1]")
        for a, b in (self.beta_x, self.beta_y):
            if not (a > 0 and b > 0):
                raise ParameterError("Beta shape parameters must be positive")
        if not 0 < self.patch_scale <= self.area:
            raise ParameterError("patch_scale must lie in (0, area]")
        object.__setattr__(self, "beta_x", tuple(float(v) for v in self.beta_x))
        object.__setattr__(self, "beta_y", tuple(float(v) for v in self.beta_y))


def sample_locations(spatial: SpatialDemand, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` customer positions; returns an ``(size, 2)`` array."""
    hot = rng.random(size) < spatial.hotspot_fraction
    hx = spatial.patch_scale * rng.beta(*spatial.beta_x, size)
    hy = spatial.patch_scale * rng.beta(*spatial.beta_y, size)
    ux = rng.uniform(0.0, spatial.area, size)
    uy = rng.uniform(0.0, spatial.area, size)
    return np.column_stack([np.where(hot, hx, ux), np.where(hot, hy, uy)])


def sample_location(spatial: SpatialDemand, rng: np.random.Generator) -> tuple[float, float]:
    x, y = sample_locations(spatial, rng, 1)[0]
    return float(x), float(y)


def nearest_stations(points, station_xy) -> np.ndarray:
    """Index of the closest station for each point; lowest index on ties."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    st = np.asarray(station_xy, dtype=float)
    if st.size == 0:
        raise ParameterError("no stations to choose from")
    d2 = ((pts[:, None, :] - st[None, :, :]) ** 2).sum(axis=-1)
    return d2.argmin(axis=1)


def nearest_station(location, station_xy) -> int:
    return int(nearest_stations([location], station_xy)[0])


def station_shares(spatial: SpatialDemand, station_xy, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo share of customers whose nearest station is each station."""
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    idx = nearest_stations(sample_locations(spatial, rng, n_samples), station_xy)
    return np.bincount(idx, minlength=len(station_xy)) / n_samples


def sample_locations_in_cell(
    spatial: SpatialDemand,
    station_xy,
    cell: int,
    rng: np.random.Generator,
    size: int,
    max_rounds: int = 200,
) -> np.ndarray:
    """Positions drawn from the mixture conditioned on ``cell`` being nearest.

    Rejection sampling in batches. A cell the mixture essentially never
    reaches falls back to the station's own coordinates.
    """
    out = np.empty((size, 2))
    filled = 0
    batch = max(64, 4 * size)
    for _ in range(max_rounds):
        if filled == size:
            break
        pts = sample_locations(spatial, rng, batch)
        keep = pts[nearest_stations(pts, station_xy) == cell]
        take = min(len(keep), size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    if filled < size:
        out[filled:] = np.asarray(station_xy, dtype=float)[cell]
    return out


def daily_demand_table() -> list[float]:
    """Default hourly network-wide demand (vehicles per hour, hours 0-23)."""
    text = resources.files("evnet.data").joinpath("daily_demand.csv").read_text()
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    table = [float(r[1]) for r in rows[1:]]
    if len(table) != 24:
        raise ParameterError("daily demand table must have 24 hourly rows")
    return table


@dataclass(frozen=True)
class DemandProfile:
    """Network-wide arrival rate over time.

    ``kind`` is ``"constant"`` (uses ``rate``), ``"sine"``
    (``base + amplitude * sin(2 pi (t - phase) / period)``) or ``"table"``
    (piecewise constant over consecutive slots of ``slot`` time units,
    wrapping around).
    """

    kind: str = "constant"
    rate: float = 0.0
    base: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    table: tuple[float, ...] = field(default_factory=tuple)
    slot: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "sine", "table"):
            raise ParameterError(f"unknown demand profile kind {self.kind!r}")
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if self.kind == "constant" and (self.rate < 0 or not math.isfinite(self.rate)):
            raise ParameterError("constant rate must be finite and nonnegative")
        if self.kind == "sine":
            if not self.period > 0:
                raise ParameterError("sine period must be positive")
            if self.base - abs(self.amplitude) < 0:
                raise ParameterError("sine profile would go negative")
        if self.kind == "table":
            if not self.table:
                raise ParameterError("table profile needs at least one entry")
            if any(v < 0 or not math.isfinite(v) for v in self.table):
                raise ParameterError("table rates must be finite and nonnegative")
            if not self.slot > 0:
                raise ParameterError("table slot length must be positive")

    def max_rate(self) -> float:
        if self.kind == "constant":
            return self.rate
        if self.kind == "sine":
            return self.base + abs(self.amplitude)
        return max(self.table)

    def rates(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.rate)
        if self.kind == "sine":
            return self.base + self.amplitude * np.sin(2.0 * np.pi * (t - self.phase) / self.period)
        idx = np.floor(t / self.slot).astype(int) % len(self.table)
        return np.asarray(self.table)[idx]


def rate_at(profile: DemandProfile, t: float) -> float:
    return float(profile.rates(t))
