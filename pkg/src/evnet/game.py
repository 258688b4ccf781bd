"""Leader-follower routing game between the network operator and drivers.

The operator (leader) commits to a price vector through the congestion
pricing of each station. Each driver (follower) then ranks stations by a
cost that combines price, a quadratic driving cost and a linear penalty for
extra distance, inflated by how badly the station is missing its QoS
target. A driver only leaves its nearest station when the saving beats a
personal threshold and the alternative is itself within QoS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError

__all__ = [
    "EvCustomer",
    "Choice",
    "GameOutcome",
    "NetworkView",
    "StepResult",
    "station_distances",
    "station_costs",
    "ev_utility",
    "ev_choose",
    "leader_payoff",
    "decentralized_control_step",
    "tune_theta",
]


@dataclass
class EvCustomer:
    location: tuple[float, float]
    incentive_threshold: float
    dissatisfaction_rate: float
    drive_cost_rate: float = 0.03
    urgency: float = 0.0
    decision: int | None = None

    def __post_init__(self):
        if self.incentive_threshold < 0:
            raise ParameterError("incentive_threshold must be nonnegative")
        if self.dissatisfaction_rate < 0 or self.drive_cost_rate < 0:
            raise ParameterError("distance cost rates must be nonnegative")
        if self.urgency < 0:
            raise ParameterError("urgency must be nonnegative")


def station_distances(location, station_xy) -> np.ndarray:
    st = np.asarray(station_xy, dtype=float)
    return np.hypot(st[:, 0] - location[0], st[:, 1] - location[1])


def station_costs(customer: EvCustomer, prices, distances, reference: int | None = None) -> np.ndarray:
    """Money cost of charging at each station.

    The extra-distance penalty is measured against ``reference`` (the
    nearest station unless given).
    """
    p = np.asarray(prices, dtype=float)
    d = np.asarray(distances, dtype=float)
    if p.shape != d.shape:
        raise ParameterError("price and distance vectors differ in length")
    d_ref = d.min() if reference is None else d[reference]
    return p + customer.drive_cost_rate * d**2 + customer.dissatisfaction_rate * (d - d_ref)


def ev_utility(
    customer: EvCustomer,
    p_bt,
    prices,
    distances,
    qos_target,
    urgency: float | None = None,
    reference: int | None = None,
) -> np.ndarray:
    """Per-station disutility; lower is better.

    The money cost is scaled by ``exp(urgency * (p_bt - qos_target))`` so
    stations missing their QoS target look worse to an urgent driver.
    """
    q = np.asarray(p_bt, dtype=float)
    costs = station_costs(customer, prices, distances, reference)
    if q.shape != costs.shape:
        raise ParameterError("blocking vector length does not match prices")
    xi = customer.urgency if urgency is None else urgency
    return np.exp(xi * (q - np.asarray(qos_target, dtype=float))) * costs


@dataclass(frozen=True)
class Choice:
    station: int
    routed: bool
    candidate: int
    savings: float


def ev_choose(customer: EvCustomer, utilities, costs, p_bt, qos_max, nearest: int) -> Choice:
    """Accept or reject being routed away from ``nearest``.

    The candidate is the utility minimiser (the nearest station if it is
    among the minimisers, else the lowest index). Routing is accepted only
    when the money saved reaches the customer's incentive threshold and the
    candidate meets its QoS target; otherwise the customer stays with the
    nearest station.
    """
    u = np.asarray(utilities, dtype=float)
    c = np.asarray(costs, dtype=float)
    best = u.min()
    candidate = nearest if u[nearest] <= best else int(np.flatnonzero(u == best)[0])
    savings = float(c[nearest] - c[candidate])
    if candidate == nearest:
        return Choice(nearest, False, candidate, 0.0)
    qmax = np.broadcast_to(np.asarray(qos_max, dtype=float), u.shape)
    accept = savings >= customer.incentive_threshold and p_bt[candidate] <= qmax[candidate]
    if accept:
        customer.decision = candidate
        return Choice(candidate, True, candidate, savings)
    customer.decision = nearest
    return Choice(nearest, False, candidate, savings)


@dataclass
class GameOutcome:
    """Running record of the leader's served and blocked customers."""

    n_stations: int
    p_block: float | np.ndarray = 5.0
    choices: list[int] = field(default_factory=list)
    served: list[bool] = field(default_factory=list)
    blocked: list[bool] = field(default_factory=list)
    prices: list[float] = field(default_factory=list)

    def record(self, station: int, price: float, admitted: bool):
        self.choices.append(station)
        self.prices.append(price)
        self.served.append(bool(admitted))
        self.blocked.append(not admitted)

    def record_balk(self):
        self.choices.append(-1)
        self.prices.append(0.0)
        self.served.append(False)
        self.blocked.append(False)

    def _per_station(self, flags):
        out = np.zeros(self.n_stations, dtype=int)
        for ch, f in zip(self.choices, flags):
            if f:
                out[ch] += 1
        return out

    @property
    def served_by_station(self) -> np.ndarray:
        return self._per_station(self.served)

    @property
    def blocked_by_station(self) -> np.ndarray:
        return self._per_station(self.blocked)

    @property
    def revenue(self) -> float:
        return leader_payoff(self)


def leader_payoff(outcome: GameOutcome, prices=None, p_block=None) -> float:
    """Prices collected from served customers minus the blocking penalties.

    ``prices`` optionally gives a per-station price vector to bill served
    customers with instead of the prices they were quoted.
    """
    pen = outcome.p_block if p_block is None else p_block
    pen = np.broadcast_to(np.asarray(pen, dtype=float), (outcome.n_stations,))
    total = 0.0
    for ch, paid, s, b in zip(outcome.choices, outcome.prices, outcome.served, outcome.blocked):
        if s:
            total += paid if prices is None else float(prices[ch])
        elif b:
            total -= float(pen[ch])
    return total


@dataclass
class NetworkView:
    """What the leader publishes to drivers at a given moment."""

    station_xy: np.ndarray
    prices: np.ndarray
    congested: np.ndarray
    acceptance: np.ndarray
    p_bt: np.ndarray
    qos_max: np.ndarray
    p_block: np.ndarray

    @classmethod
    def idle(cls, configs):
        n = len(configs)
        return cls(
            station_xy=np.array([c.location for c in configs], dtype=float),
            prices=np.array([c.price_normal for c in configs], dtype=float),
            congested=np.zeros(n, dtype=bool),
            acceptance=np.ones(n),
            p_bt=np.zeros(n),
            qos_max=np.array([c.qos_max for c in configs], dtype=float),
            p_block=np.array([c.price_block_penalty for c in configs], dtype=float),
        )


@dataclass(frozen=True)
class StepResult:
    station: int | None
    price: float
    admitted: bool
    routed: bool
    balked: bool
    accepted_price: bool


def decentralized_control_step(
    customer: EvCustomer,
    view: NetworkView,
    admit: Callable[[int, bool], bool],
    accept_draw: float,
    outcome: GameOutcome | None = None,
    home: int | None = None,
) -> StepResult:
    """Serve one customer under the leader's current prices.

    ``home`` is the station whose pricing block the customer enters (its
    nearest station, or the station that blocked it on a retry). At a
    congested home station ``accept_draw`` is compared with the acceptance
    fraction; customers who decline the congestion price look for a cheaper
    station and leave when none clears their incentive threshold.
    ``admit(station, routed)`` attempts admission and reports success.
    """
    d = station_distances(customer.location, view.station_xy)
    if home is None:
        home = int(np.argmin(d))
    accepted = not view.congested[home] or accept_draw < view.acceptance[home]
    if view.congested[home] and accepted:
        target, routed = home, False
    else:
        costs = station_costs(customer, view.prices, d, reference=home)
        xi = customer.urgency if view.congested[home] else 0.0
        util = np.exp(xi * (view.p_bt - view.qos_max)) * costs
        choice = ev_choose(customer, util, costs, view.p_bt, view.qos_max, home)
        if choice.routed:
            target, routed = choice.station, True
        elif accepted:
            target, routed = home, False
        else:
            if outcome is not None:
                outcome.record_balk()
            return StepResult(None, 0.0, False, False, True, False)
    price = float(view.prices[target])
    admitted = bool(admit(target, routed))
    if outcome is not None:
        outcome.record(target, price, admitted)
    return StepResult(target, price, admitted, routed, False, accepted and not routed)


def tune_theta(scenario, grid=None, stations=None, mode="payoff", **run_kwargs):
    """Grid search of the congestion-pricing parameter; see ``sim.theta_sweep``."""
    from .sim import theta_sweep

    return theta_sweep(scenario, grid=grid, stations=stations, mode=mode, **run_kwargs)
