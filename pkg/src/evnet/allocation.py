"""Grid-power allocation across a network of stations.

Phase I splits the utility's power budget ``s_max`` (counted in EV charging
slots) over the stations so that the summed QoS metric is smallest, with
every station capped at ``s_limit``. Stations that hit the cap while still
wanting more leave part of the budget unused; Phase II hands that excess to
the remaining stations in inverse proportion to their squared distance
from the donor.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, ParameterError
from .station import StationConfig, loss_probability, weighted_blocking

__all__ = [
    "NetworkTopology",
    "Phase1Result",
    "Phase2Result",
    "AllocationReport",
    "station_qos",
    "phase1_allocate",
    "exhaustive_allocate",
    "compute_excess",
    "redistribution_weights",
    "largest_remainder",
    "phase2_redistribute",
    "allocate",
]


@dataclass
class NetworkTopology:
    station_configs: list[StationConfig]
    distances: np.ndarray
    s_max: int
    s_limit: int

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        n = len(self.station_configs)
        if n < 1:
            raise ParameterError("network needs at least one station")
        if self.distances.shape != (n, n):
            raise ParameterError(f"distance matrix must be {n}x{n}")
        if np.any(self.distances < 0):
            raise ParameterError("distances must be nonnegative")
        if not np.allclose(self.distances, self.distances.T, rtol=0, atol=1e-12):
            raise ParameterError("distance matrix must be symmetric")
        if np.any(np.diag(self.distances) != 0):
            raise ParameterError("distance matrix must have a zero diagonal")
        if self.s_max < 0 or self.s_limit < 0:
            raise ParameterError("s_max and s_limit must be nonnegative")
        if self.s_limit > self.s_max:
            raise ParameterError("s_limit cannot exceed s_max")

    @classmethod
    def from_locations(cls, configs, s_max, s_limit):
        xy = np.array([c.location for c in configs], dtype=float)
        d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
        return cls(list(configs), d, int(s_max), int(s_limit))

    @property
    def size(self) -> int:
        return len(self.station_configs)


def station_qos(cfg: StationConfig, slots: int, rate: float, gamma=(0.45, 0.55)) -> float:
    """QoS metric of ``cfg`` re-provisioned with ``slots`` grid slots."""
    b = loss_probability(int(slots), cfg.storage_units, float(rate), cfg.charge_rate, cfg.storage_recharge_rate)
    return weighted_blocking(b, b, *gamma)


@dataclass
class Phase1Result:
    slots: np.ndarray
    saturated: list[int]
    excess: dict[int, int]
    unclaimed: int
    objective: float
    violations: list[int] = field(default_factory=list)


def _greedy(costs, start, budget, caps, floor_stop):
    """Grant slots one at a time to the largest marginal cost decrease.

    ``costs(i, s)`` is the cost of station ``i`` holding ``s`` slots. A
    station stops receiving once its cost falls below ``floor_stop[i]``.
    Ties go to the lowest index.
    """
    slots = list(start)
    granted = 0
    while granted < budget:
        best, best_gain = None, 0.0
        for i, s in enumerate(slots):
            if caps[i] is not None and s >= caps[i]:
                continue
            current = costs(i, s)
            if current < floor_stop[i]:
                continue
            gain = current - costs(i, s + 1)
            if gain > best_gain:
                best, best_gain = i, gain
        if best is None:
            break
        slots[best] += 1
        granted += 1
    return slots, granted


def phase1_allocate(
    topology: NetworkTopology,
    arrival_rates,
    gamma=(0.45, 0.55),
    strict: bool = False,
) -> Phase1Result:
    """Greedy marginal allocation of the grid budget.

    The summed QoS metric is separable over stations and each term is
    decreasing and, for this chain, convex in the slot count, so granting
    one slot at a time to the largest decrease reaches the integer optimum.
    A station stops receiving slots once its metric is below its
    ``qos_min``. Stations held at ``s_limit`` while still above ``qos_min``
    are saturated; the slots they would have taken beyond the cap, out of
    the remaining budget, are their excess.

    Stations left above ``qos_max`` are listed in ``violations``; with
    ``strict`` an :class:`InfeasibleError` is raised instead.
    """
    rates = np.asarray(arrival_rates, dtype=float)
    cfgs = topology.station_configs
    if rates.shape != (len(cfgs),):
        raise ParameterError("one arrival rate per station is required")
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ParameterError("arrival rates must be finite and nonnegative")

    def cost(i, s):
        return station_qos(cfgs[i], s, rates[i], gamma)

    floors = [c.qos_min for c in cfgs]
    caps = [topology.s_limit] * len(cfgs)
    slots, used = _greedy(cost, [0] * len(cfgs), topology.s_max, caps, floors)

    saturated = [i for i, s in enumerate(slots) if s >= topology.s_limit and cost(i, s) >= floors[i]]
    leftover = topology.s_max - used
    excess = {i: 0 for i in saturated}
    if saturated and leftover > 0:
        sub_start = [slots[i] for i in saturated]
        extended, granted = _greedy(
            lambda k, s: cost(saturated[k], s),
            sub_start,
            leftover,
            [None] * len(saturated),
            [floors[i] for i in saturated],
        )
        excess = {i: extended[k] - sub_start[k] for k, i in enumerate(saturated)}
    unclaimed = leftover - sum(excess.values())

    vec = np.array(slots, dtype=int)
    violations = [i for i in range(len(cfgs)) if cost(i, vec[i]) > cfgs[i].qos_max]
    if strict and violations:
        raise InfeasibleError(f"stations {violations} exceed qos_max with s_limit={topology.s_limit}")
    objective = float(sum(cost(i, vec[i]) for i in range(len(cfgs))))
    return Phase1Result(vec, saturated, excess, unclaimed, objective, violations)


def exhaustive_allocate(topology: NetworkTopology, arrival_rates, gamma=(0.45, 0.55)):
    """Brute-force minimum of the summed QoS metric; for small networks only."""
    rates = np.asarray(arrival_rates, dtype=float)
    cfgs = topology.station_configs
    cap = min(topology.s_limit, topology.s_max)
    table = [[station_qos(c, s, r, gamma) for s in range(cap + 1)] for c, r in zip(cfgs, rates)]
    best, best_vec = np.inf, None
    for vec in itertools.product(range(cap + 1), repeat=len(cfgs)):
        if sum(vec) > topology.s_max:
            continue
        value = sum(table[i][s] for i, s in enumerate(vec))
        if value < best:
            best, best_vec = value, vec
    return np.array(best_vec, dtype=int), float(best)


def compute_excess(slots, s_max: int) -> int:
    excess = int(s_max) - int(np.sum(slots))
    if excess < 0:
        raise ParameterError(f"allocation of {int(np.sum(slots))} slots overruns s_max={s_max}")
    return excess


def redistribution_weights(distances_to_donor) -> np.ndarray:
    """Normalised inverse-square-distance weights of the recipients.

    Recipients sitting at the donor's location share the weight equally
    among themselves.
    """
    d = np.asarray(distances_to_donor, dtype=float)
    if d.size == 0:
        return d
    zero = d == 0
    if zero.any():
        return zero / zero.sum()
    w = 1.0 / d**2
    return w / w.sum()


def largest_remainder(total: int, weights, priority=None) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights``, summing exactly.

    Leftover units go to the largest fractional parts; ties prefer larger
    ``priority`` (defaults to the weight) and then the lower index.
    """
    w = np.asarray(weights, dtype=float)
    quotas = total * w
    base = np.floor(quotas + 1e-12).astype(int)
    rest = total - int(base.sum())
    frac = quotas - base
    prio = w if priority is None else np.asarray(priority, dtype=float)
    order = sorted(range(len(w)), key=lambda k: (-round(frac[k], 12), -prio[k], k))
    for k in order[:rest]:
        base[k] += 1
    return base


@dataclass
class Phase2Result:
    slots: np.ndarray
    grants: dict[int, dict[int, int]]
    undistributed: int


def phase2_redistribute(topology: NetworkTopology, slots, saturated, excess) -> Phase2Result:
    """Hand each saturated station's excess to the unsaturated ones.

    Donors are processed in descending order of excess. Each donor's excess
    is split over all unsaturated stations by inverse squared distance and
    integerised by largest remainder; grants beyond a recipient's headroom
    under ``s_limit`` are re-offered to the nearest recipients that still
    have room. Whatever cannot be placed is reported as undistributed.
    """
    out = np.array(slots, dtype=int).copy()
    sat = set(saturated)
    recipients = [k for k in range(topology.size) if k not in sat]
    grants: dict[int, dict[int, int]] = {}
    undistributed = 0
    donors = sorted(excess, key=lambda j: (-excess[j], j))
    for j in donors:
        amount = int(excess[j])
        if amount < 0:
            raise ParameterError(f"negative excess at station {j}")
        given: dict[int, int] = {}
        if amount == 0:
            grants[j] = given
            continue
        if not recipients:
            undistributed += amount
            grants[j] = given
            continue
        d = topology.distances[recipients, j]
        w = redistribution_weights(d)
        split = largest_remainder(amount, w)
        residual = 0
        for k, units in zip(recipients, split):
            room = topology.s_limit - out[k]
            take = int(min(units, max(room, 0)))
            out[k] += take
            residual += units - take
            if take:
                given[k] = given.get(k, 0) + take
        for k in sorted(recipients, key=lambda k: (topology.distances[k, j], k)):
            if residual == 0:
                break
            take = int(min(residual, max(topology.s_limit - out[k], 0)))
            if take:
                out[k] += take
                residual -= take
                given[k] = given.get(k, 0) + take
        undistributed += residual
        grants[j] = given
    return Phase2Result(out, grants, undistributed)


@dataclass
class AllocationReport:
    rates: np.ndarray
    phase1: Phase1Result
    phase2: Phase2Result

    @property
    def slots(self) -> np.ndarray:
        return self.phase2.slots

    @property
    def excess_total(self) -> int:
        return sum(self.phase1.excess.values())


def allocate(topology: NetworkTopology, arrival_rates, gamma=(0.45, 0.55), strict: bool = False):
    """Run Phase I then Phase II."""
    p1 = phase1_allocate(topology, arrival_rates, gamma, strict=strict)
    p2 = phase2_redistribute(topology, p1.slots, p1.saturated, p1.excess)
    if int(p2.slots.sum()) > topology.s_max:
        raise AssertionError("allocation overran the grid budget")
    return AllocationReport(np.asarray(arrival_rates, dtype=float), p1, p2)
