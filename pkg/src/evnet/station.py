"""Single charging station with local energy storage.

A station draws a constant amount of grid power, enough to charge ``S``
vehicles at once, and keeps a local store holding up to ``R`` full EV
charges. Arriving vehicles use a free grid slot first; once the grid is
saturated a stored unit is committed to the vehicle at admission. The
store recharges one unit at a time, only while a grid slot is idle.

The resulting continuous-time Markov chain has states ``(n, j)`` where
``n`` is the number of vehicles in service and ``j`` the number of charged
storage units. For ``R = 0`` it reduces to the Erlang loss system.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InfeasibleError, ParameterError, SingularChainError

__all__ = [
    "StationConfig",
    "MarkovModel",
    "build_generator",
    "stationary_distribution",
    "blocking_probability",
    "loss_probability",
    "erlang_b",
    "weighted_blocking",
    "max_admissible_rate",
    "RATE_CAP_DOUBLINGS",
]

# max_admissible_rate stops doubling its upper bracket after this many steps
# and returns the bracket itself; this is the cap reported when the QoS
# target never binds.
RATE_CAP_DOUBLINGS = 30


@dataclass(frozen=True)
class StationConfig:
    """Physical and economic parameters of one station."""

    grid_slots: int
    storage_units: int
    charge_rate: float = 2.0
    storage_recharge_rate: float = 4.0
    qos_max: float = 0.05
    qos_min: float = 1e-4
    price_normal: float = 4.0
    price_block_penalty: float = 5.0
    theta: float = 0.5
    location: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.grid_slots) != self.grid_slots or self.grid_slots < 0:
            raise ParameterError(f"grid_slots must be a nonnegative integer, got {self.grid_slots}")
        if int(self.storage_units) != self.storage_units or self.storage_units < 0:
            raise ParameterError(
                f"storage_units must be a nonnegative integer, got {self.storage_units}"
            )
        if not self.charge_rate > 0:
            raise ParameterError(f"charge_rate must be positive, got {self.charge_rate}")
        if not self.storage_recharge_rate > 0:
            raise ParameterError(
                f"storage_recharge_rate must be positive, got {self.storage_recharge_rate}"
            )
        if not 0 < self.qos_min <= self.qos_max < 1:
            raise ParameterError(
                f"need 0 < qos_min <= qos_max < 1, got {self.qos_min}, {self.qos_max}"
            )
        if not self.price_block_penalty > self.price_normal:
            raise ParameterError("price_block_penalty must exceed price_normal")
        if self.theta < 0:
            raise ParameterError(f"theta must be nonnegative, got {self.theta}")
        object.__setattr__(self, "grid_slots", int(self.grid_slots))
        object.__setattr__(self, "storage_units", int(self.storage_units))
        object.__setattr__(self, "location", tuple(float(c) for c in self.location))


@dataclass
class MarkovModel:
    """Finite CTMC of one station at a fixed arrival rate."""

    grid_slots: int
    storage_units: int
    states: np.ndarray
    generator: np.ndarray
    stationary: np.ndarray | None = None
    blocking_prob: float | None = None
    index: dict = field(default_factory=dict, repr=False)

    @property
    def blocking_mask(self) -> np.ndarray:
        n, j = self.states[:, 0], self.states[:, 1]
        return (n >= self.grid_slots) & (j == 0)


def _transitions(n, j, S, R):
    """Yield ``(target, kind)`` pairs out of state ``(n, j)``."""
    if n < S:
        yield (n + 1, j), "arrival"
    elif j > 0:
        yield (n + 1, j - 1), "arrival"
    if n > 0:
        yield (n - 1, j), "departure"
    if j < R and n < S:
        yield (n, j + 1), "recharge"


@lru_cache(maxsize=512)
def _structure(S: int, R: int):
    """Reachable states and typed edge lists for an ``(S, R)`` station."""
    start = (0, R)
    index = {start: 0}
    order = [start]
    queue = deque([start])
    edges = {"arrival": ([], []), "departure": ([], []), "recharge": ([], [])}
    while queue:
        state = queue.popleft()
        for target, kind in _transitions(*state, S, R):
            if target not in index:
                index[target] = len(order)
                order.append(target)
                queue.append(target)
            edges[kind][0].append(index[state])
            edges[kind][1].append(index[target])
    states = np.array(order, dtype=np.int64)
    typed = {k: (np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)) for k, (a, b) in edges.items()}
    return states, index, typed


def _check_rate(arrival_rate):
    if not (isinstance(arrival_rate, (int, float, np.floating)) and math.isfinite(arrival_rate)):
        raise ParameterError(f"arrival rate must be a finite number, got {arrival_rate!r}")
    if arrival_rate <= 0:
        raise ParameterError(f"arrival rate must be positive, got {arrival_rate}")


def _generator(S, R, lam, mu, nu):
    states, index, edges = _structure(S, R)
    m = len(states)
    Q = np.zeros((m, m))
    src, dst = edges["arrival"]
    Q[src, dst] += lam
    src, dst = edges["departure"]
    Q[src, dst] += states[src, 0] * mu
    src, dst = edges["recharge"]
    Q[src, dst] += nu
    Q[np.diag_indices(m)] = -Q.sum(axis=1)
    return states, index, Q


def build_generator(cfg: StationConfig, arrival_rate: float) -> MarkovModel:
    """Enumerate the reachable states of ``cfg`` and assemble the rate matrix.

    States are discovered by breadth-first search from the empty station
    with a full store, ``(0, R)``.
    """
    _check_rate(arrival_rate)
    if cfg.grid_slots == 0 and cfg.storage_units > 0:
        warnings.warn(
            "station has no grid slots: storage can never recharge once drained",
            RuntimeWarning,
            stacklevel=2,
        )
    states, index, Q = _generator(
        cfg.grid_slots, cfg.storage_units, float(arrival_rate), cfg.charge_rate, cfg.storage_recharge_rate
    )
    return MarkovModel(cfg.grid_slots, cfg.storage_units, states, Q, index=index)


def _solve_stationary(Q):
    m = Q.shape[0]
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularChainError("balance equations are singular") from exc
    if not np.all(np.isfinite(pi)):
        raise SingularChainError("stationary solve produced non-finite values")
    # round-off can leave tiny negatives on near-empty states
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(model: MarkovModel) -> np.ndarray:
    """Solve ``pi Q = 0, sum(pi) = 1`` by a dense direct solve.

    The last balance equation is replaced by the normalisation row. The
    result is also stored on ``model``.
    """
    pi = _solve_stationary(model.generator)
    model.stationary = pi
    model.blocking_prob = float(pi[model.blocking_mask].sum())
    return pi


@lru_cache(maxsize=65536)
def loss_probability(S: int, R: int, lam: float, mu: float, nu: float) -> float:
    """Blocking probability of an ``(S, R)`` station; cached numeric core.

    Zero arrival rate gives zero blocking. With no grid slots and no
    storage every arrival is lost.
    """
    if lam <= 0:
        return 0.0
    if S == 0 and R == 0:
        return 1.0
    states, _, Q = _generator(S, R, lam, mu, nu)
    pi = _solve_stationary(Q)
    mask = (states[:, 0] >= S) & (states[:, 1] == 0)
    return float(pi[mask].sum())


def blocking_probability(cfg: StationConfig, arrival_rate: float) -> float:
    """Long-run fraction of Poisson arrivals that find the station full."""
    _check_rate(arrival_rate)
    return loss_probability(
        cfg.grid_slots, cfg.storage_units, float(arrival_rate), cfg.charge_rate, cfg.storage_recharge_rate
    )


def erlang_b(servers: int, load: float) -> float:
    """Erlang-B blocking by the standard stable recursion."""
    b = 1.0
    for k in range(1, servers + 1):
        b = load * b / (k + load * b)
    return b


def weighted_blocking(b_ev: float, b_rb: float, gamma1: float = 0.45, gamma2: float = 0.55) -> float:
    """Combine local and routed-customer blocking into one QoS figure.

    Blocking a routed customer is weighted more heavily, so ``gamma2`` must
    exceed ``gamma1``; the two weights sum to one.
    """
    if abs(gamma1 + gamma2 - 1.0) > 1e-9:
        raise ParameterError(f"blocking weights must sum to 1, got {gamma1} + {gamma2}")
    if not gamma2 > gamma1 or gamma1 < 0:
        raise ParameterError("need 0 <= gamma1 < gamma2")
    return gamma1 * b_ev + gamma2 * b_rb


def max_admissible_rate(
    cfg: StationConfig,
    qos_max: float | None = None,
    gamma: tuple[float, float] = (0.45, 0.55),
    tol: float = 1e-3,
) -> float:
    """Largest arrival rate whose weighted blocking stays within ``qos_max``.

    Both blocking classes see the same analytic blocking here, since the
    chain does not tell local and routed customers apart. The upper bracket
    starts at ``(S + R) * mu`` and doubles until the target is violated; if
    that never happens within ``RATE_CAP_DOUBLINGS`` doublings, the bracket
    is returned as a cap. Bisection then narrows to ``tol`` and returns the
    feasible end.

    Raises
    ------
    InfeasibleError
        If the target is violated even for vanishing arrival rates.
    """
    target = cfg.qos_max if qos_max is None else qos_max
    g1, g2 = gamma

    def p_bt(lam):
        b = blocking_probability(cfg, lam)
        return weighted_blocking(b, b, g1, g2)

    hi = max(cfg.grid_slots + cfg.storage_units, 1) * cfg.charge_rate
    if target >= 1.0:
        return hi * 2.0**RATE_CAP_DOUBLINGS
    lo = tol * 1e-3
    if p_bt(lo) > target:
        raise InfeasibleError(
            f"QoS target {target} unattainable even at vanishing load "
            f"(S={cfg.grid_slots}, R={cfg.storage_units})"
        )
    for _ in range(RATE_CAP_DOUBLINGS):
        if p_bt(hi) > target:
            break
        lo = hi
        hi *= 2.0
    else:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p_bt(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo
