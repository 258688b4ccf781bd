"""Discrete-event simulation of a charging network over a day.

Each replication draws one stream of customers (arrival time, home
station, position, personal cost parameters and a charging duration) that
does not depend on the control tier, so tiers compared with the same seed
see exactly the same demand. Rates are re-estimated at the end of every
accounting window and the prices quoted during the next window follow from
them.

Tiers:

``baseline``
    every customer goes to the nearest station with the scenario's slots;
``allocation_only``
    the same, with slots re-allocated by the two-phase procedure;
``full_control``
    allocation plus congestion pricing, routing and retries.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .allocation import AllocationReport, NetworkTopology, allocate
from .demand import nearest_stations, sample_locations, sample_locations_in_cell, station_shares
from .errors import ParameterError
from .game import EvCustomer, NetworkView, decentralized_control_step
from .pricing import acceptance_at_price, congestion_price
from .scenario import NetworkScenario, normalize_tier
from .station import loss_probability, max_admissible_rate, weighted_blocking

__all__ = [
    "METRICS_SCHEMA_VERSION",
    "COUNT_FIELDS",
    "VALUE_FIELDS",
    "CUSTOMER_FIELDS",
    "SimMetrics",
    "TierComparison",
    "ThetaSweep",
    "scenario_shares",
    "tier_allocation",
    "admissible_rates",
    "run_simulation",
    "weighted_network_blocking",
    "network_weighted_blocking",
    "compare_tiers",
    "theta_sweep",
    "metrics_csv",
    "metrics_summary",
]

METRICS_SCHEMA_VERSION = 1

# event kinds, in the order they are processed at equal timestamps
DEPARTURE, RECHARGE, TICK, RETRY, ARRIVAL = range(5)

COUNT_FIELDS = (
    "entries",  # pricing-block inflow: new local requests plus retries
    "arrivals_new",
    "retries_bl",
    "retries_rb",
    "accepted",  # went on to the home station
    "routed_out",
    "routed_in",
    "balked",
    "attempts_local",
    "attempts_routed",
    "served_local",
    "served_routed",
    "blocked_local",
    "blocked_routed",
)
VALUE_FIELDS = ("revenue", "price", "lam_tilde", "congested", "p_bt_est")
# final outcome of each customer, by the window and station of first arrival
CUSTOMER_FIELDS = ("cust_arrivals", "cust_served", "cust_blocked", "cust_balked")

_SERVED, _BLOCKED, _BALKED = 1, 2, 3


def scenario_shares(scenario: NetworkScenario, n_samples: int = 200_000) -> np.ndarray:
    """Demand share of each station: as given, or estimated from the spatial model."""
    if scenario.shares is not None:
        return np.asarray(scenario.shares, dtype=float)
    rng = np.random.default_rng(0)
    return station_shares(scenario.spatial, scenario.station_xy, n_samples, rng)


def tier_allocation(scenario: NetworkScenario, tier: str) -> tuple[np.ndarray, AllocationReport | None]:
    """Grid slots each station runs with under ``tier``."""
    tier = normalize_tier(tier)
    if tier == "baseline":
        return scenario.baseline_slots, None
    topo = NetworkTopology.from_locations(scenario.stations, scenario.s_max, scenario.s_limit)
    lam = float(scenario.profile.rates(scenario.allocation_time)) * scenario_shares(scenario)
    report = allocate(topo, lam, (scenario.game.gamma1, scenario.game.gamma2))
    return report.slots.copy(), report


def _configs(scenario, slots):
    return [replace(c, grid_slots=int(s)) for c, s in zip(scenario.stations, slots)]


def admissible_rates(configs, gamma=(0.45, 0.55)) -> np.ndarray:
    return np.array([max_admissible_rate(c, gamma=gamma) for c in configs])


@dataclass
class _Station:
    S: int
    R: int
    mu: float
    nu: float
    n: int = 0
    j: int = 0
    recharge_version: int = 0
    recharge_pending: bool = False


@dataclass
class _Customers:
    time: np.ndarray
    home: np.ndarray
    xy: np.ndarray
    incentive: np.ndarray
    dissatisfaction: np.ndarray
    accept_u: np.ndarray
    service: np.ndarray
    retry_u: np.ndarray
    retry_delay: np.ndarray

    def __len__(self):
        return len(self.time)


def _draw_customers(scenario: NetworkScenario, rng, start, horizon, shares) -> _Customers:
    """Nonhomogeneous Poisson arrivals by thinning, with marks."""
    prof = scenario.profile
    lam_max = prof.max_rate()
    n_cand = rng.poisson(lam_max * horizon) if lam_max > 0 else 0
    t = np.sort(rng.uniform(start, start + horizon, n_cand))
    keep = rng.random(n_cand) * lam_max < prof.rates(t)
    t = t[keep]
    m = len(t)
    xy_st = scenario.station_xy
    n_st = len(xy_st)
    if scenario.shares is not None:
        home = rng.choice(n_st, size=m, p=shares) if m else np.zeros(0, dtype=int)
        xy = np.zeros((m, 2))
        for k in range(n_st):
            idx = np.flatnonzero(home == k)
            if len(idx):
                xy[idx] = sample_locations_in_cell(scenario.spatial, xy_st, k, rng, len(idx))
    else:
        xy = sample_locations(scenario.spatial, rng, m)
        home = nearest_stations(xy, xy_st) if m else np.zeros(0, dtype=int)
    g = scenario.game
    return _Customers(
        time=t,
        home=np.asarray(home, dtype=int),
        xy=xy,
        incentive=rng.uniform(*g.incentive_range, m),
        dissatisfaction=rng.uniform(*g.dissatisfaction_range, m),
        accept_u=rng.random(m),
        service=rng.exponential(1.0, m),
        retry_u=rng.random(m),
        retry_delay=rng.exponential(g.retry_delay_mean, m),
    )


def _simulate_once(scenario, tier, configs, lam_star, cust, rng_recharge, rng_aux, start, horizon, window, monitor=None):
    run_end = start + horizon
    n_st = len(configs)
    n_win = int(math.ceil(horizon / window - 1e-9))
    counts = {k: np.zeros((n_win, n_st), dtype=np.int64) for k in COUNT_FIELDS + CUSTOMER_FIELDS}
    values = {k: np.zeros((n_win, n_st)) for k in VALUE_FIELDS}
    routed = np.zeros((n_st, n_st), dtype=np.int64)
    outcome = np.zeros(len(cust), dtype=np.int8)
    control = tier == "full_control"
    g = scenario.game
    gamma = (g.gamma1, g.gamma2)
    stations = [
        _Station(c.grid_slots, c.storage_units, c.charge_rate, c.storage_recharge_rate, j=c.storage_units)
        for c in configs
    ]
    view = NetworkView.idle(configs)
    p_normal = view.prices.copy()
    thetas = np.array([c.theta for c in configs])
    heap: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, kind, seq, payload))
        seq += 1

    def win(t):
        return min(int((t - start) / window), n_win - 1)

    def sync_recharge(i, t):
        st = stations[i]
        active = st.j < st.R and st.n < st.S
        if active and not st.recharge_pending:
            st.recharge_pending = True
            st.recharge_version += 1
            push(t + rng_recharge.exponential(1.0 / st.nu), RECHARGE, (i, st.recharge_version))
        elif not active and st.recharge_pending:
            st.recharge_pending = False
            st.recharge_version += 1

    def admit(i, t, service):
        st = stations[i]
        if monitor is not None:
            monitor("arrival", t, i, st.n, st.j)
        if st.n < st.S:
            st.n += 1
        elif st.j > 0:
            st.n += 1
            st.j -= 1
        else:
            return False
        push(t + service / st.mu, DEPARTURE, i)
        sync_recharge(i, t)
        if monitor is not None:
            monitor("state", t, i, st.n, st.j)
        return True

    def attempt(k, i, is_routed, t, price):
        w = win(t)
        suffix = "routed" if is_routed else "local"
        counts[f"attempts_{suffix}"][w, i] += 1
        ok = admit(i, t, cust.service[k])
        if ok:
            counts[f"served_{suffix}"][w, i] += 1
            values["revenue"][w, i] += price
            outcome[k] = _SERVED
        else:
            counts[f"blocked_{suffix}"][w, i] += 1
            values["revenue"][w, i] -= configs[i].price_block_penalty
            outcome[k] = _BLOCKED
        return ok

    def enter(k, i, t, retry_kind, accept_u):
        """Customer ``k`` reaches the pricing block of station ``i``."""
        w = win(t)
        counts["entries"][w, i] += 1
        if retry_kind is None:
            counts["arrivals_new"][w, i] += 1
        else:
            counts[retry_kind][w, i] += 1
        if not control:
            counts["accepted"][w, i] += 1
            attempt(k, i, False, t, p_normal[i])
            return
        customer = EvCustomer(
            (cust.xy[k, 0], cust.xy[k, 1]),
            cust.incentive[k],
            cust.dissatisfaction[k],
            g.drive_cost_rate,
            g.urgency,
        )
        result = decentralized_control_step(
            customer,
            view,
            lambda target, is_routed: attempt(k, target, is_routed, t, float(view.prices[target])),
            accept_u,
            home=i,
        )
        if result.balked:
            counts["balked"][w, i] += 1
            outcome[k] = _BALKED
            return
        if result.routed:
            counts["routed_out"][w, i] += 1
            counts["routed_in"][w, result.station] += 1
            routed[i, result.station] += 1
        else:
            counts["accepted"][w, i] += 1
        if not result.admitted and cust.retry_u[k] < g.retry_fraction:
            kind = "retries_rb" if result.routed else "retries_bl"
            delay = cust.retry_delay[k] if retry_kind is None else rng_aux.exponential(g.retry_delay_mean)
            push(t + delay, RETRY, (k, result.station, kind))

    def tick(w_done, t):
        """Close window ``w_done`` and set the prices for the next one."""
        lam_tilde = counts["entries"][w_done] / window
        load = (counts["attempts_local"][w_done] + counts["attempts_routed"][w_done]) / window
        values["lam_tilde"][w_done] = lam_tilde
        if not control:
            return
        for i, c in enumerate(configs):
            sig = congestion_price(lam_tilde[i], lam_star[i], c.price_normal, thetas[i], i)
            view.prices[i] = sig.price
            view.congested[i] = sig.congested
            view.acceptance[i] = acceptance_at_price(sig.price, c.price_normal, thetas[i]) if sig.congested else 1.0
            if g.blocking_estimator == "analytic":
                b = loss_probability(c.grid_slots, c.storage_units, float(load[i]), c.charge_rate, c.storage_recharge_rate)
                view.p_bt[i] = weighted_blocking(b, b, *gamma)
            else:
                att_l = counts["attempts_local"][w_done, i]
                att_r = counts["attempts_routed"][w_done, i]
                b_ev = counts["blocked_local"][w_done, i] / att_l if att_l else 0.0
                b_rb = counts["blocked_routed"][w_done, i] / att_r if att_r else b_ev
                view.p_bt[i] = weighted_blocking(b_ev, b_rb, *gamma)

    def record_view(w):
        values["price"][w] = view.prices
        values["congested"][w] = view.congested
        values["p_bt_est"][w] = view.p_bt

    record_view(0)
    if n_win > 1:
        push(start + window, TICK, 1)
    next_arrival = 0
    n_cust = len(cust)
    while True:
        t_arr = cust.time[next_arrival] if next_arrival < n_cust else math.inf
        if heap and heap[0][0] <= t_arr:
            t, kind, _, payload = heapq.heappop(heap)
            if t >= run_end:
                break
            if kind == DEPARTURE:
                st = stations[payload]
                st.n -= 1
                sync_recharge(payload, t)
                if monitor is not None:
                    monitor("state", t, payload, st.n, st.j)
            elif kind == RECHARGE:
                i, version = payload
                st = stations[i]
                if version == st.recharge_version and st.recharge_pending:
                    st.j += 1
                    st.recharge_pending = False
                    sync_recharge(i, t)
                    if monitor is not None:
                        monitor("state", t, i, st.n, st.j)
            elif kind == TICK:
                tick(payload - 1, t)
                record_view(payload)
                if payload + 1 < n_win:
                    push(start + (payload + 1) * window, TICK, payload + 1)
            elif kind == RETRY:
                k, i, rkind = payload
                enter(k, i, t, rkind, rng_aux.random())
        elif t_arr < math.inf:
            k = next_arrival
            next_arrival += 1
            enter(k, int(cust.home[k]), t_arr, None, cust.accept_u[k])
        else:
            break
    tick(n_win - 1, run_end)

    for k in range(n_cust):
        w, i = win(cust.time[k]), cust.home[k]
        counts["cust_arrivals"][w, i] += 1
        if outcome[k] == _SERVED:
            counts["cust_served"][w, i] += 1
        elif outcome[k] == _BLOCKED:
            counts["cust_blocked"][w, i] += 1
        else:
            counts["cust_balked"][w, i] += 1
    return counts, values, routed


@dataclass
class SimMetrics:
    """Per-window, per-station results of all replications.

    ``data[name]`` has shape ``(replications, windows, stations)``.
    """

    scenario: str
    tier: str
    seed: int
    start: float
    window: float
    slots: np.ndarray
    lam_star: np.ndarray
    data: dict[str, np.ndarray]
    routed: np.ndarray
    allocation: AllocationReport | None = field(default=None, repr=False)

    @property
    def replications(self) -> int:
        return self.routed.shape[0]

    @property
    def n_windows(self) -> int:
        return self.data["entries"].shape[1]

    @property
    def n_stations(self) -> int:
        return self.routed.shape[1]

    def window_starts(self) -> np.ndarray:
        return self.start + self.window * np.arange(self.n_windows)

    def window_slice(self, t0: float | None = None, t1: float | None = None) -> slice:
        """Windows lying in ``[t0, t1)``."""
        a = 0 if t0 is None else int(math.ceil((t0 - self.start) / self.window - 1e-9))
        b = self.n_windows if t1 is None else int(math.floor((t1 - self.start) / self.window + 1e-9))
        return slice(max(a, 0), min(max(b, 0), self.n_windows))

    def totals(self, name: str, t0=None, t1=None) -> np.ndarray:
        """Per-replication, per-station sum over the windows in ``[t0, t1)``."""
        return self.data[name][:, self.window_slice(t0, t1)].sum(axis=1)

    def mean(self, name: str) -> np.ndarray:
        return self.data[name].mean(axis=0)

    def sd(self, name: str) -> np.ndarray:
        if self.replications < 2:
            return np.zeros(self.data[name].shape[1:])
        return self.data[name].std(axis=0, ddof=1)

    def blocking(self, t0=None, t1=None, pooled: bool = True) -> np.ndarray:
        """Blocked share of admission attempts per station; NaN without attempts."""
        att = self.totals("attempts_local", t0, t1) + self.totals("attempts_routed", t0, t1)
        blk = self.totals("blocked_local", t0, t1) + self.totals("blocked_routed", t0, t1)
        if pooled:
            att, blk = att.sum(axis=0), blk.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(att > 0, blk / np.maximum(att, 1), np.nan)

    def p_bt(self, gamma=(0.45, 0.55), t0=None, t1=None, pooled: bool = True) -> np.ndarray:
        """Weighted local/routed blocking; a class with no attempts borrows the other's figure."""
        parts = []
        for kind in ("local", "routed"):
            att = self.totals(f"attempts_{kind}", t0, t1)
            blk = self.totals(f"blocked_{kind}", t0, t1)
            if pooled:
                att, blk = att.sum(axis=0), blk.sum(axis=0)
            parts.append((att, blk))
        (a_l, b_l), (a_r, b_r) = parts
        with np.errstate(invalid="ignore", divide="ignore"):
            b_ev = np.where(a_l > 0, b_l / np.maximum(a_l, 1), np.nan)
            b_rb = np.where(a_r > 0, b_r / np.maximum(a_r, 1), np.nan)
        b_ev_f = np.where(np.isnan(b_ev), b_rb, b_ev)
        b_rb_f = np.where(np.isnan(b_rb), b_ev, b_rb)
        return gamma[0] * b_ev_f + gamma[1] * b_rb_f

    def revenue(self, t0=None, t1=None) -> np.ndarray:
        """Network revenue per replication."""
        return self.totals("revenue", t0, t1).sum(axis=1)

    def served_customers(self, t0=None, t1=None) -> np.ndarray:
        """Customers arriving in ``[t0, t1)`` who were eventually served, per replication."""
        return self.totals("cust_served", t0, t1).sum(axis=1)


def run_simulation(
    scenario: NetworkScenario,
    tier: str | None = None,
    seed: int | None = None,
    horizon: float | None = None,
    replications: int | None = None,
    start: float | None = None,
    monitor=None,
) -> SimMetrics:
    """Simulate ``scenario`` under ``tier``; unset arguments come from the scenario's run block.

    ``monitor(kind, t, station, n, j)``, if given, is called with the
    station state seen by every admission attempt (``kind="arrival"``) and
    after every state change (``kind="state"``); it receives the
    replication's events in order, replication after replication.
    """
    run = scenario.run
    tier = normalize_tier(tier or run.tier)
    seed = run.seed if seed is None else seed
    horizon = run.horizon if horizon is None else horizon
    replications = run.replications if replications is None else replications
    start = run.start if start is None else start
    if not (isinstance(horizon, (int, float)) and math.isfinite(horizon) and horizon > 0):
        raise ParameterError(f"horizon must be positive and finite, got {horizon}")
    if not math.isfinite(start):
        raise ParameterError("start must be finite")
    if int(replications) != replications or replications < 1:
        raise ParameterError("replications must be a positive integer")
    if int(seed) != seed or seed < 0:
        raise ParameterError("seed must be a nonnegative integer")
    probe = scenario.profile.rates(np.linspace(start, start + horizon, 97))
    if not np.all(np.isfinite(probe)) or np.any(probe < 0):
        raise ParameterError("demand profile must be finite and nonnegative over the horizon")

    slots, report = tier_allocation(scenario, tier)
    configs = _configs(scenario, slots)
    gamma = (scenario.game.gamma1, scenario.game.gamma2)
    lam_star = admissible_rates(configs, gamma) if tier == "full_control" else np.full(len(configs), np.nan)
    shares = scenario_shares(scenario)
    window = scenario.run.window

    per_rep = []
    for child in np.random.SeedSequence(int(seed)).spawn(int(replications)):
        s_arr, s_rech, s_aux = child.spawn(3)
        cust = _draw_customers(scenario, np.random.default_rng(s_arr), start, horizon, shares)
        per_rep.append(
            _simulate_once(
                scenario,
                tier,
                configs,
                lam_star,
                cust,
                np.random.default_rng(s_rech),
                np.random.default_rng(s_aux),
                start,
                horizon,
                window,
                monitor,
            )
        )
    names = COUNT_FIELDS + CUSTOMER_FIELDS + VALUE_FIELDS
    data = {}
    for name in names:
        src = 0 if name in COUNT_FIELDS + CUSTOMER_FIELDS else 1
        data[name] = np.stack([rep[src][name] for rep in per_rep])
    routed = np.stack([rep[2] for rep in per_rep])
    return SimMetrics(scenario.name, tier, int(seed), float(start), window, slots, lam_star, data, routed, report)


def weighted_network_blocking(rates, blocking) -> float | None:
    """Arrival-weighted mean of per-station blocking; ``None`` with no arrivals."""
    lam = np.asarray(rates, dtype=float)
    b = np.asarray(blocking, dtype=float)
    total = lam.sum()
    if total <= 0:
        return None
    b = np.where(lam > 0, np.nan_to_num(b), 0.0)
    return float((lam * b).sum() / total)


def network_weighted_blocking(metrics: SimMetrics, window=(None, None), per_replication: bool = False):
    """Blocking across the network, weighting stations by their local demand.

    ``window`` is a ``(t0, t1)`` pair. Returns ``None`` (or NaN entries per
    replication) when the window has no arrivals.
    """
    t0, t1 = window
    lam = metrics.totals("entries", t0, t1)
    if not per_replication:
        return weighted_network_blocking(lam.sum(axis=0), metrics.blocking(t0, t1))
    b = metrics.blocking(t0, t1, pooled=False)
    out = [weighted_network_blocking(l, bb) for l, bb in zip(lam, b)]
    return np.array([np.nan if v is None else v for v in out])


def congestion_windows(metrics: SimMetrics, station: int = 0, smooth: int = 5, threshold: float = 0.5) -> list[tuple[int, int]]:
    """Runs of rate windows in which ``station`` charges a congestion price.

    The fraction of replications that priced each window is smoothed with a
    centred moving average of ``smooth`` windows (wrapping around the
    horizon, which suits periodic demand) and compared with ``threshold``.
    Returns inclusive ``(first, last)`` window indices; a run that crosses
    the end of the horizon has ``last < first``.
    """
    frac = metrics.data["congested"][:, :, station].mean(axis=0)
    if smooth > 1:
        half = smooth // 2
        frac = np.mean([np.roll(frac, k) for k in range(-half, smooth - half)], axis=0)
    on = frac > threshold
    n = len(on)
    if on.all():
        return [(0, n - 1)]
    runs = []
    first = int(np.flatnonzero(~on)[0])
    for k in range(n):
        w = (first + k) % n
        if on[w] and not on[w - 1]:
            start = w
        if on[w] and not on[(w + 1) % n]:
            runs.append((start, w))
    return sorted(runs)


@dataclass
class TierComparison:
    """Tier results on a common arrival stream, aggregated by hour."""

    hours: np.ndarray
    metrics: dict[str, SimMetrics]
    served: dict[str, np.ndarray]  # mean customers served, by arrival hour
    revenue: dict[str, np.ndarray]
    weighted_blocking: dict[str, list]

    def uplift(self, tier: str = "full_control", reference: str = "baseline") -> np.ndarray:
        """Percentage increase in customers served, per hour."""
        ref = self.served[reference]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ref > 0, 100.0 * (self.served[tier] - ref) / np.maximum(ref, 1e-300), np.nan)

    def rows(self) -> list[dict]:
        out = []
        for h, hour in enumerate(self.hours):
            row = {"hour": float(hour)}
            for tier in self.metrics:
                row[f"served_{tier}"] = float(self.served[tier][h])
                row[f"revenue_{tier}"] = float(self.revenue[tier][h])
                wb = self.weighted_blocking[tier][h]
                row[f"weighted_blocking_{tier}"] = None if wb is None else float(wb)
            row["uplift_full_vs_baseline_pct"] = float(self.uplift()[h])
            out.append(row)
        return out


def compare_tiers(scenario: NetworkScenario, seed: int | None = None, **run_kwargs) -> TierComparison:
    metrics = {t: run_simulation(scenario, t, seed=seed, **run_kwargs) for t in ("baseline", "allocation_only", "full_control")}
    base = metrics["baseline"]
    t_first = base.start
    t_last = base.start + base.window * base.n_windows
    hours = np.arange(math.floor(t_first), math.ceil(t_last - 1e-9))
    served, revenue, wblk = {}, {}, {}
    for tier, m in metrics.items():
        served[tier] = np.array([m.served_customers(h, h + 1).mean() for h in hours])
        revenue[tier] = np.array([m.revenue(h, h + 1).mean() for h in hours])
        wblk[tier] = [network_weighted_blocking(m, (h, h + 1)) for h in hours]
    return TierComparison(hours, metrics, served, revenue, wblk)


@dataclass
class ThetaSweep:
    grid: list[float]
    stations: list[int]
    p_bt: np.ndarray  # (grid, stations) pooled over replications
    p_bt_sd: np.ndarray  # spread across replications
    revenue: np.ndarray  # mean network revenue in the measurement window
    routed: np.ndarray  # mean customers routed away from their station in the window
    best_theta: float
    thetas: np.ndarray  # full per-station vector with the best value applied

    def rows(self) -> list[dict]:
        out = []
        for g, theta in enumerate(self.grid):
            row = {"theta": theta, "revenue": float(self.revenue[g]), "routed": float(self.routed[g])}
            for i in range(self.p_bt.shape[1]):
                row[f"p_bt_{i}"] = float(self.p_bt[g, i])
            out.append(row)
        return out


def _nan_sd(reps):
    # sample sd per column over the replications that saw any attempts
    ok = ~np.isnan(reps)
    n = ok.sum(axis=0)
    x = np.where(ok, reps, 0.0)
    mean = x.sum(axis=0) / np.maximum(n, 1)
    ss = (np.where(ok, reps - mean, 0.0) ** 2).sum(axis=0)
    return np.where(n > 1, np.sqrt(ss / np.maximum(n - 1, 1)), 0.0)


def theta_sweep(
    scenario: NetworkScenario,
    grid=None,
    stations=None,
    mode: str = "payoff",
    seed: int | None = None,
    replications: int | None = None,
    start: float | None = None,
    horizon: float | None = None,
    measure=None,
) -> ThetaSweep:
    """Evaluate the full-control tier over a grid of pricing parameters.

    The swept stations all take the same grid value; the others keep their
    configured value. Every grid point is simulated with the same seed.
    ``mode="payoff"`` picks the value with the highest mean revenue;
    ``mode="qos"`` picks the lowest worst-station P_BT among values whose
    revenue is at least that of the first grid point. Ties go to the
    smallest value.
    """
    if mode not in ("payoff", "qos"):
        raise ParameterError("mode must be 'payoff' or 'qos'")
    grid = scenario.game.theta_values() if grid is None else [float(v) for v in grid]
    if not grid:
        raise ParameterError("theta grid is empty")
    if any(v < 0 for v in grid):
        raise ParameterError("theta values must be nonnegative")
    if stations is None:
        stations = list(scenario.game.theta_stations) or list(range(len(scenario.stations)))
    stations = [int(s) for s in stations]
    run = scenario.run
    t0 = run.start if start is None else start
    h = run.horizon if horizon is None else horizon
    if measure is None:
        m0 = run.measure_start if run.measure_start is not None else t0
        m1 = run.measure_end if run.measure_end is not None else t0 + h
        measure = (m0, m1)
    gamma = (scenario.game.gamma1, scenario.game.gamma2)
    base = np.array([c.theta for c in scenario.stations])
    pbt, pbt_sd, rev, routed = [], [], [], []
    for theta in grid:
        vec = base.copy()
        vec[stations] = theta
        m = run_simulation(scenario.with_thetas(vec), "full_control", seed, h, replications, t0)
        pbt.append(m.p_bt(gamma, *measure))
        reps = m.p_bt(gamma, *measure, pooled=False)
        pbt_sd.append(_nan_sd(reps))
        rev.append(m.revenue(*measure).mean())
        routed.append(m.totals("routed_out", *measure).sum(axis=1).mean())
    pbt = np.array(pbt)
    rev = np.array(rev)
    if mode == "payoff":
        tied = np.flatnonzero(rev == rev.max())
    else:
        ok = np.flatnonzero(rev >= rev[0])
        worst = np.nan_to_num(pbt[ok][:, stations], nan=0.0).max(axis=1)
        tied = ok[worst == worst.min()]
    best = int(min(tied, key=lambda g: grid[g]))
    vec = base.copy()
    vec[stations] = grid[best]
    return ThetaSweep(grid, stations, pbt, np.array(pbt_sd), rev, np.array(routed), grid[best], vec)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".10g")


def metrics_csv(metrics: SimMetrics) -> str:
    """One row per window and station: replication means, plus blocking estimates."""
    buf = io.StringIO()
    buf.write(f"# evnet metrics schema_version={METRICS_SCHEMA_VERSION} tier={metrics.tier} seed={metrics.seed} replications={metrics.replications}\n")
    writer = csv.writer(buf, lineterminator="\n")
    names = COUNT_FIELDS + VALUE_FIELDS + CUSTOMER_FIELDS
    writer.writerow(["window_start", "window_end", "station"] + list(names) + ["b_ev", "b_rb", "slots"])
    means = {k: metrics.mean(k) for k in names}
    pooled = {k: metrics.data[k].sum(axis=0) for k in ("attempts_local", "attempts_routed", "blocked_local", "blocked_routed")}
    starts = metrics.window_starts()
    for w, t in enumerate(starts):
        for i in range(metrics.n_stations):
            a_l, a_r = pooled["attempts_local"][w, i], pooled["attempts_routed"][w, i]
            b_ev = pooled["blocked_local"][w, i] / a_l if a_l else math.nan
            b_rb = pooled["blocked_routed"][w, i] / a_r if a_r else math.nan
            row = [_fmt(t), _fmt(t + metrics.window), str(i)]
            row += [_fmt(means[k][w, i]) for k in names]
            row += [_fmt(b_ev), _fmt(b_rb), str(int(metrics.slots[i]))]
            writer.writerow(row)
    return buf.getvalue()


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else round(v, 10)
    return v


def metrics_summary(metrics: SimMetrics, measure=(None, None)) -> str:
    """JSON run summary; deterministic key order and rounding."""
    t0, t1 = measure
    rev = metrics.revenue(t0, t1)
    served = metrics.served_customers(t0, t1)
    summary = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "scenario": metrics.scenario,
        "tier": metrics.tier,
        "seed": metrics.seed,
        "replications": metrics.replications,
        "window": metrics.window,
        "measure": [t0, t1],
        "slots": metrics.slots.tolist(),
        "lambda_star": metrics.lam_star.tolist(),
        "blocking": metrics.blocking(t0, t1).tolist(),
        "weighted_blocking": network_weighted_blocking(metrics, (t0, t1)),
        "customers": {
            k: metrics.totals(f"cust_{k}", t0, t1).sum(axis=1).mean() for k in ("arrivals", "served", "blocked", "balked")
        },
        "served_sd": served.std(ddof=1) if len(served) > 1 else 0.0,
        "revenue_mean": rev.mean(),
        "revenue_sd": rev.std(ddof=1) if len(rev) > 1 else 0.0,
        "routed": metrics.routed.sum(axis=0).tolist(),
    }
    return json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"
