import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evnet.errors import ParameterError
from evnet.game import (
    EvCustomer,
    GameOutcome,
    NetworkView,
    decentralized_control_step,
    ev_choose,
    ev_utility,
    leader_payoff,
    station_costs,
    station_distances,
    tune_theta,
)
from evnet.scenario import parse_scenario
from evnet.station import StationConfig


def customer(c=0.8, p_dis=0.03, xi=0.0, loc=(0.0, 0.0)):
    return EvCustomer(loc, c, p_dis, 0.03, xi)


class TestUtility:
    def test_equal_distances_uncongested(self):
        u = ev_utility(customer(xi=0.0), [0.0] * 3, [4.0] * 3, [2.0] * 3, 0.05)
        assert u == pytest.approx([4 + 0.03 * 4] * 3)

    def test_urgency_neutral_at_target(self):
        u = ev_utility(customer(xi=0.1), [0.05, 0.5], [4.0, 4.0], [1.0, 1.0], 0.05)
        assert u[0] == pytest.approx(4.03)
        assert u[1] > u[0]

    def test_worked_value(self):
        u = ev_utility(customer(p_dis=0.03), [0.0, 0.0], [4.0, 4.0], [1.0, 2.0], 0.05)
        assert u[1] == pytest.approx(4.15)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            ev_utility(customer(), [0.0], [4.0, 4.0], [1.0, 2.0], 0.05)
        with pytest.raises(ParameterError):
            station_costs(customer(), [4.0], [1.0, 2.0])

    def test_invalid_customer(self):
        with pytest.raises(ParameterError):
            EvCustomer((0, 0), -1, 0.03)


class TestChoose:
    def test_small_savings_rejected(self):
        cust = customer(c=0.75)
        costs = np.array([5.0, 4.5])
        ch = ev_choose(cust, costs, costs, [0.0, 0.0], 0.05, nearest=0)
        assert not ch.routed and ch.station == 0 and ch.savings == pytest.approx(0.5)
        assert cust.decision == 0

    def test_identical_utilities_keep_nearest(self):
        ch = ev_choose(customer(), [4.0] * 3, [4.0] * 3, [0.0] * 3, 0.05, nearest=2)
        assert ch.station == 2 and not ch.routed

    def test_equal_prices_keep_nearest(self):
        d = np.array([1.0, 3.0, 4.0])
        c = station_costs(customer(), [4.0] * 3, d)
        ch = ev_choose(customer(), c, c, [0.0] * 3, 0.05, nearest=0)
        assert ch.station == 0

    def test_candidate_over_qos_rejected(self):
        c = np.array([7.0, 4.0])
        assert not ev_choose(customer(c=0.5), c, c, [0.0, 0.2], 0.05, nearest=0).routed
        assert ev_choose(customer(c=0.5), c, c, [0.0, 0.01], 0.05, nearest=0).routed

    @given(
        prices=st.lists(st.floats(4, 10), min_size=3, max_size=3),
        d=st.lists(st.floats(0, 20), min_size=3, max_size=3),
        c=st.floats(0.75, 1.0),
        p_dis=st.floats(0.02, 0.05),
        pbt=st.lists(st.floats(0, 0.2), min_size=3, max_size=3),
    )
    def test_incentive_gate(self, prices, d, c, p_dis, pbt):
        cust = customer(c=c, p_dis=p_dis, xi=0.1)
        near = int(np.argmin(d))
        costs = station_costs(cust, prices, d, reference=near)
        util = ev_utility(cust, pbt, prices, d, 0.05, reference=near)
        ch = ev_choose(cust, util, costs, pbt, 0.05, near)
        if ch.routed:
            assert costs[near] - costs[ch.station] >= c
            assert pbt[ch.station] <= 0.05
        else:
            assert ch.station == near

    @given(
        prices=st.lists(st.floats(4, 10), min_size=3, max_size=3),
        d=st.lists(st.floats(0, 20), min_size=3, max_size=3),
        scale=st.floats(0.1, 10),
    )
    def test_argmin_invariant_to_common_scale(self, prices, d, scale):
        base = EvCustomer((0, 0), 0.8, 0.03, 0.03, 0.0)
        scaled = EvCustomer((0, 0), 0.8, 0.03 * scale, 0.03 * scale, 0.0)
        near = int(np.argmin(d))
        u1 = ev_utility(base, [0.0] * 3, prices, d, 0.05, reference=near)
        u2 = ev_utility(scaled, [0.0] * 3, np.asarray(prices) * scale, d, 0.05, reference=near)
        assert np.allclose(u2, scale * u1)
        a = ev_choose(base, u1, u1, [0.0] * 3, 0.05, near).candidate
        b = ev_choose(scaled, u2, u2, [0.0] * 3, 0.05, near).candidate
        assert a == b or np.isclose(u1[a], u1[b])


class TestPayoff:
    def test_one_served(self):
        o = GameOutcome(1, p_block=6.0)
        o.record(0, 4.0, True)
        assert leader_payoff(o) == 4.0

    def test_one_blocked(self):
        o = GameOutcome(1)
        o.record(0, 4.0, False)
        assert leader_payoff(o, p_block=6.0) == -6.0

    def test_mixed(self):
        o = GameOutcome(2, p_block=6.0)
        for _ in range(10):
            o.record(0, 4.0, True)
        for _ in range(2):
            o.record(1, 4.0, False)
        o.record_balk()
        assert o.revenue == 28.0
        assert o.served_by_station.tolist() == [10, 0]
        assert o.blocked_by_station.tolist() == [0, 2]
        assert not any(s and b for s, b in zip(o.served, o.blocked))

    def test_price_vector_override(self):
        o = GameOutcome(2, p_block=6.0)
        o.record(1, 4.0, True)
        assert leader_payoff(o, prices=[4.0, 5.5]) == 5.5


def view_for(n, congested=None, prices=None, acceptance=None, p_bt=None):
    cfgs = [StationConfig(2, 1, location=(5.0 * i, 0.0), price_block_penalty=6.0) for i in range(n)]
    v = NetworkView.idle(cfgs)
    if congested is not None:
        v.congested[:] = congested
    if prices is not None:
        v.prices[:] = prices
    if acceptance is not None:
        v.acceptance[:] = acceptance
    if p_bt is not None:
        v.p_bt[:] = p_bt
    return v


class TestControlStep:
    def test_idle_single_station(self):
        o = GameOutcome(1)
        r = decentralized_control_step(customer(), view_for(1), lambda i, routed: True, 0.5, o)
        assert r.station == 0 and r.admitted and r.price == 4.0
        assert o.revenue == 4.0

    def test_everything_full(self):
        o = GameOutcome(2, p_block=6.0)
        r = decentralized_control_step(customer(), view_for(2), lambda i, routed: False, 0.5, o)
        assert not r.admitted and not r.balked
        assert o.revenue == -6.0

    def test_uncongested_goes_nearest(self):
        v = view_for(3)
        r = decentralized_control_step(customer(loc=(9.0, 0.0)), v, lambda i, routed: True, 0.99)
        assert r.station == 2 and not r.routed

    def test_congested_accepter_stays(self):
        v = view_for(2, congested=[True, False], prices=[6.0, 4.0], acceptance=[0.5, 1.0])
        r = decentralized_control_step(customer(loc=(1.0, 0.0)), v, lambda i, routed: True, 0.2)
        assert r.station == 0 and r.accepted_price and not r.routed

    def test_congested_rejecter_routes(self):
        v = view_for(2, congested=[True, False], prices=[6.0, 4.0], acceptance=[0.5, 1.0])
        seen = []
        r = decentralized_control_step(
            customer(loc=(2.5, 0.0)), v, lambda i, routed: seen.append((i, routed)) or True, 0.9
        )
        assert r.routed and r.station == 1 and seen == [(1, True)]

    def test_congested_rejecter_without_alternative_balks(self):
        v = view_for(2, congested=[True, False], prices=[4.2, 4.0], acceptance=[0.5, 1.0])
        o = GameOutcome(2)
        r = decentralized_control_step(customer(loc=(0.0, 0.0)), v, lambda i, routed: True, 0.9, o)
        assert r.balked and r.station is None
        assert o.choices == [-1] and o.revenue == 0.0

    @given(st.lists(st.tuples(st.floats(0, 15), st.floats(0, 1), st.booleans()), min_size=1, max_size=40))
    def test_outcome_conservation(self, draws):
        v = view_for(3, congested=[True, False, False], prices=[5.5, 4.0, 4.0], acceptance=[0.6, 1, 1])
        o = GameOutcome(3)
        for x, u, ok in draws:
            decentralized_control_step(customer(loc=(x, 0.0)), v, lambda i, routed, ok=ok: ok, u, o)
        served = sum(o.served)
        blocked = sum(o.blocked)
        balked = sum(1 for ch in o.choices if ch == -1)
        assert served + blocked + balked == len(draws)


def quiet_single_station():
    return parse_scenario(
        {
            "name": "quiet",
            "stations": [{"grid_slots": 4, "storage_units": 2, "location": [0, 0]}],
            "demand": {"profile": {"kind": "constant", "rate": 0.5}},
            "run": {"horizon": 5.0, "replications": 2},
        }
    )


def test_tune_theta_uncongested_picks_grid_minimum():
    sw = tune_theta(quiet_single_station(), grid=[0.3, 0.1, 0.7])
    assert sw.best_theta == 0.1
    assert np.allclose(sw.revenue, sw.revenue[0])


def test_tune_theta_empty_grid():
    with pytest.raises(ParameterError):
        tune_theta(quiet_single_station(), grid=[])


def test_distances():
    assert station_distances((0, 0), [(3, 4), (0, 1)]).tolist() == [5.0, 1.0]
