import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evnet.errors import ParameterError
from evnet.pricing import (
    ArrivalStreams,
    acceptance_at_price,
    acceptance_fraction,
    congestion_price,
    effective_rate,
    retry_streams,
    surcharge,
)


@pytest.mark.parametrize(
    "streams,expected",
    [((5, 0, 0), 5.0), ((5, 1, 0.5), 6.5), ((0, 0, 0), 0.0)],
)
def test_effective_rate(streams, expected):
    assert effective_rate(ArrivalStreams(*streams)) == pytest.approx(expected)


def test_streams_validation():
    with pytest.raises(ParameterError):
        ArrivalStreams(lambda_ev=-1)
    with pytest.raises(ParameterError):
        ArrivalStreams(lambda_ev=1, lambda_ac=2)


@pytest.mark.parametrize("ratio,expected", [(0.5, 1.0), (2.0, 0.5), (1.0, 1.0)])
def test_acceptance_fraction(ratio, expected):
    assert acceptance_fraction(ratio * 4.0, 4.0) == pytest.approx(expected)


def test_acceptance_needs_positive_threshold():
    with pytest.raises(ParameterError):
        acceptance_fraction(1.0, 0.0)
    with pytest.raises(ParameterError):
        congestion_price(1.0, -1.0, 4.0, 0.5)


def test_price_branches():
    assert congestion_price(3.0, 3.0, 4.0, 0.5).price == 4.0
    assert congestion_price(0.0, 3.0, 4.0, 0.5).price == 4.0
    sig = congestion_price(math.e * 3.0, 3.0, 4.0, 0.5, station_index=2)
    assert sig.price == 6.0 and sig.congested and sig.station_index == 2
    assert congestion_price(10.0, 3.0, 4.0, 0.0).price == 4.0


def test_surcharge_vanishes_at_threshold():
    assert surcharge(3.0, 3.0, 0.5) == 0.0
    gaps = [surcharge(3.0 * (1 + 10.0**-k), 3.0, 0.5) for k in range(2, 12)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-5


def test_base_ten_log_override():
    p = congestion_price(30.0, 3.0, 4.0, 0.5, log=math.log10).price
    assert p == pytest.approx(6.0)


@given(lam_star=st.floats(0.1, 50), a=st.floats(0, 200), b=st.floats(0, 200), theta=st.floats(0, 2))
def test_price_monotone_and_above_normal(lam_star, a, b, theta):
    lo, hi = sorted((a, b))
    p_lo = congestion_price(lo, lam_star, 4.0, theta).price
    p_hi = congestion_price(hi, lam_star, 4.0, theta).price
    assert 4.0 <= p_lo <= p_hi + 1e-12
    sig = congestion_price(hi, lam_star, 4.0, theta)
    assert sig.congested == (hi > lam_star)


@given(lam_star=st.floats(0.1, 50), excess=st.floats(1.0001, 100))
def test_throttle_to_safe_rate(lam_star, excess):
    eff = lam_star * excess
    assert acceptance_fraction(eff, lam_star) * eff <= lam_star * (1 + 1e-12)


@given(lam_star=st.floats(0.1, 50), excess=st.floats(1.01, 100), theta=st.floats(0.05, 2))
def test_inverse_demand_recovers_acceptance(lam_star, excess, theta):
    eff = lam_star * excess
    price = congestion_price(eff, lam_star, 4.0, theta).price
    assert acceptance_at_price(price, 4.0, theta) == pytest.approx(acceptance_fraction(eff, lam_star), rel=1e-9)


def test_zero_theta_everyone_accepts():
    assert acceptance_at_price(4.0, 4.0, 0.0) == 1.0


@pytest.mark.parametrize(
    "args,expected",
    [((3.0, 0.0, 1 / 3), (1.0, 0.0)), ((0.0, 0.0, 1 / 3), (0.0, 0.0)), ((3.0, 1.5, 0.0), (0.0, 0.0))],
)
def test_retry_streams(args, expected):
    assert retry_streams(*args) == pytest.approx(expected)


def test_retry_fraction_range():
    with pytest.raises(ParameterError):
        retry_streams(1.0, 1.0, 1.5)
