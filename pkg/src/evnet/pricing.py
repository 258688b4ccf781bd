"""Admission control by congestion pricing.

Each station runs a pricing block in front of its chargers. Vehicles whose
nearest station it is, together with blocked customers coming back for
another try, form the effective demand. While that demand stays under the
station's admissible rate everyone pays the normal price; beyond it the
price rises and only a fraction of customers accept it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError

__all__ = [
    "ArrivalStreams",
    "PriceSignal",
    "effective_rate",
    "acceptance_fraction",
    "congestion_price",
    "surcharge",
    "acceptance_at_price",
    "retry_streams",
]


@dataclass(frozen=True)
class ArrivalStreams:
    """Rates of the flows around one pricing block (vehicles per hour)."""

    lambda_ev: float = 0.0  # nearest-station requests
    lambda_bl: float = 0.0  # blocked local customers retrying
    lambda_rb: float = 0.0  # blocked routed customers retrying
    lambda_r: float = 0.0  # routed in from neighbours
    lambda_ac: float = 0.0  # accepted the quoted price
    lambda_ad: float = 0.0  # admitted

    def __post_init__(self):
        for name in ("lambda_ev", "lambda_bl", "lambda_rb", "lambda_r", "lambda_ac", "lambda_ad"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if self.lambda_ac > self.lambda_ev + self.lambda_bl + self.lambda_rb + 1e-12:
            raise ParameterError("accepted rate exceeds the pricing-block inflow")


@dataclass(frozen=True)
class PriceSignal:
    station_index: int
    price: float
    congested: bool
    effective_rate: float


def effective_rate(streams: ArrivalStreams) -> float:
    return streams.lambda_ev + streams.lambda_bl + streams.lambda_rb


def acceptance_fraction(eff_rate: float, lam_star: float) -> float:
    """Share of the pricing-block inflow that accepts the quoted price."""
    if not lam_star > 0:
        raise ParameterError(f"admissible rate must be positive, got {lam_star}")
    if eff_rate <= lam_star:
        return 1.0
    return lam_star / eff_rate


def surcharge(eff_rate: float, lam_star: float, theta: float, log=math.log) -> float:
    """Relative price markup ``theta * sqrt(-log(lam_star / eff_rate))``.

    Zero at ``eff_rate == lam_star``; only meaningful for ``eff_rate >= lam_star``.
    """
    return theta * math.sqrt(max(-log(lam_star / eff_rate), 0.0))


def congestion_price(
    eff_rate: float,
    lam_star: float,
    p_normal: float,
    theta: float,
    station_index: int = 0,
    log=math.log,
) -> PriceSignal:
    """Quote the price for the current effective demand.

    Above the admissible rate the price is
    ``p_normal * (1 + theta * sqrt(-log(lam_star / eff_rate)))``; the
    logarithm is natural unless ``log`` is overridden.
    """
    if not lam_star > 0:
        raise ParameterError(f"admissible rate must be positive, got {lam_star}")
    if theta < 0:
        raise ParameterError(f"theta must be nonnegative, got {theta}")
    if eff_rate <= lam_star:
        return PriceSignal(station_index, p_normal, False, eff_rate)
    markup = surcharge(eff_rate, lam_star, theta, log)
    return PriceSignal(station_index, p_normal * (1.0 + markup), True, eff_rate)


def acceptance_at_price(price: float, p_normal: float, theta: float, log_base_e: bool = True) -> float:
    """Invert the congestion price back to the demand it was set for.

    Equals ``acceptance_fraction`` for any price produced by
    ``congestion_price`` with ``theta > 0``. A zero ``theta`` leaves the
    price at ``p_normal``, which every customer accepts.
    """
    if price <= p_normal or theta == 0:
        return 1.0
    z = (price / p_normal - 1.0) / theta
    return math.exp(-z * z) if log_base_e else 10.0 ** (-z * z)


def retry_streams(
    blocked_local_rate: float, blocked_routed_rate: float, retry_fraction: float = 1.0 / 3.0
) -> tuple[float, float]:
    if not 0.0 <= retry_fraction <= 1.0:
        raise ParameterError(f"retry_fraction must lie in [0, 1], got {retry_fraction}")
    if blocked_local_rate < 0 or blocked_routed_rate < 0:
        raise ParameterError("blocked rates must be nonnegative")
    return retry_fraction * blocked_local_rate, retry_fraction * blocked_routed_rate
