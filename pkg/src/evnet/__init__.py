"""Simulation and planning tools for a network of EV charging stations with local storage."""

from .allocation import NetworkTopology, allocate, phase1_allocate, phase2_redistribute
from .demand import DemandProfile, SpatialDemand
from .errors import InfeasibleError, ParameterError, SingularChainError
from .game import EvCustomer, GameOutcome, decentralized_control_step, ev_choose, ev_utility, leader_payoff
from .pricing import ArrivalStreams, congestion_price
from .scenario import NetworkScenario, load_preset, load_scenario
from .sim import compare_tiers, congestion_windows, network_weighted_blocking, run_simulation, theta_sweep
from .station import StationConfig, blocking_probability, erlang_b, max_admissible_rate

__version__ = "0.1.0"

__all__ = [
    "ArrivalStreams",
    "DemandProfile",
    "EvCustomer",
    "GameOutcome",
    "InfeasibleError",
    "NetworkScenario",
    "NetworkTopology",
    "ParameterError",
    "SingularChainError",
    "SpatialDemand",
    "StationConfig",
    "allocate",
    "blocking_probability",
    "compare_tiers",
    "congestion_price",
    "congestion_windows",
    "decentralized_control_step",
    "erlang_b",
    "ev_choose",
    "ev_utility",
    "leader_payoff",
    "load_preset",
    "load_scenario",
    "max_admissible_rate",
    "network_weighted_blocking",
    "phase1_allocate",
    "phase2_redistribute",
    "run_simulation",
    "theta_sweep",
]
