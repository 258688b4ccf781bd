import copy

import pytest
import yaml

from evnet.errors import ParameterError
from evnet.scenario import (
    GameParams,
    ScenarioError,
    dump_scenario,
    load_preset,
    load_scenario,
    normalize_tier,
    parse_scenario,
    preset_names,
    scenario_to_dict,
)


def minimal():
    return {
        "name": "tiny",
        "stations": [
            {"grid_slots": 2, "storage_units": 1, "location": [0, 0]},
            {"grid_slots": 3, "storage_units": 0, "location": [4, 0]},
        ],
        "demand": {"profile": {"kind": "constant", "rate": 2.0}},
    }


def test_presets_present():
    assert preset_names() == ["erlang-check", "paper-network", "paper-single-sine"]


@pytest.mark.parametrize("name", ["erlang-check", "paper-network", "paper-single-sine"])
def test_round_trip(name, tmp_path):
    sc = load_preset(name)
    path = tmp_path / "s.yaml"
    dump_scenario(sc, path)
    assert load_scenario(path) == sc
    assert dump_scenario(load_scenario(path)) == dump_scenario(sc)


def test_network_preset_values():
    sc = load_preset("paper-network")
    assert [c.grid_slots for c in sc.stations] == [7, 8, 8, 8, 8]
    assert {c.storage_units for c in sc.stations} == {8}
    assert sc.s_max == 39 and sc.s_limit == 13
    assert sc.shares == (0.01, 0.5, 0.42, 0.02, 0.05)
    assert sc.game.incentive_range == (0.75, 1.0)
    assert float(sc.profile.rates(10.5)) == 52


def test_defaults_fill_in():
    sc = parse_scenario(minimal())
    assert sc.s_max == 5 and sc.s_limit == 5
    assert sc.game == GameParams()
    assert sc.run.tier == "baseline"


@pytest.mark.parametrize(
    "mutate,path",
    [
        (lambda d: d.update(colour="red"), "colour"),
        (lambda d: d["stations"][1].update(slots=3), "stations[1].slots"),
        (lambda d: d.update(game={"gamma1": 0.5, "gamma2": 0.6}), "game"),
        (lambda d: d.update(game={"speed": 1}), "game.speed"),
        (lambda d: d["demand"]["profile"].update(rate=-1.0), "demand.profile"),
        (lambda d: d["demand"].update(shares=[0.5]), "demand.shares"),
        (lambda d: d.update(topology={"s_max": 4, "s_limit": 6}), ""),
        (lambda d: d.update(topology={"s_max": -1}), "topology.s_max"),
        (lambda d: d.update(run={"tier": "turbo"}), "run"),
        (lambda d: d.update(run={"horizon": 0}), "run"),
        (lambda d: d.pop("stations"), "stations"),
        (lambda d: d["stations"][0].pop("grid_slots"), "stations[0].grid_slots"),
        (lambda d: d.update(station_defaults={"colour": 1}), "station_defaults.colour"),
        (lambda d: d.update(schema_version=9), "schema_version"),
        (lambda d: d["stations"][0].update(price_block_penalty=1.0), "stations[0]"),
    ],
)
def test_strict_rejection(mutate, path):
    data = copy.deepcopy(minimal())
    mutate(data)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data)
    assert info.value.path == path
    assert isinstance(info.value, ParameterError)


def test_yaml_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("name: x\nstations: [\n  {grid_slots: 1\n")
    with pytest.raises(ScenarioError) as info:
        load_scenario(path)
    assert info.value.path.startswith("line ")


def test_table_default_keyword():
    data = minimal()
    data["demand"]["profile"] = {"kind": "table", "table": "default"}
    sc = parse_scenario(data)
    assert len(sc.profile.table) == 24
    assert scenario_to_dict(sc)["demand"]["profile"]["table"][10] == 52


def test_theta_grid_values():
    assert GameParams().theta_values()[:3] == [0.0, 0.05, 0.1]
    assert len(GameParams().theta_values()) == 21


def test_tier_names():
    assert normalize_tier("full") == "full_control"
    assert normalize_tier("allocation") == "allocation_only"
    with pytest.raises(ParameterError):
        normalize_tier("x")


def test_with_thetas():
    sc = load_preset("paper-network")
    sc2 = sc.with_thetas([0.5, 0.2, 0.2, 0.5, 0.5])
    assert [c.theta for c in sc2.stations] == [0.5, 0.2, 0.2, 0.5, 0.5]


def test_dump_is_plain_yaml():
    text = dump_scenario(load_preset("erlang-check"))
    assert yaml.safe_load(text)["stations"][0]["grid_slots"] == 5
