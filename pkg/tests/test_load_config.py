import json
import math
from pathlib import Path

import pytest

from gauge_optics.errors import ConfigError
from gauge_optics.load_config import (
    ConfigManager,
    gauge_from_dict,
    load_gauges,
    load_scenario,
    parse_quantity,
    scenario_from_dict,
)
from gauge_optics.potentials import Worldline
from gauge_optics.scenarios import build_geometry, validate_config

from conftest import TINY_K, make_tiny_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize(
    "value, expected",
    [
        (2, 2.0),
        (-0.75, -0.75),
        ("1e-3", 1e-3),
        ("pi", math.pi),
        ("0.5pi", 0.5 * math.pi),
        ("2 * pi", 2.0 * math.pi),
        ("-0.25π", -0.25 * math.pi),
        ("0.25k", 0.25 * TINY_K),
    ],
)
def test_parse_quantity(value, expected):
    assert parse_quantity(value, k_magnitude=TINY_K) == pytest.approx(expected)


@pytest.mark.parametrize("value", ["abc", "pi pi", True, None, [1.0]])
def test_parse_quantity_rejects(value):
    with pytest.raises(ConfigError) as info:
        parse_quantity(value, key="geometry.solenoid_flux")
    assert info.value.key == "geometry.solenoid_flux"


@pytest.mark.parametrize("value", ["1e400", "-2e999", float("nan"), float("inf")])
def test_parse_quantity_rejects_non_finite(value):
    with pytest.raises(ConfigError, match="finite") as info:
        parse_quantity(value, key="values")
    assert info.value.key == "values"


def test_multiple_of_k_needs_a_momentum():
    with pytest.raises(ConfigError):
        parse_quantity("0.25k")


def test_scenario_file_matches_in_code_config(write_scenario):
    config = load_scenario(write_scenario())
    expected = make_tiny_config()
    assert config.config_hash() == expected.config_hash()
    assert config.grid.y[0] == pytest.approx(-config.grid.y[-1])


def test_quantities_in_geometry(write_scenario):
    path = write_scenario(
        "toroidal_channel",
        extra='channel_a_upper = "0.25k"\nchannel_a_lower = "-0.1k"',
    )
    config = load_scenario(path)
    assert config.geometry.channel_a_upper == pytest.approx(2.5)
    assert config.geometry.channel_a_lower == pytest.approx(-1.0)
    path = write_scenario("ab_solenoid", extra='solenoid_flux = "0.5pi"', name="ab.toml")
    assert load_scenario(path).geometry.solenoid_flux == pytest.approx(0.5 * math.pi)


def test_unknown_keys_are_named(write_scenario, tmp_path):
    with pytest.raises(ConfigError) as info:
        load_scenario(write_scenario(extra="slit_count = 3"))
    assert info.value.key == "geometry.slit_count"
    assert info.value.exit_code == 2

    with pytest.raises(ConfigError) as info:
        scenario_from_dict({"kind": "free", "colour": "red"})
    assert info.value.key == "colour"

    with pytest.raises(ConfigError) as info:
        scenario_from_dict({"grid": {"nz": 4}})
    assert info.value.key == "grid.nz"


def test_wrong_types_are_named():
    with pytest.raises(ConfigError) as info:
        scenario_from_dict({"run": {"max_steps": 1.5}})
    assert info.value.key == "run.max_steps"
    with pytest.raises(ConfigError) as info:
        scenario_from_dict({"packet": {"center": [1.0]}})
    assert info.value.key == "packet.center"
    with pytest.raises(ConfigError) as info:
        scenario_from_dict({"kind": "triple_slit"})
    assert info.value.key == "kind"


def test_syntax_error_reports_position(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text('kind = "free"\n[grid\nnx = 64\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_scenario(path)
    assert info.value.line == 2
    assert info.value.column is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.toml")


def test_potential_declarations(write_scenario, tmp_path):
    csv = tmp_path / "charge.csv"
    csv.write_text("t,x,y,z\n-50,12,3,1\n50,12,3,1\n", encoding="utf-8")
    extra = "\n".join(
        [
            "",
            "[[potentials]]",
            'kind = "uniform_scalar"',
            "phi0 = 0.01",
            "",
            "[[potentials]]",
            'kind = "worldlines"',
            "sources = [{ charge = -1.0, csv = \"charge.csv\" }]",
        ]
    )
    path = tmp_path / "extra.toml"
    path.write_text(write_scenario().read_text(encoding="utf-8") + extra, encoding="utf-8")
    config = load_scenario(path)
    assert [p["kind"] for p in config.potentials] == ["uniform_scalar", "worldlines"]
    samples = config.potentials[1]["sources"][0]["samples"]
    assert samples == Worldline.from_csv(csv, -1.0).samples.tolist()
    geometry = build_geometry(config)
    assert "worldlines(n=1)" in geometry.field.label


def test_missing_worldline_file(tmp_path):
    data = {
        "potentials": [
            {"kind": "worldlines", "sources": [{"charge": 1.0, "csv": "nowhere.csv"}]}
        ]
    }
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(data, tmp_path)
    assert info.value.key == "potentials[0].sources[0].csv"


@pytest.mark.parametrize(
    "name, kx",
    [
        ("free.toml", 2.0),
        ("double_slit.toml", 4.0 * math.pi),
        ("ab_solenoid.toml", 4.0 * math.pi),
        ("toroidal_channel.toml", 4.0 * math.pi),
    ],
)
def test_shipped_scenarios_are_valid(name, kx):
    config = load_scenario(CONFIG_DIR / name)
    validate_config(config)
    assert config.grid.nx == 768
    assert config.packet.k0[0] == pytest.approx(kx)


def test_shipped_channel_strength():
    config = load_scenario(CONFIG_DIR / "toroidal_channel.toml")
    assert config.geometry.channel_a_upper == pytest.approx(math.pi)


def test_shipped_gauges_expand_random_polynomials():
    gauges = load_gauges(CONFIG_DIR / "gauges.toml")
    assert len(gauges) == 7
    assert [g.label for g in gauges[2:]] == [f"random({seed})" for seed in range(1, 6)]
    assert gauges[1](3.0, 1.0, 2.0) == pytest.approx(0.5 * math.pi)


def test_gauge_declarations():
    (linear,) = gauge_from_dict({"kind": "linear", "cx": 1.0, "ct": "0.5pi"})
    assert linear(2.0, 5.0, 1.0) == pytest.approx(2.0 + 0.5 * math.pi)
    (identity,) = gauge_from_dict({"kind": "identity"})
    assert identity.identity
    with pytest.raises(ConfigError) as info:
        gauge_from_dict({"kind": "constant", "valu": 1.0})
    assert info.value.key == "gauges.valu"
    with pytest.raises(ConfigError):
        gauge_from_dict({"kind": "spiral"})
    with pytest.raises(ConfigError):
        gauge_from_dict({"kind": "polynomial"})


def test_empty_gauge_file(tmp_path):
    path = tmp_path / "gauges.toml"
    path.write_text("# nothing here\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_gauges(path)
    assert info.value.key == "gauges"


def test_config_manager_saves_json(tmp_path, write_scenario):
    manager = ConfigManager(write_scenario())
    data = manager.load()
    assert data["kind"] == "double_slit"
    target = manager.save(make_tiny_config().to_dict())
    assert target.suffix == ".json"
    saved = json.loads(target.read_text(encoding="utf-8"))
    assert saved["geometry"]["screen_x"] == 16.5
    assert saved["grid"]["nx"] == 240
