import json

import pandas as pd
import pytest

from gauge_optics.cli import ERROR_FILE, main
from gauge_optics.run_record import RunManifest


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture
def gauges_file(tmp_path):
    path = tmp_path / "gauges.toml"
    path.write_text(
        '[[gauges]]\nkind = "linear"\ncx = 0.7\ncy = -0.4\nct = 0.3\n', encoding="utf-8"
    )
    return path


def test_run_free_packet(write_scenario, tmp_path):
    config = write_scenario("free", k0=4.0, screen_x=9.0)
    out = tmp_path / "out"
    out.mkdir()
    (out / ERROR_FILE).write_text("{}", encoding="utf-8")

    code = main(
        ["--log-level", "WARNING", "run", "--config", str(config), "--out", str(out),
         "--snapshots", "300"]
    )
    assert code == 0
    assert not (out / ERROR_FILE).exists()

    profile = pd.read_csv(out / "profile.csv")
    assert list(profile.columns) == ["x", "intensity"]
    assert len(profile) == 128
    summary = read_json(out / "fringe.json")
    assert summary["kind"] == "free"
    assert summary["single_peak"]["centroid"] == pytest.approx(0.0, abs=0.05)
    assert summary["run"]["stopped_by"] in ("crossing", "max_steps")

    manifest = RunManifest.load(out)
    assert {"profile.csv", "fringe.json", "config.json", "snapshots/final_state.csv"} <= set(
        manifest.artifacts
    )
    assert "snapshots/density_0000300.csv" in manifest.artifacts
    assert manifest.config_hash == summary["config_hash"]
    assert set(manifest.stages) == {"propagate", "analyse"}
    saved = read_json(out / "config.json")
    assert saved["kind"] == "free"
    assert saved["grid"]["nx"] == 240
    manifest.verify()


def test_profile_is_byte_identical_across_thread_counts(write_scenario, tmp_path):
    config = write_scenario("free", k0=4.0, screen_x=9.0)
    written = []
    for threads in ("1", "4", "1"):
        out = tmp_path / f"threads_{threads}_{len(written)}"
        args = ["--log-level", "WARNING", "run", "--config", str(config), "--out", str(out),
                "--threads", threads]
        assert main(args) == 0
        written.append((out / "profile.csv").read_bytes())
    assert written[0] == written[1] == written[2]


def test_non_finite_sweep_value_exits_2(write_scenario, tmp_path):
    config = write_scenario("ab_solenoid")
    out = tmp_path / "out"
    code = main(
        ["sweep", "--config", str(config), "--out", str(out), "--param", "flux",
         "--values", "0", "1e400"]
    )
    assert code == 2
    assert read_json(out / ERROR_FILE)["error"] == "ConfigError"


def test_unexpected_failures_still_write_error_json(write_scenario, tmp_path, monkeypatch):
    def explode(*args, **kwargs):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr("gauge_optics.cli.run_scenario", explode)
    out = tmp_path / "out"
    code = main(["run", "--config", str(write_scenario()), "--out", str(out)])
    assert code == 2
    error = read_json(out / ERROR_FILE)
    assert error["error"] == "RuntimeError"
    assert error["exit_code"] == 2
    assert "solver exploded" in error["message"]


def test_invariant_violation_exit_code(write_scenario, tmp_path):
    config = write_scenario(screen_x=10.0)
    out = tmp_path / "out"
    code = main(["run", "--config", str(config), "--out", str(out)])
    assert code == 4
    error = read_json(out / ERROR_FILE)
    assert error["exit_code"] == 4
    assert error["error"] == "InvariantViolation"
    assert error["details"]["invariant"] == "screen strictly downstream of barrier"
    assert not (out / "manifest.json").exists()


def test_config_errors_exit_2(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", str(tmp_path / "absent.toml"), "--out", str(out)])
    assert code == 2
    assert read_json(out / ERROR_FILE)["error"] == "ConfigError"


def test_unknown_key_names_the_key(write_scenario, tmp_path):
    config = write_scenario(extra="slit_count = 3")
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 2
    assert read_json(out / ERROR_FILE)["details"]["key"] == "geometry.slit_count"


@pytest.mark.parametrize(
    "argv",
    [
        ["audit"],
        ["sweep", "--param", "mass", "--values", "1", "2"],
        ["sweep", "--param", "flux"],
        ["sweep", "--param", "flux", "--values", "0", "0.5pi"],
        ["run", "--threads", "0"],
        ["run", "--snapshots", "-1"],
    ],
)
def test_usage_errors_exit_2(argv, write_scenario, tmp_path):
    config = write_scenario()
    out = tmp_path / "out"
    command, rest = argv[0], argv[1:]
    code = main([command, "--config", str(config), "--out", str(out)] + rest)
    assert code == 2
    assert read_json(out / ERROR_FILE)["exit_code"] == 2


def test_audit_needs_a_non_identity_gauge(write_scenario, tmp_path):
    gauges = tmp_path / "identity.toml"
    gauges.write_text('[[gauges]]\nkind = "identity"\n', encoding="utf-8")
    out = tmp_path / "out"
    code = main(
        ["audit", "--config", str(write_scenario()), "--out", str(out),
         "--gauges", str(gauges)]
    )
    assert code == 2


def test_argparse_rejects_missing_arguments():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2


@pytest.mark.slow
def test_audit_command(write_scenario, gauges_file, tmp_path):
    config = write_scenario("ab_solenoid", extra='solenoid_flux = "0.5pi"')
    out = tmp_path / "audit"
    code = main(
        ["audit", "--config", str(config), "--out", str(out), "--gauges", str(gauges_file),
         "--snapshots", "400", "--threads", "2"]
    )
    assert code == 0
    report = read_json(out / "audit.json")
    assert report["failed"] is False
    assert report["max_density_deviation"] < 1e-9
    assert [b["gauge"] for b in report["branches"]] == ["identity", "linear(0.7, -0.4, 0.3)"]
    RunManifest.load(out).verify()


@pytest.mark.slow
def test_flux_sweep_command(write_scenario, tmp_path):
    config = write_scenario("ab_solenoid")
    out = tmp_path / "sweep"
    code = main(
        ["sweep", "--config", str(config), "--out", str(out), "--param", "flux",
         "--values", "0,0.5pi", "--threads", "2"]
    )
    assert code == 0
    frame = pd.read_csv(out / "sweep.csv")
    assert list(frame.columns) == [
        "value", "fullwave_spacing", "fullwave_shift", "papertrack_spacing",
        "papertrack_wavelength",
    ]
    assert frame["fullwave_shift"].iloc[1] == pytest.approx(0.25, abs=0.03)
