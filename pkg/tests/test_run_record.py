import hashlib
import json
import re

import pytest

from gauge_optics import __version__
from gauge_optics.errors import InvariantViolation
from gauge_optics.run_record import MANIFEST_FILE, RunManifest, file_sha256


@pytest.fixture
def manifest(tmp_path):
    return RunManifest(tmp_path, "ab" * 32, "run")


def test_file_checksum(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"fringes")
    assert file_sha256(path) == hashlib.sha256(b"fringes").hexdigest()


def test_stages_accumulate(manifest):
    with manifest.stage("propagate"):
        pass
    first = manifest.stages["propagate"]
    with manifest.stage("propagate"):
        pass
    assert manifest.stages["propagate"] >= first >= 0.0


def test_stage_is_recorded_when_the_block_fails(manifest):
    with pytest.raises(RuntimeError):
        with manifest.stage("analyse"):
            raise RuntimeError("boom")
    assert "analyse" in manifest.stages


def test_artifacts_are_named_relative_to_out_dir(manifest, tmp_path):
    (tmp_path / "snapshots").mkdir()
    nested = tmp_path / "snapshots" / "density_0000010.csv"
    nested.write_text("1,2\n", encoding="utf-8")
    profile = tmp_path / "profile.csv"
    profile.write_text("x,intensity\n0,1\n", encoding="utf-8")
    manifest.add_artifact(profile)
    manifest.add_artifact(nested)
    assert sorted(manifest.artifacts) == ["profile.csv", "snapshots/density_0000010.csv"]
    assert manifest.artifacts["profile.csv"] == file_sha256(profile)


def test_save_and_load(manifest, tmp_path):
    profile = tmp_path / "profile.csv"
    profile.write_text("x,intensity\n0,1\n", encoding="utf-8")
    manifest.add_artifact(profile)
    with manifest.stage("propagate"):
        pass
    path = manifest.save()
    assert path.name == MANIFEST_FILE

    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["tool_version"] == __version__
    assert data["config_hash"] == "ab" * 32
    assert re.fullmatch(r"\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ", data["started_at"])
    assert data["wall_time"] >= 0.0
    assert set(data["stages"]) == {"propagate"}

    loaded = RunManifest.load(tmp_path)
    assert loaded.artifacts == manifest.artifacts
    assert loaded.started_at == manifest.started_at
    assert loaded.command == "run"
    loaded.verify()


def test_verify_detects_tampering(manifest, tmp_path):
    profile = tmp_path / "profile.csv"
    profile.write_text("x,intensity\n0,1\n", encoding="utf-8")
    manifest.add_artifact(profile)
    manifest.save()
    profile.write_text("x,intensity\n0,2\n", encoding="utf-8")
    loaded = RunManifest.load(tmp_path)
    assert loaded.mismatches() == ["profile.csv"]
    with pytest.raises(InvariantViolation) as info:
        loaded.verify()
    assert info.value.invariant == "artifact checksums"
    assert info.value.details["files"] == ["profile.csv"]


def test_verify_detects_missing_files(manifest, tmp_path):
    profile = tmp_path / "profile.csv"
    profile.write_text("x\n", encoding="utf-8")
    manifest.add_artifact(profile)
    profile.unlink()
    with pytest.raises(InvariantViolation):
        manifest.save()
