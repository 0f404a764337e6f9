#!/usr/bin/env python3
"""
run_record.py

Manifest written next to the artifacts of every command.

The manifest contains
    • config_hash       SHA-256 of the canonical scenario JSON
    • tool_version      package version
    • started_at        UTC timestamp YYYY-MM-DDTHH:MM:SSZ
    • wall_time         seconds from creation to save
    • stages            per-stage wall time in seconds
    • artifacts         file name → SHA-256 of its bytes
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from gauge_optics import __version__
from gauge_optics.errors import InvariantViolation

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """
    Inventory of one command's outputs with checksums and timings.
    """

    def __init__(
        self,
        out_dir: Union[str, Path],
        config_hash: str,
        command: str = "run",
    ) -> None:
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.command = command
        self.tool_version = __version__
        self.started_at = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        self.stages: Dict[str, float] = {}
        self.artifacts: Dict[str, str] = {}
        self.wall_time: Optional[float] = None
        self._t0 = time.perf_counter()

    # ------------------------------------------------------------------ #
    # recording
    # ------------------------------------------------------------------ #
    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a block; repeated names accumulate."""
        t0 = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - t0
            self.stages[name] = self.stages.get(name, 0.0) + elapsed
            logger.debug("stage %s took %.3f s", name, elapsed)

    def add_artifact(self, path: Union[str, Path]) -> str:
        """Checksum a file inside ``out_dir`` and list it."""
        name = Path(path).resolve().relative_to(self.out_dir.resolve()).as_posix()
        checksum = file_sha256(self.out_dir / name)
        self.artifacts[name] = checksum
        return checksum

    # ------------------------------------------------------------------ #
    # persistence
    # ------------------------------------------------------------------ #
    def to_dict(self) -> Dict[str, object]:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "wall_time": self.wall_time,
            "stages": dict(self.stages),
            "artifacts": dict(sorted(self.artifacts.items())),
        }

    def save(self) -> Path:
        self.wall_time = time.perf_counter() - self._t0
        path = self.out_dir / MANIFEST_FILE
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=4)
        self.verify()
        return path

    @classmethod
    def load(cls, out_dir: Union[str, Path]) -> "RunManifest":
        out_dir = Path(out_dir)
        with open(out_dir / MANIFEST_FILE, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        manifest = cls(out_dir, data["config_hash"], data.get("command", "run"))
        manifest.tool_version = data["tool_version"]
        manifest.started_at = data["started_at"]
        manifest.wall_time = data.get("wall_time")
        manifest.stages = dict(data.get("stages", {}))
        manifest.artifacts = dict(data.get("artifacts", {}))
        return manifest

    def mismatches(self) -> List[str]:
        """Listed artifacts that are missing or whose checksum changed."""
        bad = []
        for name, checksum in self.artifacts.items():
            path = self.out_dir / name
            if not path.exists() or file_sha256(path) != checksum:
                bad.append(name)
        return bad

    def verify(self) -> None:
        """
        :raises InvariantViolation: if a listed file is missing or altered.
        """
        bad = self.mismatches()
        if bad:
            raise InvariantViolation(
                "artifact checksums", f"artifacts missing or altered: {bad}", files=bad
            )
