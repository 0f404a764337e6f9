#!/usr/bin/env python3
"""
Module to load scenario and gauge configuration from TOML files and to save
the resolved configuration as JSON.

A scenario file holds the top-level keys ``kind``, ``name``, ``q``, ``mass`` and
the tables ``[grid]``, ``[packet]``, ``[geometry]``, ``[run]``
plus optional ``[[potentials]]`` declarations.  Omitted values fall back to
the desk-scale defaults of the chosen kind.
"""

from __future__ import annotations

import json
import math
import re
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from gauge_optics.errors import ConfigError, GaugeOpticsError
from gauge_optics.potentials import GaugeFunction, Worldline
from gauge_optics.scenarios import (
    GeometrySpec,
    PacketSpec,
    RunSettings,
    ScenarioConfig,
    default_config,
)
from gauge_optics.wavesolver import GridSpec

DEFAULT_CONFIG_FILE = "scenario.toml"

_QUANTITY = re.compile(
    r"^\s*(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*"
    r"(?P<unit>pi|π|k)?\s*$"
)
_POSITION = re.compile(r"at line (\d+), column (\d+)")


class ConfigManager:
    """
    Manage loading and saving of a GaugeOptics configuration file.
    """

    def __init__(self, path: Union[str, Path] = DEFAULT_CONFIG_FILE) -> None:
        """
        Initialize the ConfigManager.

        :param path: Path to the TOML config file.
        """
        self.path = Path(path)
        self.config: Dict[str, Any] = {}

    def load(self) -> Dict[str, Any]:
        """
        Load configuration from the TOML file.

        :return: Dict of configuration.
        :raises ConfigError: if the file is missing or not valid TOML; the
            decoder's line and column are attached.
        """
        if not self.path.exists():
            raise ConfigError(f"config file {self.path} does not exist")
        try:
            with open(self.path, "rb") as f:
                self.config = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            match = _POSITION.search(str(exc))
            line, column = (int(match[1]), int(match[2])) if match else (None, None)
            raise ConfigError(
                f"{self.path}: {exc}", line=line, column=column
            ) from exc
        except OSError as exc:
            raise ConfigError(f"cannot read {self.path}: {exc}") from exc
        return self.config

    def save(self, config: Mapping[str, Any], path: Union[str, Path, None] = None) -> Path:
        """
        Save the given configuration dict as JSON.

        :param config: Dict of configuration to save.
        :param path: Target file, by default the config path with a ``.json``
            suffix.
        """
        target = Path(path) if path is not None else self.path.with_suffix(".json")
        with open(target, "w", encoding="utf-8") as f:
            json.dump(config, f, indent=4, sort_keys=True)
        self.config = dict(config)
        return target


# --------------------------------------------------------------------------- #
# Values
# --------------------------------------------------------------------------- #
def parse_quantity(value: Any, k_magnitude: Optional[float] = None, key: str = "") -> float:
    """
    Number, multiple of π (``"0.5pi"``, ``"pi"``) or multiple of |k0|
    (``"0.25k"``).

    :raises ConfigError: for unreadable or non-finite values.
    """
    number = _quantity(value, k_magnitude, key)
    if not math.isfinite(number):
        raise ConfigError(f"'{key}' must be finite, got {value!r}", key=key)
    return number


def _quantity(value: Any, k_magnitude: Optional[float], key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"expected a number for '{key}', got {value!r}", key=key)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _QUANTITY.match(value.strip().lower())
        if match and (match["num"] or match["unit"]):
            number = float(match["num"]) if match["num"] else 1.0
            unit = match["unit"]
            if unit in ("pi", "π"):
                return number * math.pi
            if unit == "k":
                if k_magnitude is None:
                    raise ConfigError(f"'{value}' needs a packet momentum", key=key)
                return number * k_magnitude
            return number
    raise ConfigError(f"cannot read '{value}' as a quantity for '{key}'", key=key)


def _reject_unknown(table: Mapping[str, Any], allowed, where: str) -> None:
    for name in table:
        if name not in allowed:
            key = f"{where}.{name}" if where else name
            raise ConfigError(f"unknown key '{key}'", key=key)


def _table(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = data.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"'{name}' must be a table", key=name)
    return value


def _pair(value: Any, key: str, k_magnitude: Optional[float] = None) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"'{key}' must be a pair of numbers", key=key)
    return tuple(parse_quantity(v, k_magnitude, key) for v in value)


def _fill(spec, table: Mapping[str, Any], where: str, k_magnitude: Optional[float] = None):
    """Overlay a TOML table on a frozen spec dataclass."""
    known = {f.name: f for f in fields(spec)}
    _reject_unknown(table, known, where)
    changes: Dict[str, Any] = {}
    for name, value in table.items():
        key = f"{where}.{name}"
        current = getattr(spec, name)
        if isinstance(current, tuple) or name in ("solenoid_center", "origin"):
            changes[name] = _pair(value, key, k_magnitude)
        elif isinstance(current, bool):
            changes[name] = bool(value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"'{key}' must be an integer", key=key)
            changes[name] = value
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"'{key}' must be a string", key=key)
            changes[name] = value
        else:
            changes[name] = parse_quantity(value, k_magnitude, key)
    return replace(spec, **changes)


def _resolve_potential(
    decl: Mapping[str, Any], base_dir: Path, where: str
) -> Dict[str, Any]:
    """Turn ``csv`` worldline sources into inline samples."""
    if not isinstance(decl, Mapping):
        raise ConfigError(f"'{where}' must be a table", key=where)
    out = dict(decl)
    if decl.get("kind") == "worldlines":
        sources = []
        for i, src in enumerate(decl.get("sources", [])):
            src = dict(src)
            if "csv" in src:
                path = Path(src.pop("csv"))
                if not path.is_absolute():
                    path = base_dir / path
                if not path.exists():
                    raise ConfigError(
                        f"worldline file {path} does not exist",
                        key=f"{where}.sources[{i}].csv",
                    )
                worldline = Worldline.from_csv(path, float(src.get("charge", -1.0)))
                src["samples"] = worldline.samples.tolist()
            sources.append(src)
        out["sources"] = sources
    if decl.get("kind") == "composite":
        out["parts"] = [
            _resolve_potential(part, base_dir, f"{where}.parts[{i}]")
            for i, part in enumerate(decl.get("parts", []))
        ]
    return out


# --------------------------------------------------------------------------- #
# Scenarios
# --------------------------------------------------------------------------- #
SCENARIO_KEYS = (
    "kind", "name", "q", "mass",
    "grid", "packet", "geometry", "run", "potentials",
)
GRID_KEYS = ("nx", "ny", "dx", "dy", "dt", "origin", "x0")


def scenario_from_dict(
    data: Mapping[str, Any], base_dir: Union[str, Path, None] = None
) -> ScenarioConfig:
    """
    Convert a parsed configuration into a :class:`ScenarioConfig`.

    Without ``grid.origin`` the grid starts at ``grid.x0`` (default 0) and is
    centred on ``y = 0``.  ``geometry`` values may be written as multiples of
    π or of |k0| (``"0.25k"``).

    :raises ConfigError: naming the offending dotted key.
    """
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    _reject_unknown(data, SCENARIO_KEYS, "")
    kind = data.get("kind", "double_slit")
    if not isinstance(kind, str):
        raise ConfigError("'kind' must be a string", key="kind")
    try:
        config = default_config(kind)

        grid_table = _table(data, "grid")
        _reject_unknown(grid_table, GRID_KEYS, "grid")
        g = config.grid
        nx = int(grid_table.get("nx", g.nx))
        ny = int(grid_table.get("ny", g.ny))
        dx = parse_quantity(grid_table.get("dx", g.dx), key="grid.dx")
        dy = parse_quantity(grid_table.get("dy", dx), key="grid.dy")
        dt = parse_quantity(grid_table.get("dt", g.dt), key="grid.dt")
        if "origin" in grid_table:
            grid = GridSpec(nx, ny, dx, dy, dt, _pair(grid_table["origin"], "grid.origin"))
        else:
            x0 = parse_quantity(grid_table.get("x0", 0.0), key="grid.x0")
            grid = GridSpec.centered(nx, ny, dx, dy, dt, x0)

        packet = _fill(config.packet, _table(data, "packet"), "packet")
        k_magnitude = packet.k_magnitude
        geometry = _fill(config.geometry, _table(data, "geometry"), "geometry", k_magnitude)
        run = _fill(config.run, _table(data, "run"), "run")

        raw_potentials = data.get("potentials", [])
        if not isinstance(raw_potentials, list):
            raise ConfigError("'potentials' must be an array of tables", key="potentials")
        potentials = tuple(
            _resolve_potential(p, base_dir, f"potentials[{i}]")
            for i, p in enumerate(raw_potentials)
        )

        return replace(
            config,
            grid=grid,
            packet=packet,
            geometry=geometry,
            run=run,
            q=parse_quantity(data.get("q", config.q), key="q"),
            mass=parse_quantity(data.get("mass", config.mass), key="mass"),
            potentials=potentials,
            name=str(data.get("name", kind)),
        )
    except GaugeOpticsError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario configuration: {exc}") from exc


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    return scenario_from_dict(ConfigManager(path).load(), path.parent)


# --------------------------------------------------------------------------- #
# Gauges
# --------------------------------------------------------------------------- #
GAUGE_KEYS = {
    "identity": ("kind",),
    "constant": ("kind", "value"),
    "linear": ("kind", "cx", "cy", "ct", "c0"),
    "polynomial": ("kind", "coefficients", "origin", "scale"),
    "random_polynomial": (
        "kind", "seed", "count", "degree", "time_dependent",
        "origin", "scale", "amplitude",
    ),
}


def gauge_from_dict(decl: Mapping[str, Any], where: str = "gauges") -> List[GaugeFunction]:
    """
    Gauge functions of one declaration; ``random_polynomial`` with ``count``
    expands to consecutive seeds.
    """
    kind = decl.get("kind")
    if kind not in GAUGE_KEYS:
        raise ConfigError(f"unknown gauge kind '{kind}'", key=f"{where}.kind")
    _reject_unknown(decl, GAUGE_KEYS[kind], where)

    def number(name: str, default: float = 0.0) -> float:
        return parse_quantity(decl.get(name, default), key=f"{where}.{name}")

    try:
        if kind == "identity":
            return [GaugeFunction.identity_gauge()]
        if kind == "constant":
            return [GaugeFunction.constant(number("value"))]
        if kind == "linear":
            return [
                GaugeFunction.linear(
                    number("cx"), number("cy"), number("ct"), number("c0")
                )
            ]
        origin = tuple(float(v) for v in decl.get("origin", (0.0, 0.0, 0.0)))
        scale = tuple(float(v) for v in decl.get("scale", (1.0, 1.0, 1.0)))
        if kind == "polynomial":
            if "coefficients" not in decl:
                raise ConfigError(
                    "polynomial gauge needs 'coefficients'", key=f"{where}.coefficients"
                )
            return [GaugeFunction.polynomial(decl["coefficients"], origin, scale)]
        seed = int(decl.get("seed", 0))
        return [
            GaugeFunction.random_polynomial(
                seed + i,
                degree=int(decl.get("degree", 2)),
                time_dependent=bool(decl.get("time_dependent", True)),
                origin=origin,
                scale=scale,
                amplitude=number("amplitude", 1.0),
            )
            for i in range(int(decl.get("count", 1)))
        ]
    except GaugeOpticsError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} gauge: {exc}", key=where) from exc


def load_gauges(path: Union[str, Path]) -> List[GaugeFunction]:
    """Read the ``[[gauges]]`` array of a TOML file."""
    data = ConfigManager(path).load()
    _reject_unknown(data, ("gauges",), "")
    entries = data.get("gauges", [])
    if not isinstance(entries, list) or not entries:
        raise ConfigError("no [[gauges]] declared", key="gauges")
    gauges: List[GaugeFunction] = []
    for i, decl in enumerate(entries):
        gauges.extend(gauge_from_dict(decl, f"gauges[{i}]"))
    return gauges
