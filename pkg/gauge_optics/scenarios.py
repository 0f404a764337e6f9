#!/usr/bin/env python3
"""
scenarios.py

End-to-end interference experiments: geometry, potentials, propagation,
screen capture, gauge audit and parameter sweeps.

Scenario kinds
    • free              ... packet in empty space, single peak on the screen
    • double_slit       ... barrier with two slits
    • ab_solenoid       ... double slit with a thin solenoid shielded inside
                            the barrier between the slits
    • toroidal_channel  ... double slit whose arms continue through walled
                            channels of uniform vector potential

Geometry conventions
    The barrier occupies ``[barrier_x, barrier_x + barrier_thickness]``; its
    downstream face is snapped to a node column.  Slits are centred on
    ``y = ±d/2``.  The screen is the node column nearest to ``screen_x``; its
    intensity is the time-integrated probability current through the edges
    leaving that column toward +x.  The upper arm is the one at ``y > 0``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from gauge_optics.analysis import (
    FringeReport,
    compare_profiles,
    fringe_extract,
    unwrap_shifts,
    wrap_fringes,
)
from gauge_optics.eikonal import (
    RayPath,
    ab_phase_difference,
    eikonal_phase,
    fixed_gauge_wavevector,
)
from gauge_optics.errors import (
    ConfigError,
    GaugeOpticsError,
    InvariantViolation,
    UsageError,
)
from gauge_optics.potentials import (
    GaugeFunction,
    PotentialField,
    Region,
    apply_gauge,
    composite,
    field_from_dict,
    infinite_solenoid,
    uniform_channel,
)
from gauge_optics.wavesolver import (
    GridSpec,
    NodeMask,
    Propagator,
    WaveField,
    build_mask,
    gauge_rotate,
    init_packet,
)

logger = logging.getLogger(__name__)

KINDS = ("free", "double_slit", "ab_solenoid", "toroidal_channel")
CHANNEL_SPANS = ("arm", "interferometer")
DESK_K0 = 4.0 * math.pi


# --------------------------------------------------------------------------- #
# Configuration types
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class PacketSpec:
    center: Tuple[float, float] = (5.0, 0.0)
    sigma: float = 1.0
    k0: Tuple[float, float] = (DESK_K0, 0.0)

    @property
    def k_magnitude(self) -> float:
        return float(math.hypot(*self.k0))


@dataclass(frozen=True)
class GeometrySpec:
    barrier_x: float = 11.75
    barrier_thickness: float = 0.25
    slit_separation: float = 4.5
    slit_width: float = 0.6
    screen_x: float = 32.0
    solenoid_flux: float = 0.0
    solenoid_center: Optional[Tuple[float, float]] = None
    channel_a_upper: float = 0.0
    channel_a_lower: float = 0.0
    channel_length: float = 3.0
    channel_width: float = 1.0
    channel_span: str = "arm"


@dataclass(frozen=True)
class RunSettings:
    max_steps: int = 50_000
    crossing_fraction: float = 0.99
    trapped_fraction: float = 0.5
    absorber_width: int = 16
    absorber_strength: float = 0.05
    check_every: int = 10
    snapshot_every: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to reproduce one run.

    ``potentials`` holds extra field declarations (see
    :func:`gauge_optics.potentials.field_from_dict`) superposed on the
    scenario's own potentials.
    """

    kind: str
    grid: GridSpec
    packet: PacketSpec = field(default_factory=PacketSpec)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    run: RunSettings = field(default_factory=RunSettings)
    q: float = -1.0
    mass: float = 1.0
    potentials: Tuple[Mapping[str, Any], ...] = ()
    name: str = "scenario"

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        grid = self.grid.to_dict()
        grid.pop("stability_ratio", None)
        out["grid"] = grid
        out["potentials"] = [dict(p) for p in self.potentials]
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_geometry(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, geometry=replace(self.geometry, **changes))

    def with_packet(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, packet=replace(self.packet, **changes))

    def with_run(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, run=replace(self.run, **changes))

    @property
    def energy(self) -> float:
        """Central kinetic energy of the packet."""
        return self.packet.k_magnitude**2 / (2.0 * self.mass)

    @property
    def k0_four(self) -> np.ndarray:
        """``(E, k_x, k_y, 0)`` of the packet centre."""
        return np.array([self.energy, self.packet.k0[0], self.packet.k0[1], 0.0])


def default_config(kind: str = "double_slit") -> ScenarioConfig:
    """Desk-scale defaults: 768×512 grid, dx = 0.05, λ = 0.5, d = 4.5, L = 20."""
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario kind '{kind}'", key="kind")
    grid = GridSpec.centered(768, 512, 0.05, 0.05, 6.25e-4)
    packet = PacketSpec()
    if kind == "free":
        packet = PacketSpec(k0=(2.0, 0.0))
    return ScenarioConfig(kind=kind, grid=grid, packet=packet, name=kind)


# --------------------------------------------------------------------------- #
# Geometry
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class Geometry:
    grid: GridSpec
    mask: NodeMask
    field: PotentialField
    screen_index: int
    source_point: Tuple[float, float]
    sample_point: Tuple[float, float]
    upper_arm: Optional[RayPath] = None
    lower_arm: Optional[RayPath] = None
    channels: Tuple[Region, ...] = ()
    solenoid_center: Optional[Tuple[float, float]] = None
    barrier_face: Optional[float] = None

    @property
    def screen_distance(self) -> float:
        if self.barrier_face is None:
            return float("nan")
        return float(self.grid.x[self.screen_index] - self.barrier_face)


def validate_config(config: ScenarioConfig) -> None:
    """
    Check the scenario invariants that do not need the built geometry.

    :raises ConfigError: for unknown kinds or settings.
    :raises InvariantViolation: for inconsistent geometry.
    """
    if config.kind not in KINDS:
        raise ConfigError(f"unknown scenario kind '{config.kind}'", key="kind")
    geo = config.geometry
    grid = config.grid
    run = config.run
    if geo.channel_span not in CHANNEL_SPANS:
        raise ConfigError(
            f"channel_span must be one of {CHANNEL_SPANS}", key="geometry.channel_span"
        )
    if run.max_steps < 1 or run.check_every < 1:
        raise ConfigError("max_steps and check_every must be positive", key="run")
    if not 0.0 < run.crossing_fraction <= 1.0:
        raise ConfigError(
            "crossing_fraction must lie in (0, 1]", key="run.crossing_fraction"
        )
    finite = {
        "packet.k0": config.packet.k0,
        "packet.sigma": (config.packet.sigma,),
        "geometry.solenoid_flux": (geo.solenoid_flux,),
        "geometry.channel_a_upper": (geo.channel_a_upper,),
        "geometry.channel_a_lower": (geo.channel_a_lower,),
    }
    for key, values in finite.items():
        if not np.all(np.isfinite(values)):
            raise ConfigError(f"'{key}' must be finite", key=key)

    if config.kind != "free":
        if not geo.screen_x > geo.barrier_x + geo.barrier_thickness:
            raise InvariantViolation(
                "screen strictly downstream of barrier",
                f"screen at x = {geo.screen_x:g} is not strictly downstream of the "
                f"barrier ending at x = {geo.barrier_x + geo.barrier_thickness:g}",
            )
        if geo.slit_width <= 0 or geo.slit_separation <= geo.slit_width:
            raise InvariantViolation(
                "separate slits",
                "slit separation must exceed the slit width; widths must be positive",
            )
        if geo.barrier_thickness < 0:
            raise InvariantViolation(
                "geometry inside grid", "negative barrier thickness"
            )

    w = run.absorber_width
    x_lo, x_hi = grid.x[w], grid.x[grid.nx - 2 - w]
    y_lo, y_hi = grid.y[w], grid.y[grid.ny - 1 - w]
    if not x_lo < geo.screen_x < x_hi:
        raise InvariantViolation(
            "geometry inside grid",
            f"screen x = {geo.screen_x:g} outside the interior [{x_lo:g}, {x_hi:g}]",
        )
    if config.kind != "free":
        if not x_lo < geo.barrier_x:
            raise InvariantViolation(
                "geometry inside grid", f"barrier x = {geo.barrier_x:g} outside the grid"
            )
        reach = 0.5 * (geo.slit_separation + geo.slit_width)
        if config.kind == "toroidal_channel":
            reach = max(reach, 0.5 * (geo.slit_separation + geo.channel_width))
        if not (y_lo < -reach and reach < y_hi):
            raise InvariantViolation(
                "geometry inside grid",
                f"slits/channels reach |y| = {reach:g} beyond the interior",
            )


def _plaquette_center(grid: GridSpec, x: float, y: float) -> Tuple[float, float]:
    i = math.floor((x - grid.origin[0]) / grid.dx)
    j = math.floor((y - grid.origin[1]) / grid.dy)
    return (
        grid.origin[0] + (i + 0.5) * grid.dx,
        grid.origin[1] + (j + 0.5) * grid.dy,
    )


def build_geometry(config: ScenarioConfig) -> Geometry:
    """
    Walls, absorbing frame, potentials, screen column and arm polylines.
    """
    validate_config(config)
    grid = config.grid
    geo = config.geometry
    xs, ys = grid.x, grid.y
    walls = np.zeros((grid.nx, grid.ny), dtype=bool)
    fields: List[PotentialField] = []
    source = (float(config.packet.center[0]), float(config.packet.center[1]))
    screen_index = grid.column(geo.screen_x)
    end = (float(xs[screen_index]), 0.0)

    channels: List[Region] = []
    solenoid_center = None
    face = None
    upper = lower = None
    sample = end

    if config.kind != "free":
        i0 = grid.column(geo.barrier_x)
        i1 = grid.column(geo.barrier_x + geo.barrier_thickness)
        half_d = 0.5 * geo.slit_separation
        half_w = 0.5 * geo.slit_width
        upper_rows = np.abs(ys - half_d) < half_w
        lower_rows = np.abs(ys + half_d) < half_w
        if not (upper_rows.any() and lower_rows.any()):
            raise InvariantViolation(
                "slits resolved by grid", "a slit contains no node row"
            )
        walls[i0 : i1 + 1, :] = ~(upper_rows | lower_rows)[None, :]
        face = float(xs[i1])
        exit_x = face

        if config.kind == "ab_solenoid":
            if geo.solenoid_center is None:
                guess = (0.5 * (xs[i0] + xs[i1]), 0.0)
            else:
                guess = geo.solenoid_center
            solenoid_center = _plaquette_center(grid, *guess)
            ic = math.floor((solenoid_center[0] - grid.origin[0]) / grid.dx)
            jc = math.floor((solenoid_center[1] - grid.origin[1]) / grid.dy)
            if not (
                0 <= ic < grid.nx - 1
                and 0 <= jc < grid.ny - 1
                and walls[ic : ic + 2, jc : jc + 2].all()
            ):
                raise InvariantViolation(
                    "solenoid fully enclosed by wall mask",
                    f"solenoid at {solenoid_center} is not shielded by the barrier",
                )
            fields.append(infinite_solenoid(solenoid_center, geo.solenoid_flux))

        if config.kind == "toroidal_channel":
            ie = grid.column(face + geo.channel_length)
            exit_x = float(xs[ie])
            if not ie > i1:
                raise InvariantViolation(
                    "solenoid/channel fully enclosed by wall mask",
                    "channel shorter than one cell",
                )
            if not exit_x < xs[screen_index]:
                raise InvariantViolation(
                    "screen strictly downstream of barrier",
                    f"channel exit x = {exit_x:g} is not upstream of the screen",
                )
            if geo.channel_span == "arm":
                spans = (
                    (half_d, upper_rows, geo.channel_a_upper),
                    (-half_d, lower_rows, geo.channel_a_lower),
                )
            else:
                spans = ((0.0, upper_rows | lower_rows, geo.channel_a_upper),)
            bounds = []
            for yc, open_rows, a in spans:
                if geo.channel_span == "arm":
                    j_lo = grid.row(yc - 0.5 * geo.channel_width)
                    j_hi = grid.row(yc + 0.5 * geo.channel_width)
                else:
                    j_lo = grid.row(-half_d - 0.5 * geo.channel_width)
                    j_hi = grid.row(half_d + 0.5 * geo.channel_width)
                rows = np.flatnonzero(open_rows)
                if not (j_lo < rows.min() and rows.max() < j_hi):
                    raise InvariantViolation(
                        "solenoid/channel fully enclosed by wall mask",
                        f"channel rows [{j_lo}, {j_hi}] do not enclose the slit",
                    )
                walls[i1 : ie + 1, j_lo] = True
                walls[i1 : ie + 1, j_hi] = True
                region = Region(float(xs[i1]), exit_x, float(ys[j_lo]), float(ys[j_hi]))
                channels.append(region)
                bounds.append((j_lo, j_hi))
                fields.append(uniform_channel(region, (a, 0.0)))
            if len(bounds) == 2 and not bounds[1][1] < bounds[0][0]:
                raise InvariantViolation(
                    "solenoid/channel fully enclosed by wall mask",
                    "upper and lower channels overlap",
                )

        up = [source, (face, half_d)]
        down = [source, (face, -half_d)]
        if exit_x > face:
            up.append((exit_x, half_d))
            down.append((exit_x, -half_d))
        upper = RayPath(np.array(up + [end]), "upper")
        lower = RayPath(np.array(down + [end]), "lower")
        if channels:
            sample = (channels[0].center[0], half_d)
        else:
            sample = (0.5 * (face + end[0]), 0.5 * half_d)

    for i, decl in enumerate(config.potentials):
        fields.append(field_from_dict(decl, f"potentials[{i}]"))

    run = config.run
    mask = build_mask(grid, walls, run.absorber_width, run.absorber_strength)
    if mask.walls[screen_index : screen_index + 2, :].any():
        raise InvariantViolation(
            "screen strictly downstream of barrier", "screen column intersects walls"
        )
    return Geometry(
        grid=grid,
        mask=mask,
        field=composite(*fields),
        screen_index=screen_index,
        source_point=source,
        sample_point=sample,
        upper_arm=upper,
        lower_arm=lower,
        channels=tuple(channels),
        solenoid_center=solenoid_center,
        barrier_face=face,
    )


# --------------------------------------------------------------------------- #
# Single run
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class Snapshot:
    step: int
    time: float
    density: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config_hash: str
    y: np.ndarray
    profile: np.ndarray
    steps: int
    time: float
    crossed: float
    upstream: float
    stopped_by: str
    norm_history: Tuple[Tuple[int, float], ...]
    snapshots: Tuple[Snapshot, ...]
    final_density: np.ndarray
    warnings: Tuple[str, ...] = ()
    clipped_flux: float = 0.0
    gauge_label: str = "identity"
    screen_x: float = float("nan")
    final_state: Optional[WaveField] = None

    @property
    def trapped(self) -> bool:
        return any(w.startswith("probability trapped") for w in self.warnings)

    def metadata(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "steps": self.steps,
            "time": self.time,
            "crossed": self.crossed,
            "upstream": self.upstream,
            "stopped_by": self.stopped_by,
            "screen_x": self.screen_x,
            "gauge": self.gauge_label,
            "clipped_flux": self.clipped_flux,
            "warnings": list(self.warnings),
            "norm_history": [list(item) for item in self.norm_history],
        }


def run_scenario(
    config: ScenarioConfig,
    gauge: Optional[GaugeFunction] = None,
    forced_steps: Optional[int] = None,
    snapshot_every: Optional[int] = None,
    workers: int = 1,
    cancel_event: Optional[threading.Event] = None,
    keep_state: bool = False,
) -> SimulationResult:
    """
    Propagate the scenario and record the screen profile.

    The run stops once the probability that crossed the screen reaches
    ``crossing_fraction`` of (crossed + still upstream), or after
    ``max_steps``.  ``forced_steps`` replaces the stopping rule by a fixed
    step count.  With ``gauge`` the potentials and initial state are
    transformed consistently.

    :raises InstabilityError: on non-finite amplitudes.
    """
    geometry = build_geometry(config)
    grid = geometry.grid
    q, mass = config.q, config.mass
    settings = config.run
    if snapshot_every is None:
        snapshot_every = settings.snapshot_every

    potentials = geometry.field
    state = init_packet(
        grid, config.packet.center, config.packet.sigma, config.packet.k0, geometry.mask
    )
    if gauge is not None and not gauge.identity:
        potentials = apply_gauge(potentials, gauge, q)
        state = gauge_rotate(state, gauge, q)

    i_s = geometry.screen_index
    x_s, x_n = grid.x[i_s], grid.x[i_s + 1]
    ys = grid.y

    def screen_theta(t: float) -> np.ndarray:
        return q * potentials.line_integral(
            np.full(ys.shape, x_s), ys, np.full(ys.shape, x_n), ys, t
        )

    def screen_current(psi: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.imag(np.conj(psi[i_s]) * np.exp(-1j * theta) * psi[i_s + 1]) / (
            mass * grid.dx
        )

    def upstream_mass(psi: np.ndarray) -> float:
        return float(np.sum(np.abs(psi[: i_s + 1]) ** 2) * grid.cell_area)

    theta = screen_theta(0.0)
    current = screen_current(state.psi, theta)
    profile = np.zeros(grid.ny)
    norms: List[Tuple[int, float]] = [(0, state.norm())]
    snapshots: List[Snapshot] = []
    limit = forced_steps if forced_steps is not None else settings.max_steps
    stopped_by = "forced" if forced_steps is not None else "max_steps"

    logger.info(
        "Running %s (%s) on %d×%d grid, gauge %s",
        config.name,
        config.kind,
        grid.nx,
        grid.ny,
        "identity" if gauge is None else gauge.label,
    )
    with Propagator(potentials, grid, geometry.mask, q, mass, workers) as prop:
        while state.steps < limit:
            if cancel_event is not None and cancel_event.is_set():
                stopped_by = "cancelled"
                break
            state = prop.step(state)
            if not potentials.static:
                theta = screen_theta(state.time)
            new_current = screen_current(state.psi, theta)
            profile += 0.5 * grid.dt * (current + new_current)
            current = new_current

            if snapshot_every and state.steps % snapshot_every == 0:
                snapshots.append(Snapshot(state.steps, state.time, state.density))
            if state.steps % settings.check_every == 0:
                norms.append((state.steps, state.norm()))
                if forced_steps is None:
                    crossed = float(np.sum(profile) * grid.dy)
                    remaining = upstream_mass(state.psi)
                    if crossed > 0 and crossed >= settings.crossing_fraction * (
                        crossed + remaining
                    ):
                        stopped_by = "crossing"
                        break
                if state.steps % (50 * settings.check_every) == 0:
                    logger.debug("step %d: norm %.10f", state.steps, norms[-1][1])

    if norms[-1][0] != state.steps:
        norms.append((state.steps, state.norm()))
    crossed = float(np.sum(profile) * grid.dy)
    remaining = upstream_mass(state.psi)

    warnings: List[str] = []
    if stopped_by == "max_steps":
        warnings.append(f"max_steps reached after {state.steps} steps")
    if crossed < settings.trapped_fraction * (crossed + remaining):
        message = (
            f"probability trapped: only {crossed:.3g} of {crossed + remaining:.3g} "
            "surviving probability reached the screen"
        )
        warnings.append(message)
        logger.warning(message)

    negative = profile < 0.0
    clipped = float(-np.sum(profile[negative]) * grid.dy)
    if clipped > 1e-3 * max(crossed, 1e-300):
        message = f"clipped {clipped:.3g} of backward flux at the screen"
        warnings.append(message)
        logger.warning(message)
    profile = np.where(negative, 0.0, profile)

    logger.info(
        "Finished after %d steps (%s): %.4f crossed the screen",
        state.steps,
        stopped_by,
        crossed,
    )
    return SimulationResult(
        config_hash=config.config_hash(),
        y=ys.copy(),
        profile=profile,
        steps=state.steps,
        time=state.time,
        crossed=crossed,
        upstream=remaining,
        stopped_by=stopped_by,
        norm_history=tuple(norms),
        snapshots=tuple(snapshots),
        final_density=state.density,
        warnings=tuple(warnings),
        clipped_flux=clipped,
        gauge_label="identity" if gauge is None else gauge.label,
        screen_x=float(x_s),
        final_state=state if keep_state else None,
    )


def _run_all(
    jobs: Sequence[Callable[[], Any]], workers: int
) -> List[Any]:
    """Run independent jobs; results come back in submission order."""
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: job(), jobs))


# --------------------------------------------------------------------------- #
# Gauge audit
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class AuditReport:
    kind: str
    config_hash: str
    steps: int
    branches: Tuple[Dict[str, Any], ...]
    max_density_deviation: float
    max_profile_deviation: float
    failed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "steps": self.steps,
            "max_density_deviation": self.max_density_deviation,
            "max_profile_deviation": self.max_profile_deviation,
            "failed": self.failed,
            "branches": list(self.branches),
        }


def _eikonal_record(
    geometry: Geometry, potentials: PotentialField, config: ScenarioConfig
) -> Dict[str, Any]:
    if geometry.upper_arm is None or geometry.lower_arm is None:
        return {}
    try:
        upper = eikonal_phase(
            geometry.upper_arm, potentials, config.energy, config.q, config.mass
        )
        lower = eikonal_phase(
            geometry.lower_arm, potentials, config.energy, config.q, config.mass
        )
    except GaugeOpticsError as exc:
        return {"eikonal_error": exc.to_dict()}
    return {
        "eikonal_upper": upper.to_dict("upper"),
        "eikonal_lower": lower.to_dict("lower"),
        "eikonal_loop_phase": upper.s_total - lower.s_total,
    }


def _branch_record(
    config: ScenarioConfig,
    geometry: Geometry,
    gauge: GaugeFunction,
    result: Optional[SimulationResult],
    base: Optional[SimulationResult],
    error: Optional[GaugeOpticsError],
) -> Dict[str, Any]:
    q = config.q
    potentials = apply_gauge(geometry.field, gauge, q)
    sample = geometry.sample_point
    source = geometry.source_point
    k_identity = fixed_gauge_wavevector(geometry.field, source, sample, config.k0_four, q)
    k_lab = fixed_gauge_wavevector(
        potentials, source, sample, config.k0_four, q, reference_field=geometry.field
    )
    k_repinned = fixed_gauge_wavevector(potentials, source, sample, config.k0_four, q)
    gx, gy = gauge.gradient(sample[0], sample[1], 0.0)
    gt = gauge.time_derivative(sample[0], sample[1], 0.0)
    expected = np.array([q * float(gt), -q * float(gx), -q * float(gy), 0.0])
    delta = k_lab - k_identity

    record: Dict[str, Any] = {
        "gauge": gauge.label,
        "spec": dict(gauge.spec),
        "failed": error is not None,
        "fixed_gauge_point": list(sample),
        "fixed_gauge_wavevector_lab_pinned": k_lab.tolist(),
        "fixed_gauge_wavevector_repinned": k_repinned.tolist(),
        "fixed_gauge_delta": delta.tolist(),
        "fixed_gauge_expected_delta": expected.tolist(),
        "fixed_gauge_delta_error": float(np.max(np.abs(delta - expected))),
    }
    record.update(_eikonal_record(geometry, potentials, config))
    if error is not None:
        record["error"] = error.to_dict()
        return record
    if result is None or base is None:
        return record

    densities = [
        float(np.max(np.abs(s.density - b.density)))
        for s, b in zip(result.snapshots, base.snapshots)
    ]
    final = np.abs(result.final_density - base.final_density)
    densities.append(float(np.max(final)))
    comparison = compare_profiles(base.y, base.profile, result.y, result.profile)
    record.update(
        {
            "steps": result.steps,
            "snapshot_density_deviation": densities,
            "max_density_deviation": max(densities),
            "profile": comparison.to_dict(),
            "profile_raw_max_abs_dev": float(
                np.max(np.abs(result.profile - base.profile))
            ),
            "warnings": list(result.warnings),
        }
    )
    return record


def gauge_audit(
    config: ScenarioConfig,
    gauges: Sequence[GaugeFunction],
    snapshot_every: Optional[int] = None,
    workers: int = 1,
) -> AuditReport:
    """
    Run the scenario once per gauge and compare everything with the identity.

    The identity branch runs first and fixes the step count for every other
    branch.  A failing branch is reported with its error instead of aborting
    the audit.
    """
    geometry = build_geometry(config)
    branches = [GaugeFunction.identity_gauge()]
    branches += [g for g in gauges if not g.identity]

    try:
        base: Optional[SimulationResult] = run_scenario(
            config, None, snapshot_every=snapshot_every
        )
        base_error: Optional[GaugeOpticsError] = None
    except GaugeOpticsError as exc:
        logger.error("identity branch failed: %s", exc)
        base, base_error = None, exc

    def job(gauge: GaugeFunction) -> Callable[[], Any]:
        def run() -> Tuple[Optional[SimulationResult], Optional[GaugeOpticsError]]:
            try:
                return (
                    run_scenario(
                        config,
                        gauge,
                        forced_steps=base.steps,
                        snapshot_every=snapshot_every,
                    ),
                    None,
                )
            except GaugeOpticsError as exc:
                logger.error("gauge branch %s failed: %s", gauge.label, exc)
                return None, exc

        return run

    if base is not None:
        outcomes = _run_all([job(g) for g in branches[1:]], workers)
    else:
        outcomes = [(None, None)] * (len(branches) - 1)

    records = [_branch_record(config, geometry, branches[0], base, base, base_error)]
    for gauge, (result, error) in zip(branches[1:], outcomes):
        records.append(_branch_record(config, geometry, gauge, result, base, error))

    density_devs = [r.get("max_density_deviation", 0.0) for r in records]
    profile_devs = [r["profile"]["max_abs_dev"] for r in records if "profile" in r]
    failed = any(r["failed"] for r in records)
    logger.info(
        "Audit over %d gauges: max |ψ|² deviation %.3e, max profile deviation %.3e",
        len(records),
        max(density_devs),
        max(profile_devs) if profile_devs else float("nan"),
    )
    return AuditReport(
        kind=config.kind,
        config_hash=config.config_hash(),
        steps=base.steps if base is not None else 0,
        branches=tuple(records),
        max_density_deviation=float(max(density_devs)),
        max_profile_deviation=(
            float(max(profile_devs)) if profile_devs else float("nan")
        ),
        failed=failed,
    )


# --------------------------------------------------------------------------- #
# Sweeps
# --------------------------------------------------------------------------- #
# sweep.csv column -> SweepRow attribute
SWEEP_COLUMNS = {
    "value": "value",
    "fullwave_spacing": "fullwave_spacing",
    "fullwave_shift": "fullwave_shift",
    "papertrack_spacing": "fixed_gauge_spacing",
    "papertrack_wavelength": "fixed_gauge_wavelength",
}


@dataclass(frozen=True)
class SweepRow:
    value: float
    fullwave_spacing: float
    fullwave_shift: float
    fixed_gauge_spacing: float
    fixed_gauge_wavelength: float
    extras: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepReport:
    param: str
    rows: Tuple[SweepRow, ...]
    reference_value: float
    baseline: Dict[str, Any]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[getattr(r, attr) for attr in SWEEP_COLUMNS.values()] for r in self.rows],
            columns=list(SWEEP_COLUMNS),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "param": self.param,
            "reference_value": self.reference_value,
            "baseline": self.baseline,
            "rows": [asdict(r) for r in self.rows],
        }


def fixed_gauge_prediction(
    config: ScenarioConfig, geometry: Geometry
) -> Tuple[float, float, np.ndarray]:
    """
    Fixed-gauge wavevector at the sample point and the fringe spacing and
    wavelength it implies: ``λ = 2π/k_x``, spacing ``λ·L/d``.
    """
    k = fixed_gauge_wavevector(
        geometry.field,
        geometry.source_point,
        geometry.sample_point,
        config.k0_four,
        config.q,
    )
    wavelength = 2.0 * math.pi / k[1]
    spacing = wavelength * geometry.screen_distance / config.geometry.slit_separation
    return float(spacing), float(wavelength), k


def _eikonal_shift(config: ScenarioConfig, geometry: Geometry) -> float:
    loop = ab_phase_difference(
        geometry.upper_arm,
        geometry.lower_arm,
        geometry.field,
        config.energy,
        config.q,
        config.mass,
    )
    return wrap_fringes(loop / (2.0 * math.pi))


def _sweep(
    param: str,
    configs: Sequence[ScenarioConfig],
    values: Sequence[float],
    reference_index: int,
    force_steps: bool,
    workers: int,
    eikonal: bool,
) -> SweepReport:
    for cfg in configs:
        validate_config(cfg)
    reference_cfg = configs[reference_index]
    reference = run_scenario(reference_cfg)
    ref_report = fringe_extract(reference.y, reference.profile)
    forced = reference.steps if force_steps else None

    def job(cfg: ScenarioConfig) -> Callable[[], SimulationResult]:
        return lambda: run_scenario(cfg, forced_steps=forced)

    others = [i for i in range(len(configs)) if i != reference_index]
    results: Dict[int, SimulationResult] = {reference_index: reference}
    for i, res in zip(others, _run_all([job(configs[i]) for i in others], workers)):
        results[i] = res

    rows = []
    raw_shifts = []
    for i, (cfg, value) in enumerate(zip(configs, values)):
        res = results[i]
        report = fringe_extract(res.y, res.profile, reference=ref_report)
        geometry = build_geometry(cfg)
        spacing, wavelength, k = fixed_gauge_prediction(cfg, geometry)
        extras: Dict[str, Any] = {
            "fringe": report.to_dict(),
            "steps": res.steps,
            "warnings": list(res.warnings),
            "fixed_gauge_wavevector": k.tolist(),
        }
        if eikonal:
            extras["eikonal_shift"] = _eikonal_shift(cfg, geometry)
        raw_shifts.append(report.shift_vs_reference)
        rows.append((value, report, spacing, wavelength, extras))

    shifts = unwrap_shifts(raw_shifts)
    return SweepReport(
        param=param,
        rows=tuple(
            SweepRow(
                value=float(value),
                fullwave_spacing=report.fringe_spacing,
                fullwave_shift=float(shift),
                fixed_gauge_spacing=spacing,
                fixed_gauge_wavelength=wavelength,
                extras=extras,
            )
            for (value, report, spacing, wavelength, extras), shift in zip(rows, shifts)
        ),
        reference_value=float(values[reference_index]),
        baseline=ref_report.to_dict(),
    )


def _reference_index(values: Sequence[float]) -> int:
    for i, v in enumerate(values):
        if v == 0.0:
            return i
    return 0


def flux_sweep(
    config: ScenarioConfig, fluxes: Sequence[float], workers: int = 1
) -> SweepReport:
    """
    Fringe shift versus solenoid flux, relative to the zero-flux run (or the
    first value).  Shifts are unwrapped along the given order.
    """
    if config.kind != "ab_solenoid":
        raise UsageError("flux sweeps need an ab_solenoid scenario")
    if len(fluxes) < 2:
        raise UsageError("a flux sweep needs at least two values")
    configs = [config.with_geometry(solenoid_flux=float(f)) for f in fluxes]
    reference = _reference_index(fluxes)
    return _sweep("flux", configs, fluxes, reference, True, workers, True)


def momentum_sweep(
    config: ScenarioConfig, k_values: Sequence[float], workers: int = 1
) -> SweepReport:
    """Vary |k0| along the packet's direction of motion."""
    if config.kind == "free":
        raise UsageError("momentum sweeps need an interferometer scenario")
    if len(k_values) < 2:
        raise UsageError("a k0 sweep needs at least two values")
    kx, ky = config.packet.k0
    norm = math.hypot(kx, ky)
    if norm == 0.0:
        raise UsageError("k0 sweeps need a nonzero packet momentum direction")
    configs = [
        config.with_packet(k0=(float(k) * kx / norm, float(k) * ky / norm))
        for k in k_values
    ]
    return _sweep("k0", configs, k_values, 0, False, workers, False)


# --------------------------------------------------------------------------- #
# Toroidal-channel experiment
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class EffectReport:
    rows: Tuple[Dict[str, Any], ...]
    baseline: Dict[str, Any]
    single_arm: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": self.baseline,
            "single_arm": self.single_arm,
            "rows": list(self.rows),
        }

    def to_sweep(self) -> SweepReport:
        return SweepReport(
            param="channel_a",
            rows=tuple(
                SweepRow(
                    value=r["a"],
                    fullwave_spacing=r["fullwave_spacing"],
                    fullwave_shift=r["fullwave_shift"],
                    fixed_gauge_spacing=r["fixed_gauge_spacing"],
                    fixed_gauge_wavelength=r["fixed_gauge_wavelength"],
                    extras={
                        k: v for k, v in r.items() if k not in SWEEP_COLUMNS.values()
                    },
                )
                for r in self.rows
            ),
            reference_value=0.0,
            baseline=self.baseline,
        )


def toroidal_effect_experiment(
    base: ScenarioConfig,
    a_values: Sequence[float],
    workers: int = 1,
    single_arm: bool = True,
    tolerance: float = 0.05,
) -> EffectReport:
    """
    Channel-strength sweep comparing the full-wave and fixed-gauge tracks.

    For every ``a``: (i) a run with identical channels ``a`` on both arms,
    measured against ``a = 0``; (ii) the fixed-gauge in-channel wavelength
    ``2π/k_x`` and the fringe spacing it implies; (iii) optionally a run with
    the channel on the upper arm only, whose shift is compared with the
    eikonal arm phase difference.
    """
    if base.kind != "toroidal_channel":
        raise UsageError("the channel experiment needs a toroidal_channel scenario")
    values = [float(a) for a in a_values]
    if 0.0 not in values:
        raise UsageError("channel strengths must include 0")

    baseline_cfg = base.with_geometry(channel_a_upper=0.0, channel_a_lower=0.0)
    baseline = run_scenario(baseline_cfg)
    ref = fringe_extract(baseline.y, baseline.profile)

    both_cfgs = [
        base.with_geometry(channel_a_upper=a, channel_a_lower=a) for a in values
    ]
    single_cfgs = (
        [base.with_geometry(channel_a_upper=a, channel_a_lower=0.0) for a in values]
        if single_arm
        else []
    )
    for cfg in both_cfgs + single_cfgs:
        validate_config(cfg)

    def job(cfg: ScenarioConfig) -> Callable[[], SimulationResult]:
        return lambda: run_scenario(cfg, forced_steps=baseline.steps)

    results = _run_all([job(c) for c in both_cfgs + single_cfgs], workers)
    both_results = results[: len(values)]
    single_results = results[len(values) :]

    rows = []
    for i, a in enumerate(values):
        res = both_results[i]
        report = fringe_extract(res.y, res.profile, reference=ref)
        comparison = compare_profiles(baseline.y, baseline.profile, res.y, res.profile)
        geometry = build_geometry(both_cfgs[i])
        spacing, wavelength, k = fixed_gauge_prediction(both_cfgs[i], geometry)
        row: Dict[str, Any] = {
            "a": a,
            "fullwave_spacing": report.fringe_spacing,
            "fullwave_spacing_delta": report.fringe_spacing - ref.fringe_spacing,
            "fullwave_shift": report.shift_vs_reference,
            "fullwave_max_abs_dev": comparison.max_abs_dev,
            "fixed_gauge_kx": float(k[1]),
            "fixed_gauge_wavelength": wavelength,
            "fixed_gauge_spacing": spacing,
        }
        if single_arm:
            single = single_results[i]
            single_report = fringe_extract(single.y, single.profile, reference=ref)
            single_geometry = build_geometry(single_cfgs[i])
            predicted = _eikonal_shift(single_cfgs[i], single_geometry)
            mismatch = wrap_fringes(single_report.shift_vs_reference - predicted)
            row.update(
                {
                    "single_arm_shift": single_report.shift_vs_reference,
                    "eikonal_single_arm_shift": predicted,
                    "single_arm_consistent": abs(mismatch) <= tolerance,
                }
            )
        rows.append(row)
        logger.info(
            "channel a = %g: spacing %.6f, fixed-gauge wavelength %.6f",
            a,
            report.fringe_spacing,
            wavelength,
        )

    return EffectReport(
        rows=tuple(rows), baseline=ref.to_dict(), single_arm=single_arm
    )
