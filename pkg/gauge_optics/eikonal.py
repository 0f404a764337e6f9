#!/usr/bin/env python3
"""
eikonal.py

Semiclassical phase integrals along straight-segment paths.

Conventions (signed charge q, ħ = c = 1)
    • non-relativistic   S = ∫ [√(2m(E - qΦ)) + q A·t̂] dl
    • energy eigenstate  S = ∫ [√((E - qΦ)² - m²) + q A·t̂] dl
    • covariant          ΔG = -∫ (qA_μ + m t_μ) dx^μ, metric (+,-,-,-),
                         A_μ = (Φ, -A)
    • fixed gauge        k^μ(x) = k0^μ - q[A^μ(x) - A^μ(source)], A^μ = (Φ, A)

Under ``A -> A + ∇G`` the non-relativistic phase shifts by q(G_end - G_start),
so phase differences between paths with shared endpoints are gauge invariant.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

from gauge_optics.errors import (
    ForbiddenRegionError,
    PathMismatchError,
    SpacelikeSegmentError,
    TurningPointError,
)
from gauge_optics.potentials import PotentialField
from gauge_optics.wavesolver import GridSpec, WaveField, edge_currents, build_links

logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-10
QUAD_LIMIT = 200
AMPLITUDE_THRESHOLD = 1e-8
ENDPOINT_TOL = 1e-12


# --------------------------------------------------------------------------- #
# Paths
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class RayPath:
    """
    Polyline of 2-points ``(x, y)`` or 4-points ``(t, x, y, z)``.
    """

    vertices: np.ndarray
    label: str = "path"

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (2, 4) or v.shape[0] < 2:
            raise ValueError("a path needs at least two 2D or 4D vertices")
        if np.any(np.all(np.diff(v, axis=0) == 0.0, axis=1)):
            raise ValueError("consecutive path vertices must be distinct")
        object.__setattr__(self, "vertices", v)

    @property
    def spacetime(self) -> bool:
        return self.vertices.shape[1] == 4

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    @property
    def n_segments(self) -> int:
        return self.vertices.shape[0] - 1

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices[:-1], self.vertices[1:]

    def lengths(self) -> np.ndarray:
        """Euclidean lengths of the spatial part of each segment."""
        p0, p1 = self.segments()
        space = slice(1, 4) if self.spacetime else slice(0, 2)
        return np.linalg.norm(p1[:, space] - p0[:, space], axis=1)

    def tangents(self) -> np.ndarray:
        """Unit spatial tangent t̂ per segment (2D paths)."""
        p0, p1 = self.segments()
        d = p1 - p0
        return d / np.linalg.norm(d, axis=1)[:, None]

    def reversed(self) -> "RayPath":
        return RayPath(self.vertices[::-1].copy(), f"{self.label}-reversed")

    def concat(self, other: "RayPath") -> "RayPath":
        if not np.allclose(self.end, other.start, rtol=0.0, atol=ENDPOINT_TOL):
            raise PathMismatchError(
                f"cannot join {self.label} ending at {self.end.tolist()} with "
                f"{other.label} starting at {other.start.tolist()}"
            )
        return RayPath(
            np.vstack([self.vertices, other.vertices[1:]]),
            f"{self.label}+{other.label}",
        )


@dataclass(frozen=True)
class EikonalSolution:
    """
    Phase accumulated along a path.

    ``s_total`` is the sum of ``segments``; each segment is ``kinetic + gauge``.
    ``wavevectors`` holds the local canonical wavevector at segment midpoints.
    """

    s_total: float
    segments: Tuple[float, ...]
    kinetic: Tuple[float, ...]
    gauge: Tuple[float, ...]
    wavevectors: np.ndarray
    extras: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_parts(
        cls,
        kinetic: Sequence[float],
        gauge: Sequence[float],
        wavevectors: np.ndarray,
        **extras: Any,
    ) -> "EikonalSolution":
        segments = tuple(float(k + g) for k, g in zip(kinetic, gauge))
        return cls(
            s_total=float(sum(segments)),
            segments=segments,
            kinetic=tuple(float(k) for k in kinetic),
            gauge=tuple(float(g) for g in gauge),
            wavevectors=np.asarray(wavevectors, dtype=float),
            extras=dict(extras),
        )

    def to_dict(self, path_id: str) -> Dict[str, Any]:
        return {
            "path_id": path_id,
            "S_total": self.s_total,
            "per_segment": list(self.segments),
            "kinetic": list(self.kinetic),
            "gauge": list(self.gauge),
            **self.extras,
        }


# --------------------------------------------------------------------------- #
# Local wavenumbers
# --------------------------------------------------------------------------- #
def local_wavenumber(
    energy: float,
    phi: float,
    q: float = -1.0,
    mass: float = 1.0,
    relativistic: bool = False,
) -> float:
    """
    Kinetic wavenumber at a point of potential Φ.

    Non-relativistic ``√(2m(E - qΦ))``; relativistic ``√((E - qΦ)² - m²)``
    with E the total energy.
    """
    if relativistic:
        arg = (energy - q * phi) ** 2 - mass**2
        if arg < 0.0:
            raise ForbiddenRegionError(
                f"(E - qΦ)² - m² = {arg:.6g} < 0 (below the mass shell)",
                energy=energy,
                phi=phi,
            )
    else:
        arg = 2.0 * mass * (energy - q * phi)
        if arg < 0.0:
            raise TurningPointError(
                f"2m(E - qΦ) = {arg:.6g} < 0 (classically forbidden)",
                energy=energy,
                phi=phi,
            )
    return math.sqrt(arg)


def kinetic_energy_from_speed(v: float, mass: float = 1.0) -> float:
    """Relativistic kinetic energy ``m(1/√(1 - v²) - 1)``."""
    if not 0.0 <= abs(v) < 1.0:
        raise ValueError("speed must lie in [0, 1)")
    return mass * (1.0 / math.sqrt(1.0 - v * v) - 1.0)


def _segment_kinetic(
    field: PotentialField,
    p0: np.ndarray,
    p1: np.ndarray,
    wavenumber,
    time: float,
) -> float:
    length = float(np.hypot(*(p1 - p0)))

    def integrand(s: float) -> float:
        x, y = p0 + s * (p1 - p0)
        return wavenumber(float(field.phi(x, y, time)))

    # endpoints first so a forbidden vertex is reported even if quad skips it
    integrand(0.0)
    integrand(1.0)
    value, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return value * length


def _spatial_phase(
    path: RayPath,
    field: PotentialField,
    q: float,
    time: float,
    wavenumber,
) -> Tuple[list, list, np.ndarray]:
    if path.spacetime:
        raise ValueError("spatial eikonal phases need a 2D path")
    p0s, p1s = path.segments()
    lengths = path.lengths()
    tangents = path.tangents()
    kinetic = []
    for p0, p1, length in zip(p0s, p1s, lengths):
        if field.scalar_free:
            kinetic.append(wavenumber(0.0) * length)
        else:
            kinetic.append(_segment_kinetic(field, p0, p1, wavenumber, time))
    gauge = q * field.line_integral(p0s[:, 0], p0s[:, 1], p1s[:, 0], p1s[:, 1], time)

    mids = 0.5 * (p0s + p1s)
    ax, ay = field.a_vec(mids[:, 0], mids[:, 1], time)
    phis = field.phi(mids[:, 0], mids[:, 1], time)
    k_mag = np.array([wavenumber(float(p)) for p in np.atleast_1d(phis)])
    wavevectors = tangents * k_mag[:, None] + q * np.column_stack([ax, ay])
    return kinetic, list(np.atleast_1d(gauge)), wavevectors


# --------------------------------------------------------------------------- #
# Phase integrals
# --------------------------------------------------------------------------- #
def eikonal_phase(
    path: RayPath,
    field: PotentialField,
    energy: float,
    q: float = -1.0,
    mass: float = 1.0,
    time: float = 0.0,
) -> EikonalSolution:
    """
    Non-relativistic eikonal phase ``∫ [√(2m(E - qΦ)) + q A·t̂] dl``.

    The kinetic part is analytic when Φ ≡ 0 and adaptive quadrature otherwise;
    the gauge part uses the field's exact line integrals.

    :raises TurningPointError: where 2m(E - qΦ) < 0 on the path.
    """

    def wavenumber(phi: float) -> float:
        return local_wavenumber(energy, phi, q, mass, relativistic=False)

    kinetic, gauge, k = _spatial_phase(path, field, q, time, wavenumber)
    return EikonalSolution.from_parts(kinetic, gauge, k, energy=energy)


def energy_eigen_eikonal(
    path: RayPath,
    field: PotentialField,
    total_energy: float,
    mass: float = 1.0,
    q: float = -1.0,
    time: float = 0.0,
) -> EikonalSolution:
    """
    Relativistic spatial phase for an energy eigenstate (∂G/∂t = E fixed).

    :raises ForbiddenRegionError: where (E - qΦ)² < m².
    """

    def wavenumber(phi: float) -> float:
        return local_wavenumber(total_energy, phi, q, mass, relativistic=True)

    kinetic, gauge, k = _spatial_phase(path, field, q, time, wavenumber)
    p0 = path.start
    e_local = total_energy - q * float(field.phi(p0[0], p0[1], time))
    speed = wavenumber(float(field.phi(p0[0], p0[1], time))) / e_local
    return EikonalSolution.from_parts(
        kinetic,
        gauge,
        k,
        total_energy=total_energy,
        start_speed=speed,
        start_kinetic_energy=kinetic_energy_from_speed(speed, mass),
    )


def ab_phase_difference(
    path1: RayPath,
    path2: RayPath,
    field: PotentialField,
    energy: float,
    q: float = -1.0,
    mass: float = 1.0,
    time: float = 0.0,
) -> float:
    """
    ``S(path1) - S(path2)`` for two paths with common endpoints.

    With ``path1`` passing above a solenoid and ``path2`` below it, the result
    is ``-q·flux``, i.e. 2π times the fringe shift toward +y.
    """
    if not (
        np.allclose(path1.start, path2.start, rtol=0.0, atol=ENDPOINT_TOL)
        and np.allclose(path1.end, path2.end, rtol=0.0, atol=ENDPOINT_TOL)
    ):
        raise PathMismatchError(
            "paths do not share endpoints: "
            f"{path1.start.tolist()}->{path1.end.tolist()} vs "
            f"{path2.start.tolist()}->{path2.end.tolist()}"
        )
    s1 = eikonal_phase(path1, field, energy, q, mass, time)
    s2 = eikonal_phase(path2, field, energy, q, mass, time)
    return s1.s_total - s2.s_total


def covariant_eikonal_phase(
    path4: RayPath,
    field: PotentialField,
    mass: float = 1.0,
    q: float = -1.0,
) -> EikonalSolution:
    """
    Klein–Gordon eikonal: ``ΔG = -∫ (qA_μ + m t_μ) dx^μ`` on a 4-path.

    Per straight segment the rest-mass part is ``-m·Δτ``; the potential part
    ``-q∫(Φ dt - A·dx)`` is integrated with the in-plane field (z ignored).

    :raises SpacelikeSegmentError: for a segment with |Δx| > Δt.
    """
    if not path4.spacetime:
        raise ValueError("covariant phases need a (t, x, y, z) path")
    p0s, p1s = path4.segments()
    delta = p1s - p0s
    dt = delta[:, 0]
    dr = np.linalg.norm(delta[:, 1:], axis=1)
    spacelike = (dt < 0.0) | (dr > dt * (1.0 + 1e-12))
    if np.any(spacelike):
        idx = int(np.flatnonzero(spacelike)[0])
        raise SpacelikeSegmentError(
            f"segment {idx} is spacelike or past-directed (Δt = {dt[idx]:.6g}, "
            f"|Δx| = {dr[idx]:.6g})",
            segment=idx,
        )
    tau = np.sqrt(np.maximum(dt * dt - dr * dr, 0.0))

    rest = [-mass * t for t in tau]
    potential = []
    wavevectors = []
    for p0, d, tau_i in zip(p0s, delta, tau):
        if field.static:
            x0, y0 = p0[1], p0[2]
            a_part = float(
                field.line_integral(x0, y0, x0 + d[1], y0 + d[2], p0[0])
            )
        else:
            def a_dot(s: float, p0=p0, d=d) -> float:
                t, x, y = p0[0] + s * d[0], p0[1] + s * d[1], p0[2] + s * d[2]
                ax, ay = field.a_vec(x, y, t)
                return float(ax) * d[1] + float(ay) * d[2]

            a_part, _ = quad(
                a_dot, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT
            )
        if field.scalar_free:
            phi_part = 0.0
        else:
            def phi_dt(s: float, p0=p0, d=d) -> float:
                t, x, y = p0[0] + s * d[0], p0[1] + s * d[1], p0[2] + s * d[2]
                return float(field.phi(x, y, t)) * d[0]

            phi_part, _ = quad(
                phi_dt, 0.0, 1.0, epsabs=0.0, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT
            )
        potential.append(-q * (phi_part - a_part))

        mid = p0 + 0.5 * d
        ax, ay = field.a_vec(mid[1], mid[2], mid[0])
        phi = float(field.phi(mid[1], mid[2], mid[0]))
        tangent = d / tau_i if tau_i > 0 else np.zeros(4)
        wavevectors.append(
            mass * tangent + q * np.array([phi, float(ax), float(ay), 0.0])
        )

    return EikonalSolution.from_parts(
        rest,
        potential,
        np.array(wavevectors),
        proper_time=float(np.sum(tau)),
        coordinate_time=float(np.sum(dt)),
    )


def kg_eikonal_residual(
    qa_mu: Sequence[float], dg_mu: Sequence[float], mass: float = 1.0
) -> float:
    """
    Residual ``(qA_μ + ∂_μG)(qA^μ + ∂^μG) - m²`` of the covariant real
    equation, with covariant components and metric (+,-,-,-).
    """
    p = np.asarray(qa_mu, dtype=float) + np.asarray(dg_mu, dtype=float)
    return float(p[0] ** 2 - np.sum(p[1:] ** 2) - mass**2)


# --------------------------------------------------------------------------- #
# Fixed-gauge prescription
# --------------------------------------------------------------------------- #
def _four_potential(
    field: PotentialField, point: Sequence[float], time: float
) -> np.ndarray:
    ax, ay = field.a_vec(point[0], point[1], time)
    phi = field.phi(point[0], point[1], time)
    return np.array([float(phi), float(ax), float(ay), 0.0])


def fixed_gauge_wavevector(
    field: PotentialField,
    source_point: Sequence[float],
    x: Sequence[float],
    k0: Sequence[float],
    q: float = -1.0,
    time: float = 0.0,
    reference_field: Optional[PotentialField] = None,
) -> np.ndarray:
    """
    ``k^μ(x) = k0^μ - q[A^μ(x) - A^μ(source)]`` with ``A^μ = (Φ, A_x, A_y, 0)``.

    The pin ``A(source)`` is read from ``reference_field`` when given (the gauge
    the particle was generated in), otherwise from ``field``.  The result is
    gauge dependent: with a lab-gauge pin it moves by ``(q∂G/∂t, -q∇G)``.
    """
    pin_field = reference_field if reference_field is not None else field
    a_x = _four_potential(field, x, time)
    a_src = _four_potential(pin_field, source_point, time)
    return np.asarray(k0, dtype=float) - q * (a_x - a_src)


# --------------------------------------------------------------------------- #
# Hamilton–Jacobi residuals of a wave field
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class HJResidual:
    """
    Per-node residuals of the real Schrödinger pair; NaN where not evaluated.

    :param r1: p² + 2mqΦ - 2mE - ∇²a/a
    :param r2: ∇·(a² p)
    :param quantum: ∇²a/a
    :param phase: unwrapped S
    :param valid: nodes with amplitude above threshold
    :param excluded: number of non-wall nodes below threshold
    """

    r1: np.ndarray
    r2: np.ndarray
    quantum: np.ndarray
    phase: np.ndarray
    valid: np.ndarray
    excluded: int


def unwrap_phase(psi: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """
    Quality-guided 2D phase unwrapping.

    Starting from the largest-amplitude valid node, the neighbour of highest
    amplitude on the frontier is unwrapped next.  Invalid nodes stay NaN.
    """
    amp = np.abs(psi)
    wrapped = np.angle(psi)
    phase = np.full(psi.shape, np.nan)
    if not np.any(valid):
        return phase
    nx, ny = psi.shape
    seed = np.unravel_index(np.argmax(np.where(valid, amp, -1.0)), psi.shape)
    phase[seed] = wrapped[seed]
    done = np.zeros(psi.shape, dtype=bool)
    done[seed] = True
    heap = []

    def push_neighbours(i: int, j: int) -> None:
        for ni, nj in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= ni < nx and 0 <= nj < ny and valid[ni, nj] and not done[ni, nj]:
                heapq.heappush(heap, (-amp[ni, nj], ni, nj, i, j))

    push_neighbours(*seed)
    while heap:
        _, i, j, pi, pj = heapq.heappop(heap)
        if done[i, j]:
            continue
        step = np.angle(np.exp(1j * (wrapped[i, j] - wrapped[pi, pj])))
        phase[i, j] = phase[pi, pj] + step
        done[i, j] = True
        push_neighbours(i, j)
    return phase


def hj_residual(
    state: WaveField,
    field: PotentialField,
    energy: float,
    q: float = -1.0,
    mass: float = 1.0,
    threshold: float = AMPLITUDE_THRESHOLD,
) -> HJResidual:
    """
    Residuals of the amplitude/phase equations for a snapshot.

    The kinetic momentum p = ∇S - qA is taken from covariant phase
    differences ``arg(ψ_i* e^{-iθ} ψ_{i+1}) / dx``, so no unwrapping enters the
    residuals; the unwrapped S is returned for inspection.
    """
    grid: GridSpec = state.grid
    psi = state.psi
    amp = np.abs(psi)
    active = state.mask.active
    valid = active & (amp > threshold)
    excluded = int(np.count_nonzero(active & ~valid))
    if excluded:
        logger.info(
            "hj_residual: %d nodes below amplitude %.1e excluded", excluded, threshold
        )

    links = build_links(field, grid, q, mass, state.time, at_midpoint=False)
    hop_x = np.conj(psi[:-1, :]) * np.exp(-1j * links.theta_x) * psi[1:, :]
    hop_y = np.conj(psi[:, :-1]) * np.exp(-1j * links.theta_y) * psi[:, 1:]
    px_edge = np.angle(hop_x) / grid.dx
    py_edge = np.angle(hop_y) / grid.dy

    # interior nodes whose full 5-point stencil is valid
    stencil = np.zeros(psi.shape, dtype=bool)
    stencil[1:-1, 1:-1] = (
        valid[1:-1, 1:-1]
        & valid[2:, 1:-1]
        & valid[:-2, 1:-1]
        & valid[1:-1, 2:]
        & valid[1:-1, :-2]
    )

    px = np.full(psi.shape, np.nan)
    py = np.full(psi.shape, np.nan)
    px[1:-1, :] = 0.5 * (px_edge[1:, :] + px_edge[:-1, :])
    py[:, 1:-1] = 0.5 * (py_edge[:, 1:] + py_edge[:, :-1])

    lap = np.full(psi.shape, np.nan)
    centre = amp[1:-1, 1:-1]
    lap[1:-1, 1:-1] = (amp[2:, 1:-1] - 2 * centre + amp[:-2, 1:-1]) / grid.dx**2 + (
        amp[1:-1, 2:] - 2 * centre + amp[1:-1, :-2]
    ) / grid.dy**2
    with np.errstate(divide="ignore", invalid="ignore"):
        quantum = np.where(stencil, lap / amp, np.nan)

    X, Y = grid.mesh()
    phi = np.zeros(psi.shape) if field.scalar_free else field.phi(X, Y, state.time)
    r1 = np.where(
        stencil,
        px**2 + py**2 + 2.0 * mass * q * phi - 2.0 * mass * energy - quantum,
        np.nan,
    )

    jx, jy = edge_currents(psi, links, grid)
    div = np.full(psi.shape, np.nan)
    div[1:-1, 1:-1] = mass * (
        (jx[1:, 1:-1] - jx[:-1, 1:-1]) / grid.dx + (jy[1:-1, 1:] - jy[1:-1, :-1]) / grid.dy
    )
    r2 = np.where(stencil, div, np.nan)

    return HJResidual(
        r1=r1,
        r2=r2,
        quantum=quantum,
        phase=unwrap_phase(psi, valid),
        valid=valid,
        excluded=excluded,
    )
