#!/usr/bin/env python3
"""
potentials.py

Electromagnetic potentials seen by the propagating electron.

A :class:`PotentialField` bundles a scalar potential ``phi(x, y, t)`` and a
2-component vector potential ``a_vec(x, y, t)``, both vectorised over numpy
arrays, plus two optional exact closures:

    • ``line_fn(x0, y0, x1, y1, t)``  ... ∫ A·dl along straight segments
    • ``time_fn(x, y, t0, t1)``       ... ∫ Φ dt at fixed nodes

Without a closure both integrals fall back to 5-point Gauss–Legendre
quadrature.  The closures are what the wave solver uses for its link phases,
so a field with closures gives exact plaquette fluxes.

Units are natural (ħ = c = 1).  Gauge functions are measured in potential
units: ``A -> A + ∇G``, ``Φ -> Φ - ∂G/∂t`` and ``ψ -> ψ·exp(iqG)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as npoly

from gauge_optics.errors import (
    ConfigError,
    DegenerateRegionError,
    GaugeOpticsError,
    InsufficientHistoryError,
    SingularPointError,
    SuperluminalWorldlineError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
ScalarFn = Callable[[ArrayLike, ArrayLike, float], np.ndarray]
VectorFn = Callable[[ArrayLike, ArrayLike, float], Tuple[np.ndarray, np.ndarray]]
LineFn = Callable[[ArrayLike, ArrayLike, ArrayLike, ArrayLike, float], np.ndarray]
TimeFn = Callable[[ArrayLike, ArrayLike, float, float], np.ndarray]

FD_STEP = 1e-4
SINGULAR_TOL = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _zeros(x: ArrayLike, y: ArrayLike) -> np.ndarray:
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


# --------------------------------------------------------------------------- #
# Geometry helpers
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class Region:
    """Closed axis-aligned rectangle ``[x0, x1] × [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)

    def contains(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)

    def clip_fraction(
        self, x0: ArrayLike, y0: ArrayLike, x1: ArrayLike, y1: ArrayLike
    ) -> np.ndarray:
        """
        Fraction of each segment lying inside the rectangle (Liang–Barsky).
        """
        x0, y0, x1, y1 = np.broadcast_arrays(
            *(np.asarray(v, dtype=float) for v in (x0, y0, x1, y1))
        )
        dx = x1 - x0
        dy = y1 - y0
        t_lo = np.zeros(x0.shape)
        t_hi = np.ones(x0.shape)
        empty = np.zeros(x0.shape, dtype=bool)

        for p, q in (
            (-dx, x0 - self.x0),
            (dx, self.x1 - x0),
            (-dy, y0 - self.y0),
            (dy, self.y1 - y0),
        ):
            ratio = np.divide(q, p, out=np.zeros_like(q), where=p != 0)
            empty |= (p == 0) & (q < 0)
            t_lo = np.where(p < 0, np.maximum(t_lo, ratio), t_lo)
            t_hi = np.where(p > 0, np.minimum(t_hi, ratio), t_hi)

        frac = np.clip(t_hi - t_lo, 0.0, 1.0)
        return np.where(empty, 0.0, frac)


def _check_points(
    singular: Sequence[Tuple[float, float]], x: ArrayLike, y: ArrayLike
) -> None:
    for cx, cy in singular:
        if np.any(np.hypot(np.asarray(x) - cx, np.asarray(y) - cy) <= SINGULAR_TOL):
            raise SingularPointError(
                f"evaluation at singular point ({cx:g}, {cy:g})", point=(cx, cy)
            )


def _check_segments(
    singular: Sequence[Tuple[float, float]],
    x0: ArrayLike,
    y0: ArrayLike,
    x1: ArrayLike,
    y1: ArrayLike,
) -> None:
    if not singular:
        return
    x0, y0, x1, y1 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x0, y0, x1, y1))
    )
    dx = x1 - x0
    dy = y1 - y0
    length2 = dx * dx + dy * dy
    for cx, cy in singular:
        proj = np.divide(
            (cx - x0) * dx + (cy - y0) * dy,
            length2,
            out=np.zeros_like(length2),
            where=length2 > 0,
        )
        proj = np.clip(proj, 0.0, 1.0)
        dist = np.hypot(x0 + proj * dx - cx, y0 + proj * dy - cy)
        if np.any(dist <= SINGULAR_TOL):
            raise SingularPointError(
                f"segment crosses singular point ({cx:g}, {cy:g})", point=(cx, cy)
            )


# --------------------------------------------------------------------------- #
# Potential field
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class PotentialField:
    """
    Scalar and vector potential evaluable anywhere on the simulation domain.

    :param phi_fn: ``phi_fn(x, y, t)`` -> Φ, vectorised.
    :param a_fn: ``a_fn(x, y, t)`` -> ``(A_x, A_y)``, vectorised.
    :param line_fn: Optional exact ∫A·dl closure.
    :param time_fn: Optional exact ∫Φ dt closure.
    :param singular_points: Points where the potentials are undefined.
    :param static: True when neither potential depends on time.
    :param scalar_free: True when Φ is identically zero.
    :param gauge_charge: Charge recorded by :func:`apply_gauge`.
    """

    phi_fn: ScalarFn
    a_fn: VectorFn
    line_fn: Optional[LineFn] = None
    time_fn: Optional[TimeFn] = None
    singular_points: Tuple[Tuple[float, float], ...] = ()
    static: bool = True
    scalar_free: bool = False
    gauge_charge: Optional[float] = None
    label: str = "field"

    # ------------------------------------------------------------------ #
    def phi(self, x: ArrayLike, y: ArrayLike, t: float = 0.0) -> np.ndarray:
        _check_points(self.singular_points, x, y)
        return np.asarray(self.phi_fn(x, y, t), dtype=float)

    def a_vec(
        self, x: ArrayLike, y: ArrayLike, t: float = 0.0
    ) -> Tuple[np.ndarray, np.ndarray]:
        _check_points(self.singular_points, x, y)
        ax, ay = self.a_fn(x, y, t)
        return np.asarray(ax, dtype=float), np.asarray(ay, dtype=float)

    def line_integral(
        self,
        x0: ArrayLike,
        y0: ArrayLike,
        x1: ArrayLike,
        y1: ArrayLike,
        t: float = 0.0,
    ) -> np.ndarray:
        """∫ A·dl along the straight segments ``(x0, y0) -> (x1, y1)``."""
        _check_segments(self.singular_points, x0, y0, x1, y1)
        if self.line_fn is not None:
            return np.asarray(self.line_fn(x0, y0, x1, y1, t), dtype=float)
        return gauss_legendre_line(self.a_fn, x0, y0, x1, y1, t)

    def phi_time_integral(
        self, x: ArrayLike, y: ArrayLike, t0: float, t1: float
    ) -> np.ndarray:
        """∫ Φ dt over ``[t0, t1]`` at fixed nodes."""
        _check_points(self.singular_points, x, y)
        if self.time_fn is not None:
            return np.asarray(self.time_fn(x, y, t0, t1), dtype=float)
        if self.scalar_free:
            return _zeros(x, y)
        if self.static:
            return np.asarray(self.phi_fn(x, y, t0), dtype=float) * (t1 - t0)
        half = 0.5 * (t1 - t0)
        mid = 0.5 * (t1 + t0)
        total = _zeros(x, y)
        for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
            total = total + weight * np.asarray(self.phi_fn(x, y, mid + half * node))
        return total * half


def gauss_legendre_line(
    a_fn: VectorFn,
    x0: ArrayLike,
    y0: ArrayLike,
    x1: ArrayLike,
    y1: ArrayLike,
    t: float,
) -> np.ndarray:
    """5-point Gauss–Legendre approximation of ∫A·dl on straight segments."""
    x0, y0, x1, y1 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (x0, y0, x1, y1))
    )
    dx = x1 - x0
    dy = y1 - y0
    total = np.zeros(x0.shape)
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        s = 0.5 * (node + 1.0)
        ax, ay = a_fn(x0 + s * dx, y0 + s * dy, t)
        total = total + weight * (np.asarray(ax) * dx + np.asarray(ay) * dy)
    return 0.5 * total


def edge_line_integral(
    field: PotentialField,
    p0: Sequence[float],
    p1: Sequence[float],
    time: float = 0.0,
) -> Union[float, np.ndarray]:
    """
    ∫ A·dl from ``p0`` to ``p1``; analytic closure when present.

    :raises SingularPointError: if the segment crosses a singular point.
    """
    value = field.line_integral(p0[0], p0[1], p1[0], p1[1], time)
    return float(value) if np.ndim(value) == 0 else value


# --------------------------------------------------------------------------- #
# Constructors
# --------------------------------------------------------------------------- #
def zero_field() -> PotentialField:
    return uniform_scalar(0.0)


def uniform_scalar(phi0: float) -> PotentialField:
    """Constant Φ = ``phi0`` with A = 0."""
    phi0 = float(phi0)
    if not math.isfinite(phi0):
        raise ValueError("phi0 must be finite")

    return PotentialField(
        phi_fn=lambda x, y, t: _zeros(x, y) + phi0,
        a_fn=lambda x, y, t: (_zeros(x, y), _zeros(x, y)),
        line_fn=lambda x0, y0, x1, y1, t: np.zeros(
            np.broadcast(*(np.asarray(v) for v in (x0, y0, x1, y1))).shape
        ),
        time_fn=lambda x, y, t0, t1: _zeros(x, y) + phi0 * (t1 - t0),
        scalar_free=phi0 == 0.0,
        label=f"uniform_scalar({phi0:g})",
    )


def uniform_channel(region: Region, a0: Sequence[float]) -> PotentialField:
    """
    Uniform vector potential ``a0`` inside the closed rectangle, zero outside.

    This is the 2D bore of an idealised toroidal solenoid.  Its line-integral
    closure clips each segment against the rectangle so link phases are exact.

    :raises DegenerateRegionError: for a zero-area region.
    """
    if not (region.x1 > region.x0 and region.y1 > region.y0):
        raise DegenerateRegionError(
            f"channel region {region} has zero area"
        )
    ax0, ay0 = (float(a0[0]), float(a0[1]))
    if not (math.isfinite(ax0) and math.isfinite(ay0)):
        raise ValueError("channel vector potential must be finite")

    def a_fn(x, y, t):
        inside = region.contains(x, y)
        return np.where(inside, ax0, 0.0), np.where(inside, ay0, 0.0)

    def line_fn(x0, y0, x1, y1, t):
        frac = region.clip_fraction(x0, y0, x1, y1)
        dx = np.asarray(x1, dtype=float) - np.asarray(x0, dtype=float)
        dy = np.asarray(y1, dtype=float) - np.asarray(y0, dtype=float)
        return frac * (ax0 * dx + ay0 * dy)

    return PotentialField(
        phi_fn=lambda x, y, t: _zeros(x, y),
        a_fn=a_fn,
        line_fn=line_fn,
        time_fn=lambda x, y, t0, t1: _zeros(x, y),
        scalar_free=True,
        label=f"uniform_channel(a=({ax0:g}, {ay0:g}))",
    )


def infinite_solenoid(center: Sequence[float], flux: float) -> PotentialField:
    """
    Exterior potential of an infinitely thin solenoid, A = flux/(2πr) φ̂.

    The circulation around the center is ``flux`` (counter-clockwise).  The
    center is a declared singular point unless the flux is zero.
    """
    cx, cy = float(center[0]), float(center[1])
    flux = float(flux)
    if not math.isfinite(flux):
        raise ValueError("solenoid flux must be finite")
    strength = flux / (2.0 * math.pi)

    def a_fn(x, y, t):
        rx = np.asarray(x, dtype=float) - cx
        ry = np.asarray(y, dtype=float) - cy
        r2 = rx * rx + ry * ry
        return -strength * ry / r2, strength * rx / r2

    def line_fn(x0, y0, x1, y1, t):
        ux = np.asarray(x0, dtype=float) - cx
        uy = np.asarray(y0, dtype=float) - cy
        vx = np.asarray(x1, dtype=float) - cx
        vy = np.asarray(y1, dtype=float) - cy
        # signed angle swept about the center
        return strength * np.arctan2(ux * vy - uy * vx, ux * vx + uy * vy)

    if flux == 0.0:
        return replace(zero_field(), label="solenoid(flux=0)")

    return PotentialField(
        phi_fn=lambda x, y, t: _zeros(x, y),
        a_fn=a_fn,
        line_fn=line_fn,
        time_fn=lambda x, y, t0, t1: _zeros(x, y),
        singular_points=((cx, cy),),
        scalar_free=True,
        label=f"solenoid(flux={flux:g})",
    )


def composite(*fields: PotentialField) -> PotentialField:
    """Superposition of fields; exact closures of every part are kept."""
    if not fields:
        return zero_field()
    if len(fields) == 1:
        return fields[0]

    def phi_fn(x, y, t):
        return sum(np.asarray(f.phi_fn(x, y, t), dtype=float) for f in fields)

    def a_fn(x, y, t):
        ax = _zeros(x, y)
        ay = _zeros(x, y)
        for f in fields:
            fx, fy = f.a_fn(x, y, t)
            ax = ax + fx
            ay = ay + fy
        return ax, ay

    def line_fn(x0, y0, x1, y1, t):
        return sum(f.line_integral(x0, y0, x1, y1, t) for f in fields)

    def time_fn(x, y, t0, t1):
        return sum(f.phi_time_integral(x, y, t0, t1) for f in fields)

    singular: Tuple[Tuple[float, float], ...] = ()
    for f in fields:
        singular += tuple(p for p in f.singular_points if p not in singular)

    return PotentialField(
        phi_fn=phi_fn,
        a_fn=a_fn,
        line_fn=line_fn,
        time_fn=time_fn,
        singular_points=singular,
        static=all(f.static for f in fields),
        scalar_free=all(f.scalar_free for f in fields),
        label=" + ".join(f.label for f in fields),
    )


# --------------------------------------------------------------------------- #
# Gauge functions
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """
    Scalar G(x, y, t) generating a gauge transformation.

    ``grad_fn`` and ``dt_fn`` are optional; without them the derivatives are
    taken by central differences with step ``fd_step``.
    """

    g_fn: Callable[[ArrayLike, ArrayLike, ArrayLike], np.ndarray]
    grad_fn: Optional[VectorFn] = None
    dt_fn: Optional[ScalarFn] = None
    static: bool = False
    identity: bool = False
    label: str = "gauge"
    spec: Mapping[str, Any] = field(default_factory=dict)
    fd_step: float = 1e-5

    def __call__(self, x: ArrayLike, y: ArrayLike, t: ArrayLike = 0.0) -> np.ndarray:
        return np.asarray(self.g_fn(x, y, t), dtype=float)

    def gradient(
        self, x: ArrayLike, y: ArrayLike, t: float = 0.0
    ) -> Tuple[np.ndarray, np.ndarray]:
        if self.grad_fn is not None:
            gx, gy = self.grad_fn(x, y, t)
            return np.asarray(gx, dtype=float), np.asarray(gy, dtype=float)
        return self.fd_gradient(x, y, t, self.fd_step)

    def time_derivative(self, x: ArrayLike, y: ArrayLike, t: float = 0.0) -> np.ndarray:
        if self.static:
            return _zeros(x, y)
        if self.dt_fn is not None:
            return np.asarray(self.dt_fn(x, y, t), dtype=float)
        h = self.fd_step
        return (self(x, y, t + h) - self(x, y, t - h)) / (2.0 * h)

    def fd_gradient(
        self, x: ArrayLike, y: ArrayLike, t: float, h: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = (self(x + h, y, t) - self(x - h, y, t)) / (2.0 * h)
        gy = (self(x, y + h, t) - self(x, y - h, t)) / (2.0 * h)
        return gx, gy

    def gradient_error(
        self, points: np.ndarray, h: float = 1e-3, t: float = 0.0
    ) -> float:
        """
        Largest difference between provided and finite-difference gradients.

        :param points: ``(n, 2)`` array of sample points.
        """
        pts = np.asarray(points, dtype=float)
        gx, gy = self.gradient(pts[:, 0], pts[:, 1], t)
        fx, fy = self.fd_gradient(pts[:, 0], pts[:, 1], t, h)
        return float(max(np.max(np.abs(gx - fx)), np.max(np.abs(gy - fy))))

    # ------------------------------------------------------------------ #
    # Constructors
    # ------------------------------------------------------------------ #
    @classmethod
    def polynomial(
        cls,
        coefficients: np.ndarray,
        origin: Sequence[float] = (0.0, 0.0, 0.0),
        scale: Sequence[float] = (1.0, 1.0, 1.0),
        label: str = "polynomial",
        identity: bool = False,
    ) -> "GaugeFunction":
        """
        G = Σ c[i, j, k] x̃^i ỹ^j t̃^k with x̃ = (x - x_c)/L_x, etc.

        Derivatives are exact through :func:`numpy.polynomial.polynomial.polyder`.
        """
        c = np.atleast_3d(np.asarray(coefficients, dtype=float))
        if c.ndim != 3:
            raise ValueError("polynomial gauge needs a 3D coefficient array")
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial gauge coefficients must be finite")
        ox, oy, ot = (float(v) for v in origin)
        lx, ly, lt = (float(v) for v in scale)
        cx = npoly.polyder(c, axis=0)
        cy = npoly.polyder(c, axis=1)
        ct = npoly.polyder(c, axis=2)

        def reduced(x, y, t):
            x, y, t = np.broadcast_arrays(
                np.asarray(x, dtype=float),
                np.asarray(y, dtype=float),
                np.asarray(t, dtype=float),
            )
            return (
                (x - ox) / lx,
                (y - oy) / ly,
                (t - ot) / lt,
            )

        def g_fn(x, y, t):
            return npoly.polyval3d(*reduced(x, y, t), c)

        def grad_fn(x, y, t):
            xr, yr, tr = reduced(x, y, t)
            return (
                npoly.polyval3d(xr, yr, tr, cx) / lx,
                npoly.polyval3d(xr, yr, tr, cy) / ly,
            )

        def dt_fn(x, y, t):
            return npoly.polyval3d(*reduced(x, y, t), ct) / lt

        return cls(
            g_fn=g_fn,
            grad_fn=grad_fn,
            dt_fn=dt_fn,
            static=bool(np.all(c[:, :, 1:] == 0.0)),
            identity=identity,
            label=label,
            spec={
                "kind": "polynomial",
                "coefficients": c.tolist(),
                "origin": [ox, oy, ot],
                "scale": [lx, ly, lt],
            },
        )

    @classmethod
    def identity_gauge(cls) -> "GaugeFunction":
        gauge = cls.polynomial(np.zeros((1, 1, 1)), label="identity", identity=True)
        return replace(gauge, spec={"kind": "identity"})

    @classmethod
    def constant(cls, value: float) -> "GaugeFunction":
        c = np.full((1, 1, 1), float(value))
        gauge = cls.polynomial(c, label=f"constant({value:g})")
        return replace(gauge, spec={"kind": "constant", "value": float(value)})

    @classmethod
    def linear(
        cls, cx: float, cy: float, ct: float = 0.0, c0: float = 0.0
    ) -> "GaugeFunction":
        """G = c0 + cx·x + cy·y + ct·t."""
        c = np.zeros((2, 2, 2))
        c[0, 0, 0] = c0
        c[1, 0, 0] = cx
        c[0, 1, 0] = cy
        c[0, 0, 1] = ct
        gauge = cls.polynomial(c, label=f"linear({cx:g}, {cy:g}, {ct:g})")
        return replace(
            gauge,
            spec={"kind": "linear", "cx": cx, "cy": cy, "ct": ct, "c0": c0},
        )

    @classmethod
    def random_polynomial(
        cls,
        seed: int,
        degree: int = 2,
        time_dependent: bool = True,
        origin: Sequence[float] = (0.0, 0.0, 0.0),
        scale: Sequence[float] = (1.0, 1.0, 1.0),
        amplitude: float = 1.0,
    ) -> "GaugeFunction":
        """
        Polynomial of total degree ``degree`` with coefficients uniform in
        ``[-amplitude, amplitude]``, drawn from ``numpy.random.default_rng(seed)``.
        """
        rng = np.random.default_rng(seed)
        nt = degree + 1 if time_dependent else 1
        c = rng.uniform(-amplitude, amplitude, size=(degree + 1, degree + 1, nt))
        i, j, k = np.indices(c.shape)
        c[i + j + k > degree] = 0.0
        gauge = cls.polynomial(c, origin=origin, scale=scale, label=f"random({seed})")
        spec = dict(gauge.spec)
        spec.update({"kind": "random_polynomial", "seed": seed, "degree": degree})
        return replace(gauge, spec=spec)


def apply_gauge(field: PotentialField, g: GaugeFunction, q: float = -1.0) -> PotentialField:
    """
    Gauge-transform the potentials: ``A -> A + ∇G``, ``Φ -> Φ - ∂G/∂t``.

    The matching wave rotation is ``ψ -> ψ·exp(iqG)``; ``q`` is recorded on the
    result.  Line and time integrals gain the exact differences of G, so link
    phases of the transformed field stay exact.
    """
    if g.identity:
        return replace(field, gauge_charge=q)

    def phi_fn(x, y, t):
        return np.asarray(field.phi_fn(x, y, t), dtype=float) - g.time_derivative(x, y, t)

    def a_fn(x, y, t):
        ax, ay = field.a_fn(x, y, t)
        gx, gy = g.gradient(x, y, t)
        return np.asarray(ax) + gx, np.asarray(ay) + gy

    def line_fn(x0, y0, x1, y1, t):
        return field.line_integral(x0, y0, x1, y1, t) + (g(x1, y1, t) - g(x0, y0, t))

    def time_fn(x, y, t0, t1):
        return field.phi_time_integral(x, y, t0, t1) - (g(x, y, t1) - g(x, y, t0))

    return PotentialField(
        phi_fn=phi_fn,
        a_fn=a_fn,
        line_fn=line_fn,
        time_fn=time_fn,
        singular_points=field.singular_points,
        static=field.static and g.static,
        scalar_free=field.scalar_free and g.static,
        gauge_charge=q,
        label=f"{field.label} | {g.label}",
    )


# --------------------------------------------------------------------------- #
# Field strength
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class FieldStrength:
    """
    Fields derived from the potentials.

    :param e_vec: ``(E_x, E_y)`` stacked along the first axis.
    :param b_z: out-of-plane magnetic field, a float for a single point.
    """

    e_vec: np.ndarray
    b_z: Union[float, np.ndarray]


def field_strength(
    field: PotentialField,
    point: Sequence[ArrayLike],
    time: float = 0.0,
    h: float = FD_STEP,
) -> FieldStrength:
    """
    E = -∇Φ - ∂A/∂t and B_z = ∂A_y/∂x - ∂A_x/∂y by central differences.

    ``point`` may hold arrays; the result then has matching shape.
    """
    x = np.asarray(point[0], dtype=float)
    y = np.asarray(point[1], dtype=float)
    for cx, cy in field.singular_points:
        if np.any(np.hypot(x - cx, y - cy) <= 2.0 * h):
            raise SingularPointError(
                f"field strength requested at singular point ({cx:g}, {cy:g})",
                point=(cx, cy),
            )

    dphi_dx = (field.phi(x + h, y, time) - field.phi(x - h, y, time)) / (2 * h)
    dphi_dy = (field.phi(x, y + h, time) - field.phi(x, y - h, time)) / (2 * h)

    ax_xp, ay_xp = field.a_vec(x + h, y, time)
    ax_xm, ay_xm = field.a_vec(x - h, y, time)
    ax_yp, _ = field.a_vec(x, y + h, time)
    ax_ym, _ = field.a_vec(x, y - h, time)

    if field.static:
        dax_dt = np.zeros_like(dphi_dx)
        day_dt = np.zeros_like(dphi_dx)
    else:
        ax_tp, ay_tp = field.a_vec(x, y, time + h)
        ax_tm, ay_tm = field.a_vec(x, y, time - h)
        dax_dt = (ax_tp - ax_tm) / (2 * h)
        day_dt = (ay_tp - ay_tm) / (2 * h)

    e_vec = np.stack([-dphi_dx - dax_dt, -dphi_dy - day_dt])
    b_z = (ay_xp - ay_xm) / (2 * h) - (ax_yp - ax_ym) / (2 * h)
    return FieldStrength(e_vec=e_vec, b_z=float(b_z) if b_z.ndim == 0 else b_z)


# --------------------------------------------------------------------------- #
# Retarded potentials
# --------------------------------------------------------------------------- #
@dataclass(frozen=True, eq=False)
class Worldline:
    """
    Sampled trajectory ``(t, x, y, z)`` of a point charge, linear in between.

    :raises SuperluminalWorldlineError: if t is not strictly increasing or a
        segment moves at speed ≥ 1.
    """

    samples: np.ndarray
    charge: float

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 4 or samples.shape[0] < 2:
            raise ValueError("worldline needs at least two (t, x, y, z) samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("worldline samples must be finite")
        dt = np.diff(samples[:, 0])
        if np.any(dt <= 0):
            raise SuperluminalWorldlineError(
                "worldline time must be strictly increasing"
            )
        speed = np.linalg.norm(np.diff(samples[:, 1:], axis=0), axis=1) / dt
        if np.any(speed >= 1.0):
            raise SuperluminalWorldlineError(
                f"worldline speed {speed.max():.6g} is not below c = 1",
                max_speed=float(speed.max()),
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "charge", float(self.charge))

    @property
    def stationary(self) -> bool:
        return bool(np.all(self.samples[:, 1:] == self.samples[0, 1:]))

    @classmethod
    def static(
        cls,
        position: Sequence[float],
        charge: float,
        t_start: float = -1.0e3,
        t_end: float = 1.0e3,
    ) -> "Worldline":
        p = [float(v) for v in position]
        return cls(np.array([[t_start, *p], [t_end, *p]]), charge)

    @classmethod
    def uniform(
        cls,
        position: Sequence[float],
        velocity: Sequence[float],
        charge: float,
        t_start: float,
        t_end: float,
        t_ref: float = 0.0,
        n_samples: int = 2,
    ) -> "Worldline":
        """Uniform motion through ``position`` at ``t_ref``."""
        t = np.linspace(t_start, t_end, n_samples)
        p = np.asarray(position, dtype=float)
        v = np.asarray(velocity, dtype=float)
        xyz = p[None, :] + (t - t_ref)[:, None] * v[None, :]
        return cls(np.column_stack([t, xyz]), charge)

    @classmethod
    def from_csv(cls, path: Union[str, Path], charge: float) -> "Worldline":
        frame = pd.read_csv(path)
        missing = [c for c in ("t", "x", "y", "z") if c not in frame.columns]
        if missing:
            raise ConfigError(
                f"worldline file {path} lacks columns {missing}", key="csv"
            )
        return cls(frame[["t", "x", "y", "z"]].to_numpy(dtype=float), charge)


def _retarded_single(
    source: Worldline,
    t: np.ndarray,
    pos: np.ndarray,
) -> np.ndarray:
    """
    Liénard–Wiechert 4-potential of one worldline at field points.

    :param t: shape ``(P,)`` field times.
    :param pos: shape ``(P, 3)`` field positions.
    :return: shape ``(4, P)`` array ``(Φ, A_x, A_y, A_z)``.
    """
    ts = source.samples[:, 0]
    rs = source.samples[:, 1:]
    n = ts.size

    def residual(idx: np.ndarray) -> np.ndarray:
        return t - ts[idx] - np.linalg.norm(pos - rs[idx], axis=1)

    lo = np.zeros(t.shape, dtype=int)
    hi = np.full(t.shape, n - 1, dtype=int)
    if np.any(residual(lo) < 0.0) or np.any(residual(hi) > 0.0):
        raise InsufficientHistoryError(
            "retarded time lies outside the sampled worldline",
            coverage=(float(ts[0]), float(ts[-1])),
        )

    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        ahead = residual(mid) >= 0.0
        lo = np.where(ahead, mid, lo)
        hi = np.where(ahead, hi, mid)

    t_lo, t_hi = ts[lo], ts[hi]
    r_lo, r_hi = rs[lo], rs[hi]
    u_lo = np.zeros(t.shape)
    u_hi = np.ones(t.shape)
    for _ in range(60):
        u = 0.5 * (u_lo + u_hi)
        s = t_lo + u * (t_hi - t_lo)
        r = r_lo + u[:, None] * (r_hi - r_lo)
        ahead = t - s - np.linalg.norm(pos - r, axis=1) >= 0.0
        u_lo = np.where(ahead, u, u_lo)
        u_hi = np.where(ahead, u_hi, u)

    u = 0.5 * (u_lo + u_hi)
    r_ret = r_lo + u[:, None] * (r_hi - r_lo)
    velocity = (r_hi - r_lo) / (t_hi - t_lo)[:, None]
    sep = pos - r_ret
    dist = np.linalg.norm(sep, axis=1)
    if np.any(dist == 0.0):
        raise SingularPointError("field point lies on a source worldline")
    kappa = 1.0 - np.sum(sep * velocity, axis=1) / dist
    phi = source.charge / (4.0 * math.pi * kappa * dist)
    return np.vstack([phi, phi[None, :] * velocity.T])


def retarded_potential(
    sources: Iterable[Worldline],
    field_point: Sequence[ArrayLike],
) -> np.ndarray:
    """
    Retarded 4-potential ``(Φ, A_x, A_y, A_z)`` of point-charge worldlines.

    Each source is solved on its past light cone by bisection over samples
    and then inside the bracketing segment; the Liénard–Wiechert form
    ``q V^μ / (4π κ R)`` is summed over sources in order.

    :param field_point: ``(t, x, y, z)``, scalars or broadcastable arrays.
    :raises InsufficientHistoryError: if the retarded time is not covered.
    """
    t, x, y, z = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in field_point)
    )
    shape = t.shape
    pos = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    total = np.zeros((4, t.size))
    for source in sources:
        total = total + _retarded_single(source, t.ravel(), pos)
    return total.reshape((4,) + shape)


def worldline_field(sources: Sequence[Worldline], z: float = 0.0) -> PotentialField:
    """
    In-plane potentials (Φ, A_x, A_y) of ``sources`` on the plane ``z``.

    Static when every source is stationary.
    """
    sources = tuple(sources)
    stationary = all(s.stationary for s in sources)

    def four(x, y, t):
        xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        point = (np.full(xb.shape, t), xb, yb, np.full(xb.shape, z))
        return retarded_potential(sources, point)

    singular = tuple(
        (float(s.samples[0, 1]), float(s.samples[0, 2]))
        for s in sources
        if s.stationary and s.samples[0, 3] == z
    )
    return PotentialField(
        phi_fn=lambda x, y, t: four(x, y, t)[0],
        a_fn=lambda x, y, t: tuple(four(x, y, t)[1:3]),
        singular_points=singular,
        static=stationary,
        label=f"worldlines(n={len(sources)})",
    )


def source_wavevector(
    sources: Iterable[Worldline],
    field_point: Sequence[float],
    k0: Sequence[float],
    alpha: float,
) -> np.ndarray:
    """
    ``k^μ(x) = k0^μ + α Σ_i (retarded potential of source i)``.

    ``alpha`` is a free coupling with no preferred value.
    """
    return np.asarray(k0, dtype=float) + alpha * retarded_potential(sources, field_point)


# --------------------------------------------------------------------------- #
# Declarations
# --------------------------------------------------------------------------- #
def _require(decl: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in decl:
        raise ConfigError(f"missing key '{key}' in {where}", key=f"{where}.{key}")
    return decl[key]


def _reject_unknown(decl: Mapping[str, Any], allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(decl) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key '{unknown[0]}' in {where}", key=f"{where}.{unknown[0]}"
        )


def field_from_dict(decl: Mapping[str, Any], where: str = "potentials") -> PotentialField:
    """
    Build a field from a configuration declaration.

    Kinds: ``uniform_channel`` (region = [x0, x1, y0, y1], a0 = [ax, ay]),
    ``solenoid`` (center, flux), ``uniform_scalar`` (phi0), ``worldlines``
    (sources = [{charge, samples}], z) and ``composite`` (parts).
    """
    kind = _require(decl, "kind", where)
    try:
        if kind == "uniform_channel":
            _reject_unknown(decl, ("kind", "region", "a0"), where)
            x0, x1, y0, y1 = (float(v) for v in _require(decl, "region", where))
            return uniform_channel(Region(x0, x1, y0, y1), _require(decl, "a0", where))
        if kind == "solenoid":
            _reject_unknown(decl, ("kind", "center", "flux"), where)
            return infinite_solenoid(
                _require(decl, "center", where), float(_require(decl, "flux", where))
            )
        if kind == "uniform_scalar":
            _reject_unknown(decl, ("kind", "phi0"), where)
            return uniform_scalar(float(_require(decl, "phi0", where)))
        if kind == "worldlines":
            _reject_unknown(decl, ("kind", "sources", "z"), where)
            sources = []
            for i, src in enumerate(_require(decl, "sources", where)):
                sub = f"{where}.sources[{i}]"
                _reject_unknown(src, ("charge", "samples"), sub)
                sources.append(
                    Worldline(
                        np.asarray(_require(src, "samples", sub), dtype=float),
                        float(_require(src, "charge", sub)),
                    )
                )
            return worldline_field(sources, float(decl.get("z", 0.0)))
        if kind == "composite":
            _reject_unknown(decl, ("kind", "parts"), where)
            return composite(
                *(
                    field_from_dict(part, f"{where}.parts[{i}]")
                    for i, part in enumerate(_require(decl, "parts", where))
                )
            )
    except GaugeOpticsError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} declaration: {exc}", key=where) from exc
    raise ConfigError(f"unknown potential kind '{kind}'", key=f"{where}.kind")
