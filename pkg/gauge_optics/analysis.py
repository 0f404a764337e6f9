#!/usr/bin/env python3
"""
analysis.py

Interference observables extracted from screen profiles.

A profile is a pair of 1D arrays: positions along the screen and the
non-negative time-integrated intensity at each position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.signal import correlate, correlation_lags, find_peaks

from gauge_optics.errors import (
    InsufficientFringesError,
    InvariantViolation,
    ProfileMismatchError,
)

logger = logging.getLogger(__name__)

PEAK_THRESHOLD = 0.05
CENTRAL_WINDOW = 0.6


@dataclass(frozen=True)
class FringeReport:
    fringe_spacing: float
    spacing_uncertainty: float
    central_max_position: float
    visibility: float
    maxima_positions: Tuple[float, ...]
    minima_positions: Tuple[float, ...]
    window: Tuple[float, float]
    shift_vs_reference: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["maxima_positions"] = list(self.maxima_positions)
        out["minima_positions"] = list(self.minima_positions)
        out["window"] = list(self.window)
        return out


@dataclass(frozen=True)
class ProfileComparison:
    max_abs_dev: float
    rms_dev: float
    shift_estimate: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _refine(y: np.ndarray, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Three-point quadratic vertex around each index.

    :return: fractional offsets in samples and interpolated values.
    """
    idx = np.asarray(idx, dtype=int)
    offsets = np.zeros(idx.shape)
    values = y[idx].astype(float)
    inner = (idx > 0) & (idx < y.size - 1)
    i = idx[inner]
    left, mid, right = y[i - 1], y[i], y[i + 1]
    denom = left - 2.0 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom != 0.0, 0.5 * (left - right) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    offsets[inner] = delta
    values[inner] = mid - 0.25 * (left - right) * delta
    return offsets, values


def default_window(x: np.ndarray, fraction: float = CENTRAL_WINDOW) -> Tuple[float, float]:
    """Middle ``fraction`` of the screen."""
    lo, hi = float(np.min(x)), float(np.max(x))
    margin = 0.5 * (1.0 - fraction) * (hi - lo)
    return lo + margin, hi - margin


def wrap_fringes(raw: float) -> float:
    """Map a shift in fringes to (-0.5, 0.5]."""
    return float(raw - math.ceil(raw - 0.5))


def unwrap_shifts(shifts: Sequence[float]) -> np.ndarray:
    """Remove whole-fringe jumps along a sweep."""
    return np.unwrap(np.asarray(shifts, dtype=float), period=1.0)


def fringe_extract(
    x: np.ndarray,
    intensity: np.ndarray,
    window: Optional[Tuple[float, float]] = None,
    reference: Optional[FringeReport] = None,
    threshold: float = PEAK_THRESHOLD,
) -> FringeReport:
    """
    Measure fringe spacing, central maximum, visibility and shift.

    Maxima above ``threshold`` of the profile maximum are located with
    :func:`scipy.signal.find_peaks` and refined by quadratic interpolation.
    The shift is measured from the reference central maximum to the nearest
    maximum of this profile, in units of the local fringe (the gap between
    the two maxima around the reference centre), and wrapped into (-0.5, 0.5].

    :raises InsufficientFringesError: for fewer than three maxima.
    """
    x = np.asarray(x, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    if x.shape != intensity.shape or x.ndim != 1:
        raise ValueError("profile positions and intensities must be matching 1D arrays")
    if np.any(intensity < 0.0):
        raise InvariantViolation(
            "profile non-negative", "intensity profile has negative entries"
        )
    if window is None:
        window = default_window(x)
    inside = (x >= window[0]) & (x <= window[1])
    xs = x[inside]
    ys = intensity[inside]
    if xs.size < 3:
        raise InsufficientFringesError("analysis window holds fewer than 3 samples")
    step = float(xs[1] - xs[0])

    top = float(np.max(intensity))
    peaks, _ = find_peaks(ys, height=threshold * top, prominence=threshold * top)
    if peaks.size < 3:
        raise InsufficientFringesError(
            f"found {peaks.size} maxima in window {window}, need at least 3",
            maxima=int(peaks.size),
        )
    offsets, heights = _refine(ys, peaks)
    maxima = xs[peaks] + offsets * step

    troughs, _ = find_peaks(-ys, prominence=threshold * top)
    t_offsets, t_values = _refine(ys, troughs)
    minima = xs[troughs] + t_offsets * step
    t_values = np.clip(t_values, 0.0, None)

    gaps = np.diff(maxima)
    spacing = float(np.mean(gaps))
    uncertainty = float(np.std(gaps))

    central = int(np.argmax(heights))
    central_pos = float(maxima[central])
    i_max = float(heights[central])
    left = minima[minima < central_pos]
    right = minima[minima > central_pos]
    neighbours = []
    if left.size:
        neighbours.append(t_values[minima < central_pos][-1])
    if right.size:
        neighbours.append(t_values[minima > central_pos][0])
    i_min = float(np.mean(neighbours)) if neighbours else float(np.min(ys))
    visibility = (i_max - i_min) / (i_max + i_min) if i_max + i_min > 0 else 0.0
    visibility = float(np.clip(visibility, 0.0, 1.0))

    shift = None
    if reference is not None:
        ref = reference.central_max_position
        nearest = maxima[int(np.argmin(np.abs(maxima - ref)))]
        # local fringe: the pair of maxima bracketing the reference centre
        pair = int(np.clip(np.searchsorted(maxima, ref) - 1, 0, gaps.size - 1))
        shift = wrap_fringes((nearest - ref) / gaps[pair])

    return FringeReport(
        fringe_spacing=spacing,
        spacing_uncertainty=uncertainty,
        central_max_position=central_pos,
        visibility=visibility,
        maxima_positions=tuple(float(m) for m in maxima),
        minima_positions=tuple(float(m) for m in minima),
        window=(float(window[0]), float(window[1])),
        shift_vs_reference=shift,
    )


def compare_profiles(
    x1: np.ndarray,
    p1: np.ndarray,
    x2: np.ndarray,
    p2: np.ndarray,
) -> ProfileComparison:
    """
    Deviation and relative displacement of two profiles.

    Both profiles are normalised to unit maximum on the common range (``p2`` is
    resampled onto ``x1`` when the grids differ).  ``shift_estimate`` is the
    displacement of ``p2`` relative to ``p1`` toward +x, from the peak of their
    cross-correlation with quadratic refinement.

    :raises ProfileMismatchError: if the x-ranges do not overlap.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    lo = max(x1[0], x2[0])
    hi = min(x1[-1], x2[-1])
    if not lo < hi:
        raise ProfileMismatchError(
            f"profiles do not overlap: [{x1[0]:g}, {x1[-1]:g}] vs [{x2[0]:g}, {x2[-1]:g}]"
        )

    if x1.shape == x2.shape and np.array_equal(x1, x2):
        xs, a, b = x1, p1, p2
    else:
        keep = (x1 >= lo) & (x1 <= hi)
        xs = x1[keep]
        a = p1[keep]
        b = np.interp(xs, x2, p2)

    a = a / np.max(a) if np.max(a) > 0 else np.zeros_like(a)
    b = b / np.max(b) if np.max(b) > 0 else np.zeros_like(b)
    diff = b - a

    corr = correlate(b, a, mode="full", method="direct")
    lags = correlation_lags(b.size, a.size, mode="full")
    k = int(np.argmax(corr))
    offsets, _ = _refine(corr, np.array([k]))
    step = float(xs[1] - xs[0]) if xs.size > 1 else 0.0

    return ProfileComparison(
        max_abs_dev=float(np.max(np.abs(diff))),
        rms_dev=float(np.sqrt(np.mean(diff**2))),
        shift_estimate=float((lags[k] + offsets[0]) * step),
    )


def single_peak_summary(x: np.ndarray, intensity: np.ndarray) -> Dict[str, float]:
    """Centroid, refined peak, rms width and total of a single-peak profile."""
    x = np.asarray(x, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    total = float(trapezoid(intensity, x))
    if total <= 0.0:
        raise InsufficientFringesError("profile carries no intensity")
    centroid = float(trapezoid(x * intensity, x) / total)
    width = float(np.sqrt(trapezoid((x - centroid) ** 2 * intensity, x) / total))
    k = int(np.argmax(intensity))
    offset, height = _refine(intensity, np.array([k]))
    return {
        "total": total,
        "centroid": centroid,
        "peak_position": float(x[k] + offset[0] * (x[1] - x[0])),
        "peak_intensity": float(height[0]),
        "rms_width": width,
    }


# --------------------------------------------------------------------------- #
# Profile files
# --------------------------------------------------------------------------- #
def write_profile_csv(path: Union[str, Path], x: np.ndarray, intensity: np.ndarray) -> Path:
    """``x,intensity`` CSV with full round-trip precision."""
    path = Path(path)
    frame = pd.DataFrame(
        {"x": np.asarray(x, float), "intensity": np.asarray(intensity, float)}
    )
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_profile_csv(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return frame["x"].to_numpy(dtype=float), frame["intensity"].to_numpy(dtype=float)
