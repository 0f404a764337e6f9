import numpy as np
import pytest
from numpy.testing import assert_allclose

from gauge_optics.analysis import (
    compare_profiles,
    default_window,
    fringe_extract,
    read_profile_csv,
    single_peak_summary,
    unwrap_shifts,
    wrap_fringes,
    write_profile_csv,
)
from gauge_optics.errors import (
    InsufficientFringesError,
    InvariantViolation,
    ProfileMismatchError,
)

SPACING = 0.9375


def fringes(x, shift=0.0, spacing=SPACING, envelope=6.0, floor=0.0):
    """cos² fringes under a Gaussian envelope, moved by ``shift`` fringes."""
    phase = np.pi * (x - shift * spacing) / spacing
    return np.exp(-(x**2) / (2 * envelope**2)) * (np.cos(phase) ** 2 + floor)


@pytest.fixture
def screen():
    return np.linspace(-8.0, 8.0, 1601)


def test_spacing_and_visibility(screen):
    report = fringe_extract(screen, fringes(screen))
    assert report.fringe_spacing == pytest.approx(SPACING, rel=2e-3)
    assert report.spacing_uncertainty < 0.01
    assert report.central_max_position == pytest.approx(0.0, abs=1e-3)
    assert report.visibility == pytest.approx(1.0, abs=1e-3)
    assert report.shift_vs_reference is None
    assert report.window == pytest.approx(default_window(screen))


def test_visibility_with_a_floor(screen):
    report = fringe_extract(screen, fringes(screen, floor=0.25))
    # (1.25 - 0.25) / (1.25 + 0.25)
    assert report.visibility == pytest.approx(2.0 / 3.0, abs=5e-3)


@pytest.mark.parametrize("shift", [0.1, 0.25, -0.3, 0.45])
def test_shift_against_reference(screen, shift):
    reference = fringe_extract(screen, fringes(screen))
    report = fringe_extract(screen, fringes(screen, shift), reference=reference)
    assert report.shift_vs_reference == pytest.approx(shift, abs=5e-3)


def test_whole_fringe_shift_wraps_to_zero(screen):
    reference = fringe_extract(screen, fringes(screen))
    report = fringe_extract(screen, fringes(screen, 1.0), reference=reference)
    assert report.shift_vs_reference == pytest.approx(0.0, abs=5e-3)


def test_half_fringe_shift_is_sign_ambiguous(screen):
    reference = fringe_extract(screen, fringes(screen))
    report = fringe_extract(screen, fringes(screen, 0.5), reference=reference)
    assert abs(abs(report.shift_vs_reference) - 0.5) < 5e-3


def test_too_few_fringes(screen):
    single = np.exp(-(screen**2))
    with pytest.raises(InsufficientFringesError) as info:
        fringe_extract(screen, single)
    assert info.value.details["maxima"] == 1


def test_negative_profile_rejected(screen):
    profile = fringes(screen)
    profile[10] = -1e-3
    with pytest.raises(InvariantViolation):
        fringe_extract(screen, profile)


def test_custom_window(screen):
    report = fringe_extract(screen, fringes(screen), window=(-1.5, 1.5))
    assert len(report.maxima_positions) == 3
    assert report.fringe_spacing == pytest.approx(SPACING, rel=2e-3)


@pytest.mark.parametrize("scale", [1e-6, 7.5, 1e4])
def test_extraction_ignores_overall_scale(screen, scale):
    base = fringe_extract(screen, fringes(screen, floor=0.1))
    scaled = fringe_extract(screen, scale * fringes(screen, floor=0.1))
    for name in ("fringe_spacing", "spacing_uncertainty", "central_max_position", "visibility"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), rel=1e-12, abs=1e-12)
    assert_allclose(scaled.maxima_positions, base.maxima_positions, rtol=0, atol=1e-12)


def test_spacing_survives_one_percent_noise(rng):
    x = np.linspace(-15.0, 15.0, 3001)
    clean = fringes(x, envelope=8.0)
    noisy = clean * (1.0 + 0.01 * rng.uniform(-1.0, 1.0, size=x.size))
    report = fringe_extract(x, noisy, window=(-14.5, 14.5))
    assert abs(report.fringe_spacing - SPACING) / SPACING <= 0.005


def test_threshold_follows_the_global_maximum(screen):
    profile = fringes(screen)
    profile[screen < -7.5] = 100.0
    with pytest.raises(InsufficientFringesError):
        fringe_extract(screen, profile, window=(-5.0, 5.0))
    # the same fringes pass once the spike is gone
    assert len(fringe_extract(screen, fringes(screen), window=(-5.0, 5.0)).maxima_positions) > 3


def test_wrap_and_unwrap():
    assert wrap_fringes(0.75) == pytest.approx(-0.25)
    assert wrap_fringes(-0.5) == pytest.approx(0.5)
    assert wrap_fringes(1.2) == pytest.approx(0.2)
    assert_allclose(unwrap_shifts([0.0, 0.3, -0.4, -0.1]), [0.0, 0.3, 0.6, 0.9])


def test_compare_identical_profiles(screen):
    profile = fringes(screen)
    result = compare_profiles(screen, profile, screen, 3.0 * profile)
    assert result.max_abs_dev == pytest.approx(0.0, abs=1e-15)
    assert result.rms_dev == pytest.approx(0.0, abs=1e-15)
    assert result.shift_estimate == pytest.approx(0.0, abs=1e-6)


def test_compare_detects_displacement(screen):
    moved = fringes(screen - 0.2, envelope=2.0)
    result = compare_profiles(screen, fringes(screen, envelope=2.0), screen, moved)
    assert result.shift_estimate == pytest.approx(0.2, abs=0.01)
    assert result.max_abs_dev > 0.1


def test_compare_resamples_other_grids(screen):
    coarse = np.linspace(-6.0, 6.0, 601)
    result = compare_profiles(screen, fringes(screen), coarse, fringes(coarse))
    assert result.max_abs_dev < 5e-3
    with pytest.raises(ProfileMismatchError):
        compare_profiles(screen, fringes(screen), screen + 20.0, fringes(screen))


def test_single_peak_summary(screen):
    profile = 2.0 * np.exp(-((screen - 1.0) ** 2) / (2 * 0.5**2))
    summary = single_peak_summary(screen, profile)
    assert summary["centroid"] == pytest.approx(1.0, abs=1e-6)
    assert summary["peak_position"] == pytest.approx(1.0, abs=1e-4)
    assert summary["rms_width"] == pytest.approx(0.5, rel=1e-4)
    assert summary["total"] == pytest.approx(2.0 * 0.5 * np.sqrt(2 * np.pi), rel=1e-6)
    with pytest.raises(InsufficientFringesError):
        single_peak_summary(screen, np.zeros_like(screen))


def test_profile_csv(tmp_path, screen):
    profile = fringes(screen)
    path = write_profile_csv(tmp_path / "profile.csv", screen, profile)
    assert path.read_text().splitlines()[0] == "x,intensity"
    x, intensity = read_profile_csv(path)
    assert np.array_equal(x, screen)
    assert np.array_equal(intensity, profile)
