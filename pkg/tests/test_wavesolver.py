import threading
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gauge_optics.errors import InstabilityError, InvariantViolation, PacketPlacementError
from gauge_optics.potentials import (
    GaugeFunction,
    Region,
    apply_gauge,
    composite,
    infinite_solenoid,
    uniform_channel,
    uniform_scalar,
    zero_field,
)
from gauge_optics.wavesolver import (
    ABSORBER,
    WALL,
    GridSpec,
    Propagator,
    WaveField,
    build_links,
    build_mask,
    continuity_residual,
    gauge_rotate,
    init_packet,
    probability_current,
    propagate,
    read_snapshot,
    write_snapshot,
)


def centroid(state):
    X, Y = state.grid.mesh()
    rho = state.density
    total = np.sum(rho)
    return np.sum(X * rho) / total, np.sum(Y * rho) / total


def test_grid_validation():
    with pytest.raises(InvariantViolation):
        GridSpec(8, 64, 0.1, 0.1, 0.01)
    with pytest.raises(InvariantViolation):
        GridSpec(64, 64, 0.1, 0.0, 0.01)


def test_centered_grid(small_grid):
    assert small_grid.y[0] == pytest.approx(-small_grid.y[-1])
    assert small_grid.x[0] == 0.0
    assert small_grid.column(1.04) == 10
    assert small_grid.row(0.0) in (31, 32)
    assert small_grid.stability_ratio == pytest.approx(0.2)


def test_mask_flags_and_damping(small_grid):
    walls = np.zeros((small_grid.nx, small_grid.ny), dtype=bool)
    walls[30, :] = True
    mask = build_mask(small_grid, walls, absorber_width=8, strength=0.1)
    assert mask.flags[0, 20] == ABSORBER
    assert mask.flags[30, 20] == WALL
    assert mask.damping[0, 20] == pytest.approx(0.9)
    assert mask.damping[20, 20] == 1.0
    assert mask.damping[30, 20] == 0.0
    assert mask.absorbing
    assert not mask.active[30].any()


def test_packet_is_normalised(small_packet):
    assert small_packet.norm() == pytest.approx(1.0, rel=1e-12)
    cx, cy = centroid(small_packet)
    assert cx == pytest.approx(3.2, abs=1e-6)
    assert cy == pytest.approx(0.0, abs=1e-6)


def test_packet_placement(small_grid):
    with pytest.raises(PacketPlacementError):
        init_packet(small_grid, (0.5, 0.0), 0.5, (1.0, 0.0))
    walls = np.zeros((small_grid.nx, small_grid.ny), dtype=bool)
    walls[36, :] = True
    mask = build_mask(small_grid, walls, absorber_width=0)
    with pytest.raises(PacketPlacementError) as info:
        init_packet(small_grid, (3.2, 0.0), 0.5, (1.0, 0.0), mask)
    assert info.value.invariant == "packet inside interior region"


def test_packet_momentum_expectation(small_grid):
    packet = init_packet(small_grid, (3.2, 0.0), 0.5, (2.0, 0.0))
    spectrum = np.abs(np.fft.fft2(packet.psi)) ** 2
    kx = 2 * np.pi * np.fft.fftfreq(small_grid.nx, small_grid.dx)
    ky = 2 * np.pi * np.fft.fftfreq(small_grid.ny, small_grid.dy)
    total = np.sum(spectrum)
    assert np.sum(kx[:, None] * spectrum) / total == pytest.approx(2.0, rel=0.01)
    assert np.sum(ky[None, :] * spectrum) / total == pytest.approx(0.0, abs=1e-6)


def test_packet_at_rest_has_a_flat_phase(small_grid):
    packet = init_packet(small_grid, (3.2, 0.0), 0.5, (0.0, 0.0))
    assert_allclose(np.angle(packet.psi), 0.0, atol=1e-15)


def test_closed_box_is_unitary_over_1000_steps(small_packet):
    state = propagate(small_packet, zero_field(), steps=1000)
    assert state.steps == 1000
    assert state.time == pytest.approx(2.0)
    assert abs(state.norm() - 1.0) <= 1e-8


def test_propagation_with_walls_and_solenoid_is_unitary(small_grid):
    walls = np.zeros((small_grid.nx, small_grid.ny), dtype=bool)
    walls[45:47, 28:36] = True
    mask = build_mask(small_grid, walls, absorber_width=0)
    state = init_packet(small_grid, (2.0, 0.0), 0.3, (6.0, 0.0), mask)
    field = composite(
        infinite_solenoid((4.55, 0.0), 1.1),
        uniform_channel(Region(1.0, 2.0, -3.0, 3.0), (0.8, 0.3)),
    )
    state = propagate(state, field, steps=120)
    assert state.norm() == pytest.approx(1.0, abs=1e-11)
    assert np.all(state.psi[mask.walls] == 0.0)


@pytest.fixture
def open_box():
    return GridSpec.centered(112, 96, 0.1, 0.1, 0.002)


def test_free_packet_follows_the_free_gaussian_law(open_box):
    sigma, k0 = 0.5, (4.0, 1.0)
    packet = init_packet(open_box, (3.0, 0.0), sigma, k0)
    state = propagate(packet, zero_field(), steps=200)
    t = state.time
    x0, y0 = centroid(packet)
    x1, y1 = centroid(state)
    assert (x1 - x0) / t == pytest.approx(k0[0], rel=0.01)
    assert (y1 - y0) / t == pytest.approx(k0[1], rel=0.01)

    X, Y = open_box.mesh()
    rho = state.density / np.sum(state.density)
    width2 = sigma**2 + (t / (2 * sigma)) ** 2
    assert np.sum((X - x1) ** 2 * rho) == pytest.approx(width2, rel=0.01)
    assert np.sum((Y - y1) ** 2 * rho) == pytest.approx(width2, rel=0.01)


def test_absorber_removes_probability(small_grid):
    mask = build_mask(small_grid, absorber_width=8, strength=0.2)
    state = init_packet(small_grid, (3.2, 0.0), 0.4, (12.0, 0.0), mask)
    state = propagate(state, zero_field(), steps=200)
    assert state.norm() < 0.5


def test_link_phases_of_a_channel(small_grid):
    region = Region(1.0, 2.0, -0.5, 0.5)
    links = build_links(uniform_channel(region, (0.8, 0.0)), small_grid, q=-1.0)
    i = small_grid.column(1.5)
    j = small_grid.row(0.0)
    assert links.theta_x[i, j] == pytest.approx(-0.8 * small_grid.dx)
    assert links.theta_x[i, 0] == 0.0
    assert_allclose(links.theta_y, 0.0)
    assert_allclose(links.scalar_phase, 0.0)


def test_scalar_phase_is_q_phi_dt(small_grid):
    links = build_links(uniform_scalar(0.4), small_grid, q=-1.0)
    assert_allclose(links.scalar_phase, -0.4 * small_grid.dt)


def test_constant_potential_only_adds_a_global_phase(small_packet):
    q = -1.0
    free = propagate(small_packet, zero_field(), q=q, steps=100)
    lifted = propagate(small_packet, uniform_scalar(0.4), q=q, steps=100)
    assert_allclose(lifted.density, free.density, rtol=0, atol=1e-10)
    expected = free.psi * np.exp(-1j * q * 0.4 * free.time)
    assert_allclose(lifted.psi, expected, rtol=0, atol=1e-10)


@pytest.mark.parametrize("k", [0.01, 2.0, 6.0])
def test_plane_wave_current(small_grid, k):
    mass = 1.0
    X, _ = small_grid.mesh()
    mask = build_mask(small_grid, absorber_width=0)
    state = WaveField(np.exp(1j * k * X), 0.0, mask, small_grid)
    links = build_links(zero_field(), small_grid, mass=mass, at_midpoint=False)
    jx, jy = probability_current(state, links)
    assert_allclose(jx, np.sin(k * small_grid.dx) / (mass * small_grid.dx), rtol=1e-12)
    assert_allclose(jy, 0.0, atol=1e-12)
    if k < 0.1:
        assert np.max(np.abs(jx - k / mass)) < 1e-8


def test_gauge_covariant_step(small_packet):
    q = -1.0
    field = composite(
        uniform_scalar(0.2),
        uniform_channel(Region(3.5, 5.0, -1.0, 1.0), (1.5, -0.5)),
    )
    g = GaugeFunction.random_polynomial(
        4, degree=3, origin=(3.2, 0.0, 0.0), scale=(3.0, 3.0, 0.5), amplitude=2.0
    )
    plain = propagate(small_packet, field, q=q, steps=60)
    gauged = propagate(gauge_rotate(small_packet, g, q), apply_gauge(field, g, q), q=q, steps=60)
    assert_allclose(gauged.density, plain.density, rtol=0, atol=1e-10)
    X, Y = plain.grid.mesh()
    expected = plain.psi * np.exp(1j * q * g(X, Y, plain.time))
    assert_allclose(gauged.psi, expected, rtol=0, atol=1e-10)


def test_current_is_gauge_invariant(small_packet):
    q = -1.0
    field = infinite_solenoid((5.55, 2.0), 0.9)
    g = GaugeFunction.linear(0.6, -1.1, 0.4)
    state = propagate(small_packet, field, q=q, steps=20)
    links = build_links(field, state.grid, q, time=state.time, at_midpoint=False)
    gauged_links = build_links(
        apply_gauge(field, g, q), state.grid, q, time=state.time, at_midpoint=False
    )
    jx, jy = probability_current(state, links)
    gx, gy = probability_current(gauge_rotate(state, g, q), gauged_links)
    assert_allclose(gx, jx, rtol=0, atol=1e-12)
    assert_allclose(gy, jy, rtol=0, atol=1e-12)


def test_continuity_holds_up_to_splitting_error(small_grid):
    # slow packet: the nearest-neighbour current lags the compact operator by O((k·dx)²)
    before = init_packet(small_grid, (3.2, 0.0), 0.5, (1.5, 0.5))
    field = uniform_channel(Region(2.0, 5.0, -1.0, 1.0), (1.0, 0.5))
    links = build_links(field, small_grid, time=0.0)
    after = propagate(before, field, steps=1)
    residual = continuity_residual(before, after, links)
    rate = (after.density - before.density) / small_grid.dt
    assert np.max(np.abs(residual)) < 0.05 * np.max(np.abs(rate))


def test_threaded_lines_match_serial(small_packet):
    field = infinite_solenoid((5.55, 2.0), 0.9)
    serial = propagate(small_packet, field, steps=30)
    threaded = propagate(small_packet, field, steps=30, workers=3)
    assert np.array_equal(threaded.psi, serial.psi)


def test_run_stops_on_cancel(small_packet):
    cancel = threading.Event()
    seen = []

    def callback(state):
        seen.append(state.steps)
        if state.steps == 5:
            cancel.set()

    with Propagator(zero_field(), small_packet.grid, small_packet.mask) as prop:
        state = prop.run(small_packet, 50, callback, cancel)
    assert state.steps == 5
    assert seen == [1, 2, 3, 4, 5]


def test_non_finite_amplitude_raises(small_packet):
    psi = small_packet.psi.copy()
    psi[10, 10] = np.nan
    with pytest.raises(InstabilityError) as info:
        propagate(replace(small_packet, psi=psi), zero_field(), steps=3)
    assert info.value.details["step"] == 1


@pytest.mark.parametrize("suffix", [".csv", ".npz"])
def test_snapshot_files(tmp_path, small_packet, suffix):
    state = propagate(small_packet, zero_field(), steps=5)
    path = write_snapshot(state, tmp_path / f"state{suffix}")
    header, density, phase = read_snapshot(path)
    assert int(header["nx"]) == state.grid.nx
    assert header["time"] == pytest.approx(state.time)
    assert_allclose(density, state.density, rtol=1e-15, atol=0)
    assert_allclose(phase, np.angle(state.psi), rtol=1e-15, atol=0)
