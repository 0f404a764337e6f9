import math

import numpy as np
import pytest

from gauge_optics.potentials import GaugeFunction
from gauge_optics.scenarios import (
    GeometrySpec,
    PacketSpec,
    RunSettings,
    ScenarioConfig,
)
from gauge_optics.wavesolver import GridSpec, build_mask, init_packet

# Small interferometer: λ = 2π/10, d = 2.5, L = 5.7, about 1.4 per fringe.
TINY_K = 10.0
TINY_SLIT_SEPARATION = 2.5


@pytest.fixture
def small_grid():
    """64×64 box without absorbers, for solver unit tests."""
    return GridSpec.centered(64, 64, 0.1, 0.1, 0.002)


@pytest.fixture
def small_packet(small_grid):
    mask = build_mask(small_grid, absorber_width=0)
    return init_packet(small_grid, (3.2, 0.0), 0.5, (4.0, 1.0), mask)


def make_tiny_config(kind="double_slit", **geometry):
    grid = GridSpec.centered(240, 128, 0.1, 0.1, 0.0025)
    spec = dict(
        barrier_x=10.5,
        barrier_thickness=0.3,
        slit_separation=TINY_SLIT_SEPARATION,
        slit_width=0.4,
        screen_x=16.5,
        channel_length=1.5,
        channel_width=0.8,
    )
    spec.update(geometry)
    packet = PacketSpec(center=(5.0, 0.0), sigma=0.8, k0=(TINY_K, 0.0))
    if kind == "free":
        packet = PacketSpec(center=(5.0, 0.0), sigma=0.8, k0=(4.0, 0.0))
    return ScenarioConfig(
        kind=kind,
        grid=grid,
        packet=packet,
        geometry=GeometrySpec(**spec),
        run=RunSettings(max_steps=1200, check_every=20),
        name=f"tiny_{kind}",
    )


@pytest.fixture
def tiny_gauges():
    """A static, a time-dependent linear and a random cubic gauge."""
    return [
        GaugeFunction.constant(0.5 * math.pi),
        GaugeFunction.linear(0.7, -0.4, 0.3),
        GaugeFunction.random_polynomial(
            3,
            degree=3,
            origin=(12.0, 0.0, 0.0),
            scale=(12.0, 6.4, 3.0),
            amplitude=1.5,
        ),
    ]


TINY_SCENARIO_TOML = """\
kind = "{kind}"
name = "tiny_{kind}"

[grid]
nx = 240
ny = 128
dx = 0.1
dt = 0.0025

[packet]
center = [5.0, 0.0]
sigma = 0.8
k0 = [{k0}, 0.0]

[geometry]
barrier_x = 10.5
barrier_thickness = 0.3
slit_separation = 2.5
slit_width = 0.4
screen_x = {screen_x}
channel_length = 1.5
channel_width = 0.8
{extra}

[run]
max_steps = 1200
check_every = 20
"""


@pytest.fixture
def write_scenario(tmp_path):
    """Write a small scenario TOML file and return its path."""

    def write(kind="double_slit", k0=TINY_K, screen_x=16.5, extra="", name=None):
        path = tmp_path / (name or f"{kind}.toml")
        path.write_text(
            TINY_SCENARIO_TOML.format(kind=kind, k0=k0, screen_x=screen_x, extra=extra),
            encoding="utf-8",
        )
        return path

    return write


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
