import numpy as np
import pytest

from starklab.grids import PacketProfile, make_grid, make_packet
from starklab.potentials import (
    GaussianForm,
    IsotropicPowerForm,
    OscillatoryPowerForm,
    PotentialPart,
    PotentialSpec,
)


@pytest.fixture(scope="session")
def grid128():
    """Standard scattering grid: fits boosted-frame runs with eta = 1 packets."""
    return make_grid(2, 128, 50.0)


@pytest.fixture(scope="session")
def grid_small():
    return make_grid(2, 64, 20.0)


@pytest.fixture(scope="session")
def packet(grid128):
    return make_packet(grid128, PacketProfile(eta=1.0))


@pytest.fixture(scope="session")
def packet_offset(grid128):
    return make_packet(grid128, PacketProfile(eta=1.0, center=(0.5, -0.3)))


@pytest.fixture(scope="session")
def gaussian_s():
    """Smooth short-range potential: gamma exponents trivially satisfied."""
    return PotentialSpec(
        s_part=PotentialPart(GaussianForm(0.5, (0.0, 0.0), (1.5, 1.5)), "s", gamma0=0.8, gamma1=1.3)
    )


@pytest.fixture(scope="session")
def power_s():
    return PotentialSpec(
        s_part=PotentialPart(IsotropicPowerForm(0.5, 0.8), "s", gamma0=0.8, gamma1=1.8)
    )


@pytest.fixture(scope="session")
def slow_l():
    """Long-range part at the half-order-per-derivative class shape."""
    return PotentialSpec(
        l_part=PotentialPart(OscillatoryPowerForm(0.4, 0.45, 0.5, 2.0), "l", gamma_d=0.45)
    )
