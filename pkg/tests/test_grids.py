import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starklab.errors import DimensionTooLow, FrameMismatch, NonPowerOfTwo, NyquistViolation
from starklab.grids import (
    PacketProfile,
    State,
    apply_momentum,
    apply_multiplier,
    boost,
    boundary_band_mass,
    inner,
    make_grid,
    make_packet,
    momentum_expectation,
    position_expectation,
    spectral_mass_outside,
)


def test_grid_spacings():
    g = make_grid(2, 256, 20.0)
    assert g.dx == pytest.approx(40.0 / 256)
    assert g.dk == pytest.approx(np.pi / 20.0)
    assert g.xi_axis.min() == pytest.approx(-np.pi / g.dx)


def test_grid_rejects_dimension_one():
    with pytest.raises(DimensionTooLow):
        make_grid(1, 64, 10.0)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(NonPowerOfTwo):
        make_grid(2, 100, 10.0)
    with pytest.raises(NonPowerOfTwo):
        make_grid(2, 8, 10.0)


def test_fft_roundtrip(grid_small):
    rng = np.random.default_rng(0)
    f = rng.normal(size=grid_small.shape) + 1j * rng.normal(size=grid_small.shape)
    back = grid_small.ifft(grid_small.fft(f))
    assert grid_small.norm(back - f) / grid_small.norm(f) < 1e-12


def test_parseval(packet):
    g = packet.grid
    assert g.norm(packet.values) == pytest.approx(g.spectral_norm(g.fft(packet.values)), abs=1e-12)


def test_packet_norm_and_support(packet):
    assert packet.norm == pytest.approx(1.0, abs=1e-10)
    assert spectral_mass_outside(packet, 1.0) < 1e-10


def test_packet_center():
    g = make_grid(2, 256, 50.0)
    p = make_packet(g, PacketProfile(eta=1.0, center=(3.0, 0.0)))
    assert np.max(np.abs(position_expectation(p) - [3.0, 0.0])) < 1e-6


def test_packet_nyquist_violation():
    g = make_grid(2, 64, 10.0)  # dx = 0.3125, band edge ~ 10.05
    with pytest.raises(NyquistViolation):
        make_packet(g, PacketProfile(eta=10.0))


def test_boost_identity_and_inverse(packet):
    assert boost(packet, np.zeros(2)) is packet
    v = np.array([1.5, -4.0])
    back = boost(boost(packet, v), -v)
    assert np.max(np.abs(back.values - packet.values)) < 1e-12


def test_boost_momentum_shift(packet):
    pv = boost(packet, np.array([0.0, 8.0]))
    assert np.max(np.abs(momentum_expectation(pv) - [0.0, 8.0])) < 1e-6


@settings(max_examples=20, deadline=None)
@given(
    vx=st.floats(-20, 20),
    vy=st.floats(-20, 20),
    axis=st.sampled_from([1, 2]),
)
def test_boost_covariance_of_momentum(vx, vy, axis):
    g = make_grid(2, 64, 20.0)
    p0 = make_packet(g, PacketProfile(eta=1.0))
    v = np.array([vx, vy])
    pv = boost(p0, v)
    lhs = inner(pv, apply_momentum(pv, axis)).real - v[axis - 1]
    rhs = inner(p0, apply_momentum(p0, axis)).real
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_inner_convention(packet, packet_offset):
    # linear in the first slot, conjugate-linear in the second
    a, b = packet, packet_offset
    z = 0.3 + 0.7j
    assert inner(a.scaled(z), b) == pytest.approx(z * inner(a, b), abs=1e-12)
    assert inner(a, b.scaled(z)) == pytest.approx(np.conj(z) * inner(a, b), abs=1e-12)
    assert inner(a, a) == pytest.approx(1.0, abs=1e-10)


def test_inner_frame_mismatch(packet):
    pv = boost(packet, np.array([0.0, 2.0]))
    with pytest.raises(FrameMismatch):
        inner(packet, pv)


def test_apply_multiplier_identity_and_coords(packet_offset):
    out = apply_multiplier(packet_offset, 1)
    assert np.array_equal(out.values, packet_offset.values)
    # multiplying by x1 shifts the position expectation integrand
    val = inner(apply_multiplier(packet_offset, lambda x: x[..., 0]), packet_offset).real
    assert val == pytest.approx(position_expectation(packet_offset)[0], abs=1e-8)


def test_momentum_multiplier_offset(packet):
    pv = boost(packet, np.array([0.0, 8.0]))
    pj = apply_momentum(pv, 2)
    # (p_j - v_j) Phi_v equals the boosted p_j Phi_0
    expected = boost(apply_momentum(packet, 2), np.array([0.0, 8.0]))
    diff = pj.values - 8.0 * pv.values - expected.values
    assert packet.grid.norm(diff) < 1e-10


def test_boundary_band_mass_small(packet):
    assert boundary_band_mass(packet) < 1e-8
