import numpy as np
import pytest
import scipy.integrate as sint

from starklab.errors import DivergentTail, FrameMismatch
from starklab.grids import (
    PacketProfile,
    State,
    boost,
    inner,
    make_grid,
    make_packet,
    momentum_expectation,
    position_expectation,
)
from starklab.potentials import (
    GaussianForm,
    IsotropicPowerForm,
    PotentialPart,
    PotentialSpec,
)
from starklab.propagators import (
    apply_counterterm,
    apply_modifier,
    combine_phases,
    dollard_phase,
    dt_max,
    free_schrodinger,
    free_stark,
    full_propagate,
    graf_phase,
    support_mask,
)


@pytest.fixture(scope="module")
def boosted(packet):
    return boost(packet, np.array([1.5, 4.0]))


def test_free_schrodinger_identity(packet):
    assert free_schrodinger(packet, 0.0) is packet


def test_free_schrodinger_gaussian_spreading(grid128):
    g = grid128
    sig0 = 2.0
    x2 = np.sum(g.x_mesh**2, axis=-1)
    vals = np.exp(-x2 / (2 * sig0**2)).astype(complex)
    gs = State(g, vals / g.norm(vals))
    for t in (0.5, 1.0, 2.0):
        st = free_schrodinger(gs, t)
        w = np.abs(st.values) ** 2
        var = float((w * g.x_mesh[..., 0] ** 2).sum() / w.sum())
        exact = sig0**2 / 2 + t**2 / (2 * sig0**2)
        assert var == pytest.approx(exact, rel=1e-9)


def test_free_schrodinger_group_law(boosted):
    a = free_schrodinger(free_schrodinger(boosted, 0.7), 1.3)
    b = free_schrodinger(boosted, 2.0)
    assert np.max(np.abs(a.values - b.values)) < 1e-12
    assert np.max(np.abs(a.frame_center - b.frame_center)) < 1e-12


def test_free_stark_group_law(boosted):
    a = free_stark(free_stark(boosted, 0.7), 1.3)
    b = free_stark(boosted, 2.0)
    assert np.max(np.abs(a.values - b.values)) < 1e-12


def test_free_stark_identity_and_unitarity(boosted):
    assert free_stark(boosted, 0.0) is boosted
    st = free_stark(boosted, 3.0)
    assert st.grid.norm(st.values) == pytest.approx(boosted.norm, abs=1e-12)


@pytest.mark.parametrize("t", [1.0, 2.0, 4.0])
def test_free_stark_ehrenfest(t):
    g = make_grid(2, 256, 50.0)
    p = boost(make_packet(g, PacketProfile(eta=1.0)), np.array([1.5, 4.0]))
    st = free_stark(p, t)
    x_exact = np.array([1.5 * t + 0.5 * t * t, 4.0 * t])
    p_exact = np.array([1.5 + t, 4.0])
    assert np.max(np.abs(position_expectation(st) - x_exact)) < 1e-8
    assert np.max(np.abs(momentum_expectation(st) - p_exact)) < 1e-8


def test_full_propagate_free_matches_exact(boosted):
    out, rep = full_propagate(boosted, None, 0.0, 2.0, dt=0.01)
    ref = free_stark(boosted, 2.0)
    assert boosted.grid.norm(out.values - ref.values) < 1e-10
    assert rep.norm_drift < 1e-12


def test_full_propagate_second_order(grid128, gaussian_s):
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 2.0]))
    ref, _ = full_propagate(p, gaussian_s, 0.0, 1.0, dt=0.00125)
    errs = []
    for dt in (0.01, 0.005):
        out, _ = full_propagate(p, gaussian_s, 0.0, 1.0, dt=dt)
        errs.append(grid128.norm(out.values - ref.values))
    order = np.log2(errs[0] / errs[1])
    assert order == pytest.approx(2.0, abs=0.1)


def test_full_propagate_reversibility(grid128, gaussian_s):
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([1.5, 4.0]))
    fwd, _ = full_propagate(p, gaussian_s, 0.0, 1.0, dt=0.005)
    back, _ = full_propagate(fwd, gaussian_s, 1.0, 0.0, dt=0.005)
    assert grid128.norm(back.values - p.values) < 1e-8


def test_dt_cap(gaussian_s):
    assert dt_max(None) == pytest.approx(0.01)
    assert dt_max(gaussian_s) == pytest.approx(0.01 / 1.5)
    p = make_packet(make_grid(2, 64, 20.0), PacketProfile(eta=1.0))
    with pytest.raises(ValueError):
        full_propagate(p, gaussian_s, 0.0, 0.1, dt=0.5)


def test_graf_phase_zero_potential():
    zero = GaussianForm(0.0, (0, 0), (1, 1))
    ph = graf_phase(zero, np.array([0.0, 4.0]), 5.0)
    assert ph.scalar == 0.0


def test_graf_phase_infinite_horizon_matches_dense_simpson():
    form = IsotropicPowerForm(1.0, 0.8)
    v = np.array([0.0, 4.0])
    ph = graf_phase(form, v, np.inf)
    s = np.linspace(0, 2000.0, 2_000_001)
    e1 = np.array([1.0, 0.0])
    vals = form.value(v[None, :] * s[:, None] + 0.5 * e1[None, :] * s[:, None] ** 2)
    assert ph.scalar == pytest.approx(sint.simpson(vals, x=s), abs=1e-8)


def test_graf_phase_oddness():
    form = IsotropicPowerForm(1.0, 0.8)
    v = np.array([0.0, 4.0])
    a = graf_phase(form, v, 3.0).scalar
    b = graf_phase(form, -v, -3.0).scalar
    assert a + b == pytest.approx(0.0, abs=1e-10)


def test_graf_phase_aligned_infinite_rejected():
    form = IsotropicPowerForm(1.0, 0.8)
    with pytest.raises(DivergentTail):
        graf_phase(form, np.array([2.0, 0.0]), np.inf)


def test_dollard_phase_zero_and_single_node(grid128):
    zero = GaussianForm(0.0, (0, 0), (1, 1))
    mask = np.zeros(grid128.shape, bool)
    mask[0, 0] = True
    ph = dollard_phase(zero, 10.0, grid128, np.zeros(2), mask=mask)
    assert np.all(ph.diag == 0.0)

    form = IsotropicPowerForm(1.0, 0.45)
    i = int(np.argmin(np.abs(grid128.xi_axis - 0.0)))
    j = int(np.argmin(np.abs(grid128.xi_axis - 2.0)))
    mask = np.zeros(grid128.shape, bool)
    mask[i, j] = True
    ph = dollard_phase(form, 10.0, grid128, np.zeros(2), mask=mask)
    xi = np.array([grid128.xi_axis[i], grid128.xi_axis[j]])
    e1 = np.array([1.0, 0.0])
    ref, _ = sint.quad(lambda s: float(form.value(xi * s + 0.5 * e1 * s * s)), 0, 10.0, epsabs=1e-13)
    assert ph.diag[i, j] == pytest.approx(ref, abs=1e-9)


def test_dollard_long_range_infinite_rejected(grid128, slow_l):
    with pytest.raises(DivergentTail):
        dollard_phase(slow_l.l_part.form, np.inf, grid128, np.zeros(2), long_range=True)


def test_modifier_inverse_and_frame_checks(grid128, slow_l):
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 4.0]))
    ph = dollard_phase(slow_l.l_part.form, 2.0, grid128, p.boost, mask=support_mask(p))
    roundtrip = apply_modifier(apply_modifier(p, ph, 1), ph, -1)
    assert np.max(np.abs(roundtrip.values - p.values)) < 1e-14
    other = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 5.0]))
    with pytest.raises(FrameMismatch):
        apply_modifier(other, ph)


def test_modifiers_commute_with_momentum_diagonal(grid128, slow_l):
    # both the phase and the free kernel are momentum-diagonal
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 4.0]))
    ph = dollard_phase(slow_l.l_part.form, 1.5, grid128, p.boost, mask=support_mask(p))
    a = free_schrodinger(apply_modifier(p, ph), 0.7)
    b = apply_modifier(free_schrodinger(p, 0.7), ph)
    assert grid128.norm(a.values - b.values) < 1e-13


def test_scalar_modifier_commutes_with_momentum(packet):
    from starklab.grids import apply_momentum
    from starklab.propagators import ModifierPhase

    ph = ModifierPhase("graf_s", 1.0, np.zeros(2), scalar=0.42)
    a = apply_momentum(apply_modifier(packet, ph), 2)
    b = apply_modifier(apply_momentum(packet, 2), ph)
    assert np.max(np.abs(a.values - b.values)) == 0.0


def test_combine_phases(grid128, slow_l, gaussian_s):
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 4.0]))
    mask = support_mask(p)
    ph1 = dollard_phase(slow_l.l_part.form, 2.0, grid128, p.boost, mask=mask)
    ph2 = graf_phase(gaussian_s.s_part.form, p.boost, 2.0)
    both = combine_phases(ph1, ph2)
    a = apply_modifier(p, both)
    b = apply_modifier(apply_modifier(p, ph1), ph2)
    assert grid128.norm(a.values - b.values) < 1e-13


def test_counterterm_against_classical_argument(grid128, slow_l):
    p = boost(make_packet(grid128, PacketProfile(eta=1.0)), np.array([0.0, 4.0]))
    st = free_stark(p, 1.5)
    out = apply_counterterm(st, [slow_l.l_part.form], 1.5)
    kappa = grid128.xi_mesh + st.boost
    e1 = np.array([1.0, 0.0])
    arg = kappa * 1.5 - 0.5 * e1 * 1.5**2
    ref = grid128.ifft(slow_l.l_part.form.value(arg) * grid128.fft(st.values))
    assert np.max(np.abs(out.values - ref)) == 0.0


def _dense_momentum_ops(n, L):
    """Dense x_j and p_j matrices on an n x n periodic grid (2-D)."""
    import scipy.fft as sfft

    g = make_grid(2, n, L)
    N = n * n
    x = g.x_mesh.reshape(N, 2)
    F1 = sfft.fft(np.eye(n), axis=0)
    IF1 = sfft.ifft(np.eye(n), axis=0)
    xi = np.diag(g.xi_axis)
    p1d = IF1 @ xi @ F1
    P1 = np.kron(p1d, np.eye(n))
    P2 = np.kron(np.eye(n), p1d)
    X1 = np.diag(x[:, 0])
    X2 = np.diag(x[:, 1])
    return g, X1, X2, P1, P2


def test_position_momentum_split_identity_dense():
    """Weak-form check of the two-term split of f(x) - f(pt) for quadratic f.

    For f(z) = (a.z)^2 the exact operator identity

        f(x) - f(pt) = grad f((x + pt)/2) . (x - pt) + i t |a|^2

    (ordered as written) follows from the canonical commutator; it is
    verified in expectation on a band-limited packet against dense matrices.
    """
    g, X1, X2, P1, P2 = _dense_momentum_ops(32, 12.0)
    t = 0.7
    a = np.array([0.6, -0.8])
    A = a[0] * X1 + a[1] * X2  # a.x
    B = t * (a[0] * P1 + a[1] * P2)  # a.p t
    lhs = A @ A - B @ B
    G = A + B  # 2 * a.((x+pt)/2)
    rhs = (
        G @ (a[0] * (X1 - t * P1) + a[1] * (X2 - t * P2))
        + 1j * t * (a @ a) * np.eye(A.shape[0])
    )
    psi = make_packet(g, PacketProfile(eta=1.0)).values.reshape(-1)
    num = psi.conj() @ ((lhs - rhs) @ psi) * g.cell_volume
    den = abs(psi.conj() @ (lhs @ psi) * g.cell_volume) + 1.0
    assert abs(num) / den < 1e-6
