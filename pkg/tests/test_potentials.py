import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starklab.errors import (
    ClassMismatch,
    DecayViolation,
    DerivativeOrderUnsupported,
    MissingPart,
)
from starklab.potentials import (
    AnisotropicPowerForm,
    GaussianForm,
    IsotropicPowerForm,
    OscillatoryPowerForm,
    PotentialPart,
    PotentialSpec,
    SumForm,
    check_thresholds,
    eval_deriv,
    eval_part,
    spec_from_mapping,
    spec_to_mapping,
    validate_decay,
)

ALL_FORMS = [
    GaussianForm(1.0, (0.3, -0.2), (1.5, 2.5)),
    IsotropicPowerForm(0.8, 0.8),
    OscillatoryPowerForm(0.5, 0.8, 0.5, 1.3, 0.4),
    AnisotropicPowerForm(0.7, 1.2, 0.9),
    SumForm((GaussianForm(0.5, (1.0, 0.0), (1.0, 1.0)), IsotropicPowerForm(0.3, 1.1))),
]


@pytest.mark.parametrize("form", ALL_FORMS, ids=lambda f: type(f).__name__)
def test_derivatives_match_finite_differences(form):
    rng = np.random.default_rng(7)
    X = rng.normal(scale=3.0, size=(20, 2))
    h = 1e-4
    grad = form.gradient(X)
    hess = form.hessian(X)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (form.value(X + e) - form.value(X - e)) / (2 * h)
        assert np.max(np.abs(fd - grad[..., j]) / (1.0 + np.abs(fd))) < 1e-6
        for k in range(2):
            ek = np.zeros(2)
            ek[k] = h
            fd2 = (
                form.value(X + e + ek)
                - form.value(X + e - ek)
                - form.value(X - e + ek)
                + form.value(X - e - ek)
            ) / (4 * h * h)
            assert np.max(np.abs(fd2 - hess[..., j, k]) / (1.0 + np.abs(fd2))) < 1e-5


@pytest.mark.parametrize("form", ALL_FORMS, ids=lambda f: type(f).__name__)
def test_envelope_bounds_derivatives(form):
    rng = np.random.default_rng(11)
    dirs = rng.normal(size=(64, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for u in (2.0, 5.0, 17.0, 60.0):
        pts = u * dirs
        assert np.max(np.abs(form.value(pts))) <= form.envelope(u, 0) * (1 + 1e-9)
        g = np.linalg.norm(form.gradient(pts), axis=-1)
        assert np.max(g) <= form.envelope(u, 1) * (1 + 1e-9) * math.sqrt(2)
        lap = np.abs(np.trace(form.hessian(pts), axis1=-2, axis2=-1))
        assert np.max(lap) <= 2 * form.envelope(u, 2) * (1 + 1e-9)


def test_gaussian_derivative_example():
    spec = PotentialSpec(
        s_part=PotentialPart(GaussianForm(1.0, (0, 0), (1.0, 1.0)), "s", gamma0=0.8, gamma1=1.3)
    )
    got = eval_deriv(spec, "s", (1, 0), np.array([1.0, 0.0]))
    assert got == pytest.approx(-2.0 * np.exp(-1.0), abs=1e-12)


def test_power_value_at_origin():
    spec = PotentialSpec(
        s_part=PotentialPart(IsotropicPowerForm(1.0, 0.8), "s", gamma0=0.8, gamma1=1.8)
    )
    assert eval_part(spec, "s", np.zeros(2)) == pytest.approx(1.0)


def test_missing_part_and_order_errors(power_s):
    with pytest.raises(MissingPart):
        eval_part(power_s, "l", np.zeros(2))
    # C^1-only short-range part rejects second derivatives
    with pytest.raises(DerivativeOrderUnsupported):
        eval_deriv(power_s, "s", (1, 1), np.zeros(2))


def test_window_validation():
    with pytest.raises(ValueError):
        PotentialSpec(s_part=PotentialPart(IsotropicPowerForm(1.0, 0.4), "s", gamma0=0.4, gamma1=1.2))
    with pytest.raises(ValueError):
        PotentialSpec(l_part=PotentialPart(IsotropicPowerForm(1.0, 0.6), "l", gamma_d=0.6))


def test_validate_decay_power_and_gaussian(power_s, gaussian_s):
    fitted = validate_decay(power_s, "s")
    assert fitted[0] == pytest.approx(-0.8, abs=0.05)
    validate_decay(gaussian_s, "s")  # super-polynomial decay passes trivially


def test_validate_decay_oscillatory_classes(slow_l):
    fitted = validate_decay(slow_l, "l")
    assert fitted[1] <= -0.85  # declared gamma_d + 1/2 = 0.95 with 0.1 margin


def test_validate_decay_violation():
    bad = PotentialSpec(
        s_part=PotentialPart(IsotropicPowerForm(1.0, 0.4), "s", gamma0=0.8, gamma1=1.8)
    )
    with pytest.raises(DecayViolation) as err:
        validate_decay(bad, "s")
    assert err.value.fitted_slope > -0.7


def test_thresholds_examples():
    s13 = PotentialSpec(
        s_part=PotentialPart(IsotropicPowerForm(1.0, 0.8), "s", gamma0=0.8, gamma1=1.3)
    )
    assert check_thresholds(s13, "1.1").passed
    s125 = PotentialSpec(
        s_part=PotentialPart(IsotropicPowerForm(1.0, 0.8), "s", gamma0=0.8, gamma1=1.25)
    )
    verdict = check_thresholds(s125, "1.1")
    assert not verdict.passed and verdict.violated_conditions


def test_threshold_smooth_long_example():
    spec = PotentialSpec(
        s_part=PotentialPart(
            OscillatoryPowerForm(1.0, 0.8, 0.75), "s", gamma0=0.8, gamma1=1.05, gamma2=1.3
        ),
        l_part=PotentialPart(OscillatoryPowerForm(0.5, 0.45, 0.5), "l", gamma_d=0.45),
    )
    assert check_thresholds(spec, "1.4").passed


def test_threshold_class_mismatch(gaussian_s, slow_l):
    with pytest.raises(ClassMismatch):
        check_thresholds(gaussian_s, "1.2")  # needs a long-range part
    with pytest.raises(ClassMismatch):
        check_thresholds(slow_l, "1.1")  # short-range theorem with l present
    with pytest.raises(ClassMismatch):
        check_thresholds(gaussian_s, "1.3")  # needs declared C^2 (gamma2)


@settings(max_examples=60, deadline=None)
@given(
    g0=st.floats(0.51, 1.0),
    f1=st.floats(0.01, 0.99),
    bump1=st.floats(0.0, 0.2),
    gd=st.floats(0.26, 0.5),
    bump_d=st.floats(0.0, 0.1),
)
def test_threshold_monotonicity(g0, f1, bump1, gd, bump_d):
    """Increasing any exponent never flips a verdict from pass to fail."""
    g1 = 1.0 + f1 * g0
    g1_up = min(g1 + bump1, 1.0 + g0)
    gd_up = min(gd + bump_d, 0.5)

    def verdict(g1v, gdv):
        spec = PotentialSpec(
            s_part=PotentialPart(IsotropicPowerForm(1.0, g0), "s", gamma0=g0, gamma1=g1v),
            l_part=PotentialPart(IsotropicPowerForm(0.3, gdv), "l", gamma_d=gdv),
        )
        return check_thresholds(spec, "1.2").passed

    if verdict(g1, gd):
        assert verdict(g1_up, gd_up)


def test_config_mapping_roundtrip():
    spec = PotentialSpec(
        s_part=PotentialPart(
            OscillatoryPowerForm(1.0, 0.8, 0.75, 2.0), "s", gamma0=0.8, gamma1=1.05, gamma2=1.3
        ),
        l_part=PotentialPart(OscillatoryPowerForm(0.5, 0.45, 0.5, 2.0), "l", gamma_d=0.45),
        vs_part=PotentialPart(GaussianForm(0.4, (0.0, 0.0), (1.0, 2.0)), "vs", gamma_vs=2.0),
    )
    assert spec_from_mapping(spec_to_mapping(spec)) == spec
