import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crackfield.errors import AdmissibilityError, ModelError
from crackfield.phase import (
    ShearModelParams,
    critical_density,
    critical_line,
    critical_point,
    dsigma_dp,
    emission_log_derivative,
    free_energy,
    free_energy_derivative,
    maxwell_sigma,
    p_min,
    predicted_b,
    printed_critical_point,
    sigma_of_p,
    spinodal_scan,
    stationary_roots,
    turning_points,
)

P = ShearModelParams(c0=1.0, c1=100.0, H=2.0, U=1.0, theta=0.5, v0=1.0, beta=1.0)


@given(st.floats(0.001, 0.999))
def test_critical_density_solves_quadratic(theta):
    p = critical_density(theta)
    assert 0.5 <= p < 1
    assert theta * p * p + 2 * (1 - theta) * p - 1 == pytest.approx(0, abs=1e-14)


@settings(max_examples=30)
@given(st.floats(0.05, 0.95), st.floats(0.0, 0.8), st.integers(1, 3))
def test_derivatives_against_differences(x, sigma, order):
    h = 1e-4
    f = lambda s: free_energy_derivative(s, sigma, P, order - 1) if order > 1 else free_energy(s, sigma, P)
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert free_energy_derivative(x, sigma, P, order) == pytest.approx(fd, rel=1e-5, abs=1e-5)


def test_equilibrium_curve_and_roots():
    lo = p_min(P)
    assert sigma_of_p(lo + 1e-12, P) == pytest.approx(0, abs=1e-4)
    with pytest.raises(AdmissibilityError):
        sigma_of_p(lo / 2, P)
    p = np.linspace(lo + 0.01, 0.99, 50)
    for pi, si in zip(p[::10], sigma_of_p(p, P)[::10]):
        assert any(abs(r - pi) < 1e-9 for r in stationary_roots(si, P))


def test_turning_points_appear_below_critical_temperature():
    cp = critical_point(P)
    assert len(turning_points(P.with_beta(0.8 * cp.beta_c))) == 0
    tp = turning_points(P.with_beta(1.3 * cp.beta_c))
    assert len(tp) == 2
    np.testing.assert_allclose(dsigma_dp(tp, P.with_beta(1.3 * cp.beta_c)), 0, atol=1e-8)


def test_spinodal_scan_labels():
    bc = critical_point(P).beta_c
    phases = [r.phase for r in spinodal_scan([0.7 * bc, bc, 1.4 * bc], P)]
    assert phases == ["one-phase", "critical", "two-phase"]


def test_printed_variant_is_not_critical():
    res = printed_critical_point(P.with_beta(1.0)).residuals(P)
    assert abs(res[1]) > 1.0
    assert max(abs(r) for r in critical_point(P).residuals(P)) < 1e-12


def test_critical_point_errors():
    with pytest.raises(ModelError):
        critical_point(ShearModelParams(c0=1, c1=1, H=1, U=1, theta=0.5, v0=1, beta=1))
    with pytest.raises(ModelError):
        critical_point(ShearModelParams(c0=1, c1=1, H=2, U=1, theta=0.9, v0=1, beta=1))
    with pytest.raises(ModelError):
        ShearModelParams(c0=0.0, c1=1, H=1, U=1, theta=0.5, v0=1, beta=1).log_ratio


def test_critical_line_compatibility():
    base = ShearModelParams(c0=1.0, c1=1.0, H=1.0, U=1.0, theta=0.4, v0=1.0, beta=1.0)
    line = critical_line(base)
    assert not line.consistent
    tuned = ShearModelParams(c0=1.0, c1=math.exp(line.compatible_log_ratio), H=1.0, U=1.0, theta=0.4, v0=1.0,
                             beta=1.0)
    tl = critical_line(tuned)
    assert tl.consistent
    assert tl.beta_sigma2 == pytest.approx(tl.beta_sigma2_curvature, rel=1e-10)


def test_maxwell_at_and_above_critical():
    cp = critical_point(P)
    m = maxwell_sigma(cp.beta_c, P)
    assert m.sigma == pytest.approx(cp.sigma_c)
    m2 = maxwell_sigma(1.5 * cp.beta_c, P)
    assert m2.x1 < cp.p_c < m2.x2
    with pytest.raises(ModelError):
        maxwell_sigma(0.5 * cp.beta_c, P)


def test_predicted_b_is_linear_coefficient():
    cp = critical_point(P)
    assert 0.27 < predicted_b(P, cp) < 0.5
    assert np.isfinite(emission_log_derivative(np.array([0.4, 0.6]), cp.sigma_c, P.with_beta(cp.beta_c))).all()
