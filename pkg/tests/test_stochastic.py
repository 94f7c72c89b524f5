import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crackfield.errors import RateOverflowError
from crackfield.phase import ShearModelParams
from crackfield.stochastic import (
    ConstantRates,
    FunctionRates,
    ShearRates,
    SpinConfig,
    ensemble_mean,
    exact_stationary,
    free_energy_density,
    generator_residual,
    gillespie_run,
    mean_field_ode,
    product_form_stationary,
    stationary_points,
    total_variation,
)

SHEAR = ShearModelParams(c0=1.0, c1=3.0, H=1.0, U=0.5, theta=0.3, v0=1.0, beta=1.0)


def test_same_seed_same_path():
    model = ShearRates(SHEAR, 0.5, 2)
    a = gillespie_run(300, model, 3.0, seed=5, replica=2)
    b = gillespie_run(300, model, 3.0, seed=5, replica=2)
    c = gillespie_run(300, model, 3.0, seed=5, replica=3)
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_array_equal(a.family, b.family)
    assert len(a.t) != len(c.t) or not np.array_equal(a.t, c.t)


def test_path_stays_in_state_space():
    model = ConstantRates((2.0, 0.5), (1.0, 3.0))
    path = gillespie_run(50, model, 20.0, seed=1)
    counts = path.counts()
    assert counts.min() >= 0 and counts.sum(axis=1).max() <= 50
    assert np.all(np.diff(path.t) > 0)
    np.testing.assert_array_equal(path.sample([0.0]), [path.n0])


def test_workers_do_not_change_results():
    model = ShearRates(SHEAR, 0.5, 2)
    times = np.linspace(0, 2, 11)
    one = ensemble_mean(200, model, 2.0, times, seed=3, replicas=4, workers=1)
    two = ensemble_mean(200, model, 2.0, times, seed=3, replicas=4, workers=2)
    np.testing.assert_array_equal(one[0], two[0])


def test_initial_configuration():
    spins = SpinConfig.from_counts(10, [3, 2])
    np.testing.assert_array_equal(spins.counts, [3, 2])
    path = gillespie_run(10, ConstantRates((0.0, 0.0), (0.0, 0.0)), 1.0, initial=spins)
    assert len(path.t) == 0 and path.n0.tolist() == [3, 2]
    with pytest.raises(ValueError):
        gillespie_run(10, ConstantRates((1.0,), (1.0,)), 1.0, initial=[11])


def test_rate_overflow_detected():
    model = FunctionRates(lambda x: np.exp(800 * x), lambda x: np.ones_like(x))
    with pytest.raises(RateOverflowError):
        gillespie_run(10, model, 1.0)


def test_mean_field_fixed_point():
    model = ConstantRates((2.0,), (1.0,))
    y = mean_field_ode(model, [0.0, 30.0])
    assert y[-1, 0] == pytest.approx(2.0 / 3.0, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 300), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_shifted_product_form_is_exact(N, b, h):
    model = FunctionRates(lambda x: b + x, lambda x: h * (1 + 0.5 * x), 1)
    exact = exact_stationary(N, model)
    np.testing.assert_allclose(product_form_stationary(N, model, shifted=True).pi, exact.pi, rtol=1e-9, atol=1e-300)
    assert generator_residual(exact, model) < 1e-12


def test_unshifted_product_form_error_orders():
    model = FunctionRates(lambda x: 1 + x, lambda x: 1 + 2 * x, 1)
    step_err, tv = [], []
    for N in (100, 200, 400):
        exact = exact_stationary(N, model).log_pi
        approx = product_form_stationary(N, model, False).log_pi
        step_err.append(np.abs(np.diff(exact) - np.diff(approx)).max())
        tv.append(total_variation(np.exp(exact), np.exp(approx)))
    # per-step ratio is off by O(1/N); summed over the O(sqrt N) bulk this gives O(1/sqrt N)
    np.testing.assert_allclose(np.array(step_err[:-1]) / step_err[1:], 2.0, rtol=0.05)
    np.testing.assert_allclose(np.array(tv[:-1]) / tv[1:], np.sqrt(2.0), rtol=0.05)


def test_free_energy_stationary_points():
    model = ShearRates(SHEAR, 0.5, 1)
    roots = stationary_points(model)
    assert len(roots) == 1
    x = np.linspace(0.01, 0.99, 99)
    assert np.argmax(free_energy_density(model, x)) == np.argmin(np.abs(x - roots[0]))


def test_constant_rates_validation():
    with pytest.raises(ValueError):
        ConstantRates((1.0, 2.0), (1.0,))
    with pytest.raises(ValueError):
        ConstantRates((-1.0,), (1.0,))
    with pytest.raises(ValueError):
        exact_stationary(10, ConstantRates((1.0, 1.0), (1.0, 1.0)))
