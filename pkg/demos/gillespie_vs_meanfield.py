"""Finite-N crack kinetics against the mean-field equations.

Two crack families share the shear-model intensities.  The ensemble mean of
the jump process approaches the deterministic solution at rate 1/sqrt(N), and
the stationary law of the one-family chain approaches its large-N form.
"""

import numpy as np

from crackfield.phase import ShearModelParams
from crackfield.stochastic import (
    ShearRates,
    asymptotic_pmf,
    ensemble_mean,
    exact_stationary,
    mean_field_ode,
    total_variation,
)

params = ShearModelParams(c0=1.0, c1=3.0, H=1.0, U=0.5, theta=0.3, v0=1.0, beta=1.0)
model = ShearRates(params, sigma=0.5, n_families=2)
times = np.linspace(0, 5, 51)
ode = mean_field_ode(model, times)

print("   N     sup |mean - ODE|   5/sqrt(N)")
for N in (100, 1000, 10_000):
    mean, _ = ensemble_mean(N, model, times[-1], times, seed=1, replicas=16)
    print(f"{N:6d}   {np.abs(mean - ode).max():.5f}            {5 / np.sqrt(N):.5f}")

one = ShearRates(params, sigma=0.5, n_families=1)
print("\n   N     TV(exact, asymptotic)")
for N in (100, 400, 1600):
    print(f"{N:6d}   {total_variation(exact_stationary(N, one).pi, asymptotic_pmf(N, one)):.3e}")
