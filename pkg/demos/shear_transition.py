"""Damage transition in the scalar shear model.

Walk through the equilibrium curve sigma(p) at a few temperatures, locate the
critical point and draw the Maxwell line below it.
"""

import numpy as np

from crackfield.phase import ShearModelParams, critical_point, maxwell_sigma, spinodal_scan

params = ShearModelParams(c0=1.0, c1=100.0, H=2.0, U=1.0, theta=0.5, v0=1.0, beta=1.0)

cp = critical_point(params)
print(f"critical point: p_c = {cp.p_c:.6f}  beta_c = {cp.beta_c:.6f}  sigma_c = {cp.sigma_c:.6f}")
print("residuals F', F'', F''':", ["%.1e" % r for r in cp.residuals(params)])

# Above T_c sigma(p) is monotone; below it the curve folds back and two densities coexist.
print("\n beta/beta_c   min dsigma/dp   phase")
for row in spinodal_scan(cp.beta_c * np.array([0.6, 0.9, 1.0, 1.2, 1.6]), params):
    print(f"   {row.beta / cp.beta_c:5.2f}      {row.min_slope:+.4e}   {row.phase}")

# The coexistence stress follows from equal areas; the two densities are the phases.
print("\n beta/beta_c   sigma*     x1        x2")
for r in (1.05, 1.2, 1.6, 2.5):
    m = maxwell_sigma(r * cp.beta_c, params)
    print(f"   {r:5.2f}      {m.sigma:.5f}   {m.x1:.5f}   {m.x2:.5f}")
