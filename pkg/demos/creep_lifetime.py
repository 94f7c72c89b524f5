"""Time to failure under constant stress.

Lifetimes on a (sigma, T) grid are fitted with the exponential Zhurkov law
inside the stretch where ln tau is straight in sigma; outside it the
kinetic model bends away from the empirical law.
"""

import numpy as np

from crackfield.phase import ShearModelParams
from crackfield.zhurkov import compute_grid, zhurkov_fit

params = ShearModelParams(c0=1e12, c1=1e12, H=1.5e4, U=1.4e4, theta=0.3, v0=1.0, beta=1.0)
grid = compute_grid(np.linspace(10, 80, 141), [300.0, 350.0, 400.0], params, p0=0.2)
fit = zhurkov_fit(grid)

print(f"tau0 = {fit.tau0:.3e}   U = {fit.U:.1f}   nu = {fit.nu:.2f}")
for iso in fit.isotherms:
    lo, hi = grid.sigma[iso.window[0]], grid.sigma[iso.window[1]]
    print(f"T = {iso.T:.0f}: window sigma in [{lo:.1f}, {hi:.1f}], R^2 = {iso.r2:.5f}, {iso.decades:.2f} decades")
print("isotherm intersections (sigma):", np.round(fit.intersections, 2))
