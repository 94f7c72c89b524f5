"""Time to failure under constant load and its Zhurkov representation.

A specimen fails when the crack density, started from zero, reaches p0.  Under
constant stress and temperature the density follows the scalar shear-model
equation, so the lifetime is a first-passage time.  Tabulated over (sigma, T)
it is compared with the empirical law

    ln tau = ln tau0 + (U - nu sigma) / (k_B T).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import FitError, IntegrationError
from .io import write_csv
from .phase import ShearModelParams

NO_FAILURE = math.inf


def _at_temperature(params: ShearModelParams, T: float, k_B: float) -> ShearModelParams:
    if not T > 0:
        raise ValueError("temperature must be positive")
    return params.with_beta(1.0 / (k_B * T))


def _first_root_below(f, p0: float, n: int = 2001):
    p = np.linspace(0.0, p0, n)
    v = f(p)
    neg = np.flatnonzero(v <= 0)
    return None if len(neg) == 0 else float(p[neg[0]])


def lifetime(sigma: float, T: float, params: ShearModelParams, p0: float = 0.2, k_B: float = 1.0,
             rtol: float = 1e-10, horizon: float = 1e6) -> float:
    """First time p(t) reaches p0 from p(0) = 0, or NO_FAILURE.

    The density rises monotonically, so failure is impossible when dp/dt
    vanishes somewhere below p0 (a stationary state is reached first).
    """
    if sigma < 0:
        raise ValueError("stress must be nonnegative")
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0,1)")
    pt = _at_temperature(params, T, k_B)
    f = lambda p: pt.rhs(p, sigma)
    if _first_root_below(f, p0) is not None:
        return NO_FAILURE
    t_char = 1.0 / (pt.birth_rate(0.0, sigma) + pt.heal_rate())
    t_max = horizon * t_char

    def event(t, y):
        return y[0] - p0

    event.terminal = True
    event.direction = 1
    sol = solve_ivp(lambda t, y: [f(y[0])], (0.0, t_max), [0.0], events=event, method="LSODA",
                    rtol=rtol, atol=1e-14 * p0)
    if sol.status == -1:
        raise IntegrationError(sol.message)
    if len(sol.t_events[0]) == 0:
        return NO_FAILURE
    return float(sol.t_events[0][0])


def lifetime_quadrature(sigma: float, T: float, params: ShearModelParams, p0: float = 0.2,
                        k_B: float = 1.0) -> float:
    """tau = int_0^p0 dp / (dp/dt), or NO_FAILURE when dp/dt has a zero below p0."""
    pt = _at_temperature(params, T, k_B)
    f = lambda p: pt.rhs(p, sigma)
    if _first_root_below(f, p0) is not None:
        return NO_FAILURE
    val, _ = quad(lambda p: 1.0 / f(p), 0.0, p0, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(val)


@dataclass
class LifetimeGrid:
    sigma: np.ndarray
    T: np.ndarray
    tau: np.ndarray  # shape (len(T), len(sigma))
    p0: float = 0.2
    k_B: float = 1.0

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float).reshape(len(self.T), len(self.sigma))
        if np.any(self.tau <= 0):
            raise ValueError("lifetimes must be positive")

    @property
    def log_tau(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.tau)


def _cell(args):
    s, T, params, p0, k_B = args
    return lifetime(s, T, params, p0, k_B)


def compute_grid(sigmas: Sequence[float], temps: Sequence[float], params: ShearModelParams, p0: float = 0.2,
                 k_B: float = 1.0, workers: int = 1) -> LifetimeGrid:
    tasks = [(float(s), float(T), params, p0, k_B) for T in temps for s in sigmas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            taus = list(pool.map(_cell, tasks, chunksize=8))
    else:
        taus = [_cell(a) for a in tasks]
    return LifetimeGrid(np.asarray(sigmas), np.asarray(temps), np.array(taus), p0, k_B)


@dataclass
class Isotherm:
    T: float
    window: tuple  # (first, last) sigma index, inclusive
    intercept: float
    slope: float
    r2: float
    decades: float

    @property
    def sigma_range(self):
        return self.window


@dataclass
class ZhurkovFit:
    tau0: float
    U: float
    nu: float
    isotherms: list
    in_window: np.ndarray
    residual: np.ndarray  # ln tau minus the global Zhurkov surface
    arrhenius_r2: dict
    intersections: np.ndarray
    fan_cv: float
    threshold: float = 0.01
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "tau0": self.tau0, "U": self.U, "nu": self.nu, "threshold": self.threshold,
            "fan_cv": self.fan_cv, "intersections_sigma": self.intersections,
            "isotherms": [
                {"T": iso.T, "window": list(iso.window), "intercept": iso.intercept, "slope": iso.slope,
                 "r2": iso.r2, "decades": iso.decades} for iso in self.isotherms
            ],
            "arrhenius_r2": {f"{k:.17g}": v for k, v in self.arrhenius_r2.items()},
        }


def _r2(x, y):
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    return coef, res, (1.0 - float((res**2).sum()) / ss) if ss > 0 else 1.0


def linear_window(sigma: np.ndarray, log_tau: np.ndarray, threshold: float = 0.01, min_points: int = 4):
    """Largest contiguous run of finite points whose line fit has max residual
    below ``threshold`` times the ln tau range of the run."""
    ok = np.isfinite(log_tau)
    best = None
    n = len(sigma)
    for i in range(n):
        for j in range(n - 1, i + min_points - 2, -1):
            if best is not None and j - i <= best[1] - best[0]:
                break
            if not ok[i:j + 1].all():
                continue
            x, y = sigma[i:j + 1], log_tau[i:j + 1]
            span = y.max() - y.min()
            if span <= 0:
                continue
            _, res, _ = _r2(x, y)
            if np.abs(res).max() < threshold * span:
                best = (i, j)
                break
    return best


def zhurkov_fit(grid: LifetimeGrid, threshold: float = 0.01, min_points: int = 4) -> ZhurkovFit:
    """Fit ln tau = ln tau0 + (U - nu sigma) / (k_B T) inside per-isotherm linear windows."""
    lt = grid.log_tau
    isotherms = []
    in_window = np.zeros_like(lt, dtype=bool)
    for m, T in enumerate(grid.T):
        w = linear_window(grid.sigma, lt[m], threshold, min_points)
        if w is None:
            continue
        i, j = w
        coef, _, r2 = _r2(grid.sigma[i:j + 1], lt[m, i:j + 1])
        span = lt[m, i:j + 1].max() - lt[m, i:j + 1].min()
        isotherms.append(Isotherm(float(T), (int(i), int(j)), float(coef[0]), float(coef[1]), float(r2),
                                  float(span / math.log(10))))
        in_window[m, i:j + 1] = True
    if not isotherms:
        raise FitError("no linear window found on any isotherm")

    rows, rhs = [], []
    for m, T in enumerate(grid.T):
        kt = grid.k_B * T
        for s, val in zip(grid.sigma[in_window[m]], lt[m, in_window[m]]):
            rows.append([1.0, 1.0 / kt, -s / kt])
            rhs.append(val)
    rows, rhs = np.array(rows), np.array(rhs)
    if np.linalg.matrix_rank(rows) < 3:
        raise FitError("windows do not constrain (tau0, U, nu); need at least two temperatures")
    (ln_tau0, U, nu), *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    kt = grid.k_B * grid.T[:, None]
    with np.errstate(invalid="ignore"):
        residual = lt - (ln_tau0 + (U - nu * grid.sigma[None, :]) / kt)

    # Arrhenius check: at stresses inside every window, ln tau against 1/T
    arr = {}
    common = in_window.all(axis=0)
    for c in np.flatnonzero(common):
        if len(grid.T) >= 3:
            _, _, r2 = _r2(1.0 / (grid.k_B * grid.T), lt[:, c])
            arr[float(grid.sigma[c])] = float(r2)

    cross = []
    for a, b in itertools.combinations(isotherms, 2):
        if a.slope != b.slope:
            cross.append((a.intercept - b.intercept) / (b.slope - a.slope))
    cross = np.array(cross)
    cv = float(np.std(cross) / abs(np.mean(cross))) if len(cross) > 1 else 0.0
    return ZhurkovFit(float(math.exp(ln_tau0)), float(U), float(nu), isotherms, in_window, residual, arr,
                      cross, cv, threshold)


def write_grid_csv(path, grid: LifetimeGrid, fit: ZhurkovFit | None = None) -> None:
    rows = []
    for m, T in enumerate(grid.T):
        for c, s in enumerate(grid.sigma):
            flag = bool(fit.in_window[m, c]) if fit is not None else False
            res = float(fit.residual[m, c]) if fit is not None else float("nan")
            rows.append([s, T, grid.tau[m, c], flag, res])
    write_csv(path, ["sigma", "T", "tau", "in_window", "residual"], rows)
