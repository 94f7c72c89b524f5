"""Stationary states of the shear model and its damage phase transition.

Under a shear stress sigma (the 12 component) two identical crack families
with normals along x1 and x2 carry the total density p, and

    dp/dt = (1 - p) Lambda(p) - p M,
    Lambda = c1 exp{beta [v0 (sigma / (1 - theta p))^2 - H]},  M = c0 exp{-beta U}.

Stationary states are the critical points of

    F(x) = x ln(c1/c0) + x beta (U - H) + beta v0 sigma^2 x / (1 - theta x)
           - x ln x - (1 - x) ln(1 - x),

the exponent of the large-N stationary law.  The equilibrium curve sigma(p)
is S-shaped above a critical inverse temperature, where low- and high-damage
phases coexist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.optimize import brentq, curve_fit, minimize_scalar

from .errors import AdmissibilityError, FitError, ModelError
from .io import write_csv


@dataclass(frozen=True)
class ShearModelParams:
    """Constants of the scalar shear model.  ``v0`` is the stress coefficient of
    the birth barrier; ``alpha`` (default v0) is the coefficient used in the
    emitted-energy derivative g(x)."""

    c0: float
    c1: float
    H: float
    U: float
    theta: float
    v0: float
    beta: float
    alpha: Optional[float] = None

    def __post_init__(self):
        for name in ("c1", "v0", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.c0 >= 0:
            raise ValueError(f"c0 must be nonnegative, got {self.c0}")
        if self.H < 0 or self.U < 0:
            raise ValueError("activation energies must be nonnegative")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0,1), got {self.theta}")

    def with_beta(self, beta: float) -> "ShearModelParams":
        return replace(self, beta=float(beta))

    @property
    def log_ratio(self) -> float:
        """ln(c1/c0)."""
        if self.c0 == 0:
            raise ModelError("no healing (c0 = 0): stationary analysis is undefined")
        return math.log(self.c1 / self.c0)

    @property
    def a(self) -> float:
        return self.v0 if self.alpha is None else self.alpha

    def birth_rate(self, x, sigma: float):
        x = np.asarray(x, dtype=float)
        return self.c1 * np.exp(self.beta * (self.v0 * (sigma / (1 - self.theta * x)) ** 2 - self.H))

    def heal_rate(self) -> float:
        return self.c0 * math.exp(-self.beta * self.U)

    def rhs(self, p, sigma: float):
        """dp/dt of the scalar model."""
        return (1 - p) * self.birth_rate(p, sigma) - p * self.heal_rate()


def _logit(x):
    return np.log(x) - np.log1p(-x)


def _drive(params: ShearModelParams):
    # ln(c1/c0) + beta (U - H)
    return params.log_ratio + params.beta * (params.U - params.H)


# ---------------------------------------------------------------- equilibrium curve


def p_min(params: ShearModelParams) -> float:
    """Stationary density at zero stress, the lower end of the admissible range."""
    d = _drive(params)
    return 1.0 / (1.0 + math.exp(-d))


def _sigma2(p, params: ShearModelParams):
    p = np.asarray(p, dtype=float)
    return (1 - params.theta * p) ** 2 / (params.v0 * params.beta) * (_logit(p) - _drive(params))


def sigma_of_p(p, params: ShearModelParams):
    """Stress at which density p is stationary."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise AdmissibilityError("density must lie in (0, 1)")
    s2 = _sigma2(p, params)
    tol = 1e-13 * np.maximum(1.0, np.abs(_logit(p)))
    if np.any(s2 < -tol):
        raise AdmissibilityError(f"below admissible density: p must be at least {p_min(params):.12g}")
    out = np.sqrt(np.clip(s2, 0.0, None))
    return out if out.ndim else float(out)


def dsigma_dp(p, params: ShearModelParams):
    p = np.asarray(p, dtype=float)
    th = params.theta
    ds2 = ((1 - th * p) ** 2 / (p * (1 - p)) - 2 * th * (1 - th * p) * (_logit(p) - _drive(params))) / (
        params.v0 * params.beta)
    with np.errstate(divide="ignore"):
        return ds2 / (2 * sigma_of_p(p, params))


def equilibrium_curve(params: ShearModelParams, n: int = 400, p_max: float = 0.999) -> tuple:
    lo = p_min(params)
    p = lo + (p_max - lo) * (np.linspace(0, 1, n) ** 2)
    return p, sigma_of_p(p, params)


def turning_points(params: ShearModelParams) -> np.ndarray:
    """Densities where d sigma / dp = 0 on the admissible branch."""
    th = params.theta
    d = _drive(params)
    lo = p_min(params)
    h = lambda p: 2 * th * p * (1 - p) * (_logit(p) - d) - (1 - th * p)
    x = lo + (1 - lo) * np.linspace(0, 1, 20001)[1:-1]
    v = h(x)
    idx = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
    return np.array([brentq(h, x[i], x[i + 1], xtol=1e-15, rtol=1e-15) for i in idx])


# ---------------------------------------------------------------- free energy


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("free energy is defined for 0 < x < 1 only")
    return x


def free_energy(x, sigma: float, params: ShearModelParams):
    x = _check_x(x)
    A = params.beta * params.v0 * sigma**2
    out = x * _drive(params) + A * x / (1 - params.theta * x) - x * np.log(x) - (1 - x) * np.log1p(-x)
    return out if out.ndim else float(out)


def free_energy_derivative(x, sigma: float, params: ShearModelParams, order: int = 1):
    """d^n F / dx^n for n = 1..4."""
    x = _check_x(x)
    A = params.beta * params.v0 * sigma**2
    th = params.theta
    q = 1 - th * x
    if order == 1:
        out = _drive(params) + A / q**2 - _logit(x)
    elif order == 2:
        out = 2 * A * th / q**3 - 1 / (x * (1 - x))
    elif order == 3:
        out = 6 * A * th**2 / q**4 + (1 - 2 * x) / (x**2 * (1 - x) ** 2)
    elif order == 4:
        out = 24 * A * th**3 / q**5 - 2 / (x**2 * (1 - x) ** 2) - 2 * (1 - 2 * x) ** 2 / (x**3 * (1 - x) ** 3)
    else:
        raise ValueError("order must be 1, 2, 3 or 4")
    return out if out.ndim else float(out)


def stationary_roots(sigma: float, params: ShearModelParams, grid: int = 20000) -> np.ndarray:
    """All zeros of F'(x) in (0, 1), i.e. all stationary densities at this stress."""
    x = np.linspace(0, 1, grid + 1)[1:-1]
    v = free_energy_derivative(x, sigma, params, 1)
    idx = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
    f = lambda s: free_energy_derivative(s, sigma, params, 1)
    return np.array([brentq(f, x[i], x[i + 1], xtol=1e-15, rtol=1e-15) for i in idx])


# ---------------------------------------------------------------- critical point


@dataclass(frozen=True)
class CriticalPoint:
    p_c: float
    beta_c: float
    sigma_c: float

    def residuals(self, params: ShearModelParams) -> tuple:
        """(F', F'', F''') at the critical point."""
        pc = params.with_beta(self.beta_c)
        return tuple(free_energy_derivative(self.p_c, self.sigma_c, pc, k) for k in (1, 2, 3))


def critical_density(theta: float) -> float:
    """Root in (0,1) of theta p^2 + 2 (1 - theta) p - 1 = 0."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0,1)")
    return 1.0 / ((1 - theta) + math.sqrt(1 - theta + theta * theta))


def _critical_A(p: float, theta: float) -> float:
    # beta v0 sigma^2 at which F'' = F''' = 0 at p
    return (1 - theta * p) ** 3 / (2 * theta * p * (1 - p))


def critical_point(params: ShearModelParams) -> CriticalPoint:
    """Point where F' = F'' = F''' = 0 (H != U).  ``params.beta`` is ignored."""
    th = params.theta
    if params.H == params.U:
        raise ModelError("H = U gives a line of critical points; use critical_line")
    p = critical_density(th)
    A = _critical_A(p, th)
    beta_c = (params.log_ratio + (1 - th * p) / (2 * th * p * (1 - p)) - _logit(p)) / (params.H - params.U)
    if not beta_c > 0:
        raise ModelError(f"critical inverse temperature is not positive (beta_c = {beta_c:.6g}) "
                         "for this parameter combination")
    return CriticalPoint(p, float(beta_c), math.sqrt(A / (params.v0 * beta_c)))


def printed_critical_point(params: ShearModelParams) -> CriticalPoint:
    """Reference variant of the closed forms with a factor 2 missing in beta_c
    and (1 - theta + theta^2) in sigma_c; it does not satisfy F'' = 0."""
    th = params.theta
    p = critical_density(th)
    beta_c = (params.log_ratio + (1 - th * p) / (th * p * (1 - p)) - _logit(p)) / (params.H - params.U)
    s2 = (1 - th + th * th) / (params.v0 * beta_c * th * p * (1 - p)) * (1 - th * p)
    return CriticalPoint(p, float(beta_c), math.sqrt(abs(s2)))


@dataclass(frozen=True)
class CriticalLine:
    """H = U: F' = F'' = F''' = 0 fixes p_c and beta sigma^2 separately, so a
    critical line exists only when ln(c1/c0) equals ``compatible_log_ratio``."""

    p_c: float
    beta_sigma2: float
    beta_sigma2_curvature: float
    compatible_log_ratio: float
    curvature_residual: float

    @property
    def consistent(self) -> bool:
        return abs(self.curvature_residual) < 1e-8


def critical_line(params: ShearModelParams) -> CriticalLine:
    if params.H != params.U:
        raise ModelError("critical_line needs H = U")
    th = params.theta
    p = critical_density(th)
    bs2 = (1 - th * p) ** 2 / params.v0 * (_logit(p) - params.log_ratio)
    bs2_curv = _critical_A(p, th) / params.v0
    L_star = _logit(p) - (1 - th * p) / (2 * th * p * (1 - p))
    # F'' at (p, beta sigma^2 from the equilibrium relation)
    resid = 2 * params.v0 * bs2 * th / (1 - th * p) ** 3 - 1 / (p * (1 - p))
    return CriticalLine(p, float(bs2), float(bs2_curv), float(L_star), float(resid))


# ---------------------------------------------------------------- Maxwell construction


def _curvature_roots(sigma: float, params: ShearModelParams):
    """Zeros of F'' at this stress (two when the well is double, else None)."""
    A = params.beta * params.v0 * sigma**2
    th = params.theta
    h = lambda x: 2 * A * th * x * (1 - x) - (1 - th * x) ** 3
    peak = minimize_scalar(lambda x: -h(x), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}).x
    if h(peak) <= 0:
        return None
    return (brentq(h, 0.0, peak, xtol=1e-15, rtol=1e-15), brentq(h, peak, 1.0, xtol=1e-15, rtol=1e-15))


def _outer_roots(sigma, params):
    r = _curvature_roots(sigma, params)
    if r is None:
        return None
    f = lambda s: free_energy_derivative(s, sigma, params, 1)
    eps = 1e-300
    lo, hi = r
    if not (f(lo) < 0 and f(hi) > 0):
        return None
    x1 = brentq(f, eps if f(eps) > 0 else 1e-16, lo, xtol=1e-15, rtol=1e-15)
    x2 = brentq(f, hi, 1 - 1e-16, xtol=1e-15, rtol=1e-15)
    return x1, x2


@dataclass(frozen=True)
class MaxwellPoint:
    beta: float
    sigma: float
    x1: float
    x2: float

    def gap(self, params: ShearModelParams) -> float:
        pb = params.with_beta(self.beta)
        return free_energy(self.x1, self.sigma, pb) - free_energy(self.x2, self.sigma, pb)

    def equal_area(self, params: ShearModelParams) -> float:
        """int_{x1}^{x2} F'(z) dz by adaptive quadrature."""
        pb = params.with_beta(self.beta)
        val, _ = quad(lambda z: free_energy_derivative(z, self.sigma, pb, 1), self.x1, self.x2,
                      epsabs=1e-13, epsrel=0.0, limit=400)
        return val


def maxwell_sigma(beta: float, params: ShearModelParams) -> MaxwellPoint:
    """Coexistence stress where the two maxima of F are equal."""
    pb = params.with_beta(beta)
    tp = turning_points(pb)
    if len(tp) < 2:
        try:
            cp = critical_point(params)
        except ModelError:
            cp = None
        if cp is not None and math.isclose(beta, cp.beta_c, rel_tol=1e-9):
            return MaxwellPoint(beta, cp.sigma_c, cp.p_c, cp.p_c)
        raise ModelError(f"no double well at beta = {beta:.6g}: F is single-peaked for all stresses")
    s_hi = sigma_of_p(tp[0], pb)
    s_lo = sigma_of_p(tp[-1], pb)

    def gap(s):
        roots = _outer_roots(s, pb)
        if roots is None:
            raise ModelError("lost the double well inside the spinodal interval")
        x1, x2 = roots
        return free_energy(x1, s, pb) - free_energy(x2, s, pb)

    span = s_hi - s_lo
    a, b = s_lo + 1e-12 * span, s_hi - 1e-12 * span
    ga, gb = gap(a), gap(b)
    if not ga > 0 > gb:
        raise ModelError(f"F(x1) - F(x2) does not change sign on the spinodal interval ({ga:.3e}, {gb:.3e})")
    s = brentq(gap, a, b, xtol=1e-15 * max(1.0, s_hi), rtol=1e-15, maxiter=500)
    x1, x2 = _outer_roots(s, pb)
    return MaxwellPoint(float(beta), float(s), float(x1), float(x2))


# ---------------------------------------------------------------- spinodal scan


@dataclass
class SpinodalRow:
    beta: float
    p: np.ndarray
    sigma: np.ndarray
    min_slope: float
    p_at_min: float
    phase: str


def min_slope(params: ShearModelParams, p_max: float = 0.999) -> tuple:
    """(min d sigma / dp, location) on the admissible branch."""
    lo = p_min(params)
    x = lo + (p_max - lo) * np.linspace(0, 1, 4001)[1:]
    d = dsigma_dp(x, params)
    i = int(np.nanargmin(d))
    a, b = x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)]
    res = minimize_scalar(lambda s: float(dsigma_dp(s, params)), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x)


def spinodal_scan(betas: Sequence[float], params: ShearModelParams, n: int = 400, tol: float = 1e-6) -> list:
    rows = []
    for beta in betas:
        pb = params.with_beta(beta)
        p, s = equilibrium_curve(pb, n)
        m, at = min_slope(pb)
        phase = "critical" if abs(m) <= tol else ("two-phase" if m < 0 else "one-phase")
        rows.append(SpinodalRow(float(beta), p, s, m, at, phase))
    return rows


# ---------------------------------------------------------------- acoustic emission at the critical point


def emission_power(x, sigma: float, params: ShearModelParams, N: float = 1.0):
    """W(x) = (N/2)(1 - x) theta sigma^2 / (1 - theta x)^2 Lambda(x)."""
    x = np.asarray(x, dtype=float)
    th = params.theta
    return 0.5 * N * (1 - x) * th * sigma**2 / (1 - th * x) ** 2 * params.birth_rate(x, sigma)


def emission_log_derivative(x, sigma: float, params: ShearModelParams):
    """g(x) = d ln W / dx."""
    x = np.asarray(x, dtype=float)
    th = params.theta
    return -1 / (1 - x) + 2 * th / (1 - th * x) + 2 * params.beta * params.a * sigma**2 * th / (1 - th * x) ** 3


def _log_prefactor_terms(x, sigma, params):
    # ln g + 1/2 ln[Lambda M x (1 - x)] as a function of x
    g = emission_log_derivative(x, sigma, params)
    lam = params.birth_rate(x, sigma)
    return np.log(g), 0.5 * np.log(lam * params.heal_rate() * x * (1 - x))


def _derivative(f, x, h=1e-5):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def predicted_b(params: ShearModelParams, cp: Optional[CriticalPoint] = None) -> float:
    """Linear coefficient of ln phi_N in ln W - ln W_c at the critical point:
    b = [(ln g)' + 1/2 (ln Lambda M x(1-x))'] / g."""
    cp = cp or critical_point(params)
    pc = params.with_beta(cp.beta_c)
    lg = lambda x: _log_prefactor_terms(x, cp.sigma_c, pc)[0]
    lp = lambda x: _log_prefactor_terms(x, cp.sigma_c, pc)[1]
    g = float(emission_log_derivative(cp.p_c, cp.sigma_c, pc))
    return float((_derivative(lg, cp.p_c) + _derivative(lp, cp.p_c)) / g)


def printed_b(params: ShearModelParams, cp: Optional[CriticalPoint] = None) -> float:
    """Variant with 1/2 also on ln g: 1/2 (ln[g Lambda M x(1-x)])' / g."""
    cp = cp or critical_point(params)
    pc = params.with_beta(cp.beta_c)
    lg = lambda x: _log_prefactor_terms(x, cp.sigma_c, pc)[0]
    lp = lambda x: _log_prefactor_terms(x, cp.sigma_c, pc)[1]
    g = float(emission_log_derivative(cp.p_c, cp.sigma_c, pc))
    return float((0.5 * _derivative(lg, cp.p_c) + _derivative(lp, cp.p_c)) / g)


@dataclass
class EmissionFit:
    y: np.ndarray
    log_phi: np.ndarray
    phi: np.ndarray
    a: float
    b: float
    c: float
    log_W_c: float
    b_prime: float
    degree: int
    b_by_degree: dict
    b_predicted: float
    b_printed: float
    quartic_predicted: float
    three_term: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        write_csv(path, ["y", "phi"], list(zip(self.y.tolist(), self.phi.tolist())))

    def summary(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c, "log_W_c": self.log_W_c, "W_c": math.exp(self.log_W_c),
            "b_prime": self.b_prime, "degree": self.degree, "b_predicted": self.b_predicted,
            "b_printed": self.b_printed, "c_predicted": self.quartic_predicted,
            "three_term_fit": self.three_term,
        }


def emission_distribution(
    N: int,
    params: ShearModelParams,
    mass: float = 0.90,
    n_grid: int = 40001,
    degrees: Sequence[int] = (8, 10, 12, 14, 16, 18, 20),
    stable_tol: float = 1e-4,
) -> EmissionFit:
    """Density phi_N(y) of y = ln W at the critical point and its expansion.

    phi_N(y) = u_N(x) / g(x) with u_N the large-N stationary density of x.
    The expansion ln phi = a - b y - c (y - y_c)^4 + ... is read off a
    weighted polynomial fit in y - y_c over the central ``mass`` of phi,
    raising the degree until b is stable.
    """
    cp = critical_point(params)
    pc = params.with_beta(cp.beta_c)
    s = cp.sigma_c
    x = np.linspace(0, 1, n_grid)[1:-1]
    g = emission_log_derivative(x, s, pc)
    lam = pc.birth_rate(x, s)
    log_u = N * free_energy(x, s, pc) - 0.5 * np.log(2 * np.pi * N * x * (1 - x) * lam * pc.heal_rate())
    # change of variables needs W monotone: keep the increasing branch through p_c
    i_c = int(np.searchsorted(x, cp.p_c))
    if g[i_c] <= 0:
        raise FitError("ln W is not increasing at the critical density")
    lo = i_c
    while lo > 0 and g[lo - 1] > 0:
        lo -= 1
    hi = i_c
    while hi < len(x) - 1 and g[hi + 1] > 0:
        hi += 1
    x, g, log_u = x[lo:hi + 1], g[lo:hi + 1], log_u[lo:hi + 1]
    y = np.log(emission_power(x, s, pc, N))
    log_phi = log_u - np.log(g)
    log_phi -= log_phi.max()
    log_phi -= math.log(np.trapezoid(np.exp(log_phi), y))
    phi = np.exp(log_phi)

    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (phi[1:] + phi[:-1]) * np.diff(y))])
    cdf /= cdf[-1]
    tail = 0.5 * (1 - mass)
    sel = (cdf >= tail) & (cdf <= 1 - tail)
    if sel.sum() < 50:
        raise FitError(f"only {sel.sum()} grid points in the central mass region; refine the grid")
    peaks = np.flatnonzero((log_phi[1:-1] > log_phi[:-2]) & (log_phi[1:-1] > log_phi[2:]))
    if len(peaks) != 1:
        raise FitError(f"emission density is not unimodal ({len(peaks)} local maxima)")
    y_c = float(np.log(emission_power(cp.p_c, s, pc, N)))
    D, L, w = y[sel] - y_c, log_phi[sel], np.sqrt(phi[sel])

    b_by_deg, coefs = {}, {}
    chosen = None
    for deg in degrees:
        coef = Polynomial.fit(D, L, deg, w=w).convert().coef
        b_by_deg[deg] = float(-coef[1])
        coefs[deg] = coef
        prev = [d for d in b_by_deg if d < deg]
        if prev and abs(b_by_deg[deg] - b_by_deg[prev[-1]]) < stable_tol * abs(b_by_deg[deg]):
            chosen = deg
            break
    if chosen is None:
        chosen = degrees[-1]
    coef = coefs[chosen]
    b = -float(coef[1])
    c = -float(coef[4]) if len(coef) > 4 else float("nan")
    g_c = float(emission_log_derivative(cp.p_c, s, pc))
    c_pred = -N * free_energy_derivative(cp.p_c, s, pc, 4) / (24 * g_c**4)

    three = {}
    try:
        f3 = lambda yy, a3, b3, c3, yc: a3 - b3 * yy - c3 * (yy - yc) ** 4
        p0 = (float(coef[0]) + b * y_c, b, max(c, 1e-6), y_c)
        popt, _ = curve_fit(f3, y[sel], L, p0=p0, sigma=1 / w, maxfev=20000)
        three = {"a": float(popt[0]), "b": float(popt[1]), "c": float(popt[2]), "log_W_c": float(popt[3])}
    except (RuntimeError, ValueError) as exc:
        three = {"error": str(exc)}

    return EmissionFit(
        y=y, log_phi=log_phi, phi=phi, a=float(coef[0]) + b * y_c, b=b, c=c, log_W_c=y_c, b_prime=1.5 * b,
        degree=int(chosen), b_by_degree=b_by_deg, b_predicted=predicted_b(params, cp),
        b_printed=printed_b(params, cp), quartic_predicted=float(c_pred), three_term=three,
    )
