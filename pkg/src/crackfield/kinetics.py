"""Material-point kinetics: crack birth/healing, stress, strain split and heat.

The state of a material point is (p_1..p_K, sigma, u, r, T).  Crack densities
follow

    dp_k/dt = (1 - sum p) Lambda_k - p_k M_k,

with Arrhenius intensities whose birth barrier is lowered by the extra elastic
energy ``v0 * e_k`` a new crack brings in.  Under a prescribed strain history
the stress obeys

    dsigma/dt = lambda {du/dt - sum_k [(1 - sum p) Lambda_k mu^k - p_k M_k mu~^k] sigma}

and the residual strain collects the part of healed-crack strain that is not
volumetric, dr = sum_k (mu^k - mu~^k) p_k M_k sigma dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .cracks import CrackFamily, CrackGeometry, IsotropicElastic, Pliability, pliability
from .errors import IntegrationError, InvariantViolation, RateOverflowError
from .io import write_csv
from .tensor import COMPONENT_NAMES, SymTensor2, TensorLike, as_mandel, invert_compliance

_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class ModelParams:
    """Material and kinetic constants of the multicomponent model."""

    families: tuple
    geometry: CrackGeometry
    elastic: IsotropicElastic
    H: float
    gamma: float = 0.0
    rho: float = 1.0
    cp: float = 1.0
    G: float = 0.0
    k_B: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        if not self.families:
            raise ValueError("at least one crack family is required")
        if self.rho <= 0 or self.cp <= 0 or self.k_B <= 0:
            raise ValueError("rho, cp and k_B must be positive")
        if self.gamma < 0:
            raise ValueError("surface energy density must be nonnegative")

    @property
    def K(self) -> int:
        return len(self.families)

    def beta(self, T: float) -> float:
        return 1.0 / (self.k_B * T)

    def surface_energy(self) -> np.ndarray:
        """gamma pi r_k^2 / a^3 for each family."""
        a = self.geometry.a
        radii = [f.radius if f.radius is not None else self.geometry.r for f in self.families]
        return np.array([self.gamma * math.pi * r * r / a**3 for r in radii])

    def to_shear_model(self, T: float):
        """Scalar shear model equivalent to two families with normals x1 and x2.

        Summing the two identical family equations gives
        dp/dt = 2 (1-p) Lambda - p M, so the scalar birth prefactor is 2 c1;
        the scalar stress coefficient is a0 = v0 theta (1+nu) / E for sigma = sigma_12.
        """
        from .phase import ShearModelParams

        if self.K != 2:
            raise ValueError("the shear model needs exactly two crack families")
        f1, f2 = self.families
        normals = sorted(tuple(np.round(np.abs(f.frame.normal), 12)) for f in self.families)
        if normals != [(0.0, 1.0, 0.0), (1.0, 0.0, 0.0)]:
            raise ValueError("shear model families must have normals along x1 and x2")
        if (f1.c0, f1.c1) != (f2.c0, f2.c1) or callable(f1.U) or f1.U != f2.U:
            raise ValueError("shear model families must share constant kinetic constants")
        g = self.geometry
        return ShearModelParams(
            c0=f1.c0,
            c1=2.0 * f1.c1,
            H=self.H,
            U=float(f1.U),
            theta=g.theta,
            v0=g.v0 * g.theta * (1.0 + self.elastic.nu) / self.elastic.E,
            beta=self.beta(T),
        )


@dataclass(frozen=True, eq=False)
class MaterialState:
    t: float
    p: np.ndarray
    sigma: SymTensor2
    u: SymTensor2
    eps: SymTensor2
    r: SymTensor2
    T: float

    @classmethod
    def initial(cls, params: ModelParams, sigma: TensorLike = None, p=None, T: float = 1.0,
                r: TensorLike = None, t: float = 0.0) -> "MaterialState":
        """Consistent initial state: eps = mu sigma, u = eps + r."""
        if not T > 0:
            raise ValueError("temperature must be positive")
        s = SymTensor2.zeros() if sigma is None else SymTensor2.from_mandel(as_mandel(sigma))
        p = np.zeros(params.K) if p is None else np.asarray(p, dtype=float)
        check_density(p, params.geometry.theta)
        rr = SymTensor2.zeros() if r is None else SymTensor2.from_mandel(as_mandel(r))
        pl = _pliability(s.mandel, p, params)
        eps = SymTensor2.from_mandel(pl.mu @ s.mandel)
        return cls(t, p, s, eps + rr, eps, rr, float(T))


def check_density(p: np.ndarray, theta: float, tol: float = 1e-9) -> None:
    if np.any(p < -tol) or p.sum() > 1.0 + tol:
        raise InvariantViolation(f"crack densities out of the simplex: p = {p}")
    if theta * p.sum() >= 1.0:
        raise InvariantViolation(f"theta * sum(p) = {theta * p.sum()} >= 1")


def _pliability(sigma_m, p, params: ModelParams, classification=None) -> Pliability:
    return pliability(sigma_m, np.clip(p, 0.0, None), params.geometry, params.families, params.elastic,
                      classification=classification)


@dataclass
class Snapshot:
    """Everything the right-hand sides need at one (sigma, p, T)."""

    pl: Pliability
    sigma: np.ndarray
    p: np.ndarray
    birth: np.ndarray
    heal: np.ndarray
    e_k: np.ndarray

    @property
    def empty(self) -> float:
        return 1.0 - float(self.p.sum())

    def viscous_strain_rate(self) -> np.ndarray:
        out = np.zeros(6)
        for k in range(len(self.p)):
            out += (self.empty * self.birth[k]) * (self.pl.mu_k[k] @ self.sigma)
            out -= (self.p[k] * self.heal[k]) * (self.pl.mu_healed[k] @ self.sigma)
        return out

    def residual_strain_rate(self) -> np.ndarray:
        out = np.zeros(6)
        for k in range(len(self.p)):
            out += (self.p[k] * self.heal[k]) * ((self.pl.mu_k[k] - self.pl.mu_healed[k]) @ self.sigma)
        return out

    def density_rate(self) -> np.ndarray:
        return self.empty * self.birth - self.p * self.heal


def _arrhenius(prefactor: float, exponent: float, what: str, k: int) -> float:
    if exponent > _EXP_LIMIT:
        raise RateOverflowError(f"{what} intensity of family {k} overflows: exponent {exponent:.4g}")
    return prefactor * math.exp(exponent)


def snapshot(sigma, p, T: float, params: ModelParams, classification=None) -> Snapshot:
    """Rates and pliabilities at one state; ``classification`` pins open/closed flags."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    s = as_mandel(sigma)
    p = np.asarray(p, dtype=float)
    pl = _pliability(s, p, params, classification)
    beta = params.beta(T)
    v0 = params.geometry.v0
    e_k = np.array([0.5 * float(s @ m @ s) for m in pl.mu_k])
    birth = np.empty(params.K)
    heal = np.empty(params.K)
    for k, fam in enumerate(params.families):
        birth[k] = _arrhenius(fam.c1, -beta * (params.H - v0 * e_k[k]), "birth", k)
        U = fam.activation_energy(fam.normal_stress(pl.screening.sigma_bar))
        heal[k] = _arrhenius(fam.c0, -beta * U, "healing", k)
    return Snapshot(pl, s, np.clip(p, 0.0, None), birth, heal, e_k)


def birth_rate(k: int, sigma, p, T: float, params: ModelParams) -> float:
    """Lambda_k = c1k exp{-beta [H - v0 e_k]}."""
    return float(snapshot(sigma, p, T, params).birth[k])


def heal_rate(k: int, sigma, p, T: float, params: ModelParams) -> float:
    """M_k = c0k exp{-beta U_k}."""
    return float(snapshot(sigma, p, T, params).heal[k])


def kinetics_rhs(state: MaterialState, params: ModelParams) -> np.ndarray:
    return snapshot(state.sigma, state.p, state.T, params).density_rate()


def stress_rhs(state: MaterialState, u_rate: TensorLike, params: ModelParams) -> SymTensor2:
    """Stress rate under a prescribed total strain rate."""
    snap = snapshot(state.sigma, state.p, state.T, params)
    lam = invert_compliance(snap.pl.mu)
    return SymTensor2.from_mandel(lam @ (as_mandel(u_rate) - snap.viscous_strain_rate()))


def _temperature_rate(snap: Snapshot, params: ModelParams) -> float:
    s = snap.sigma
    surf = params.surface_energy()
    vol = 0.0
    for k in range(len(snap.p)):
        half = 0.5 * float(s @ snap.pl.mu_k[k] @ s)
        healed = float(s @ snap.pl.mu_healed[k] @ s)
        vol += (half - surf[k]) * snap.empty * snap.birth[k]
        vol += (half + surf[k] - healed) * snap.p[k] * snap.heal[k]
    return (params.G + vol) / (params.rho * params.cp)


def temperature_rhs(state: MaterialState, params: ModelParams) -> float:
    """dT/dt from the first law: heat influx plus birth and healing terms."""
    return _temperature_rate(snapshot(state.sigma, state.p, state.T, params), params)


def _acoustic(snap: Snapshot) -> float:
    s = snap.sigma
    total = sum(float(s @ m @ s) * lam for m, lam in zip(snap.pl.mu_k, snap.birth))
    return 0.5 * snap.empty * total


def acoustic_power(state: MaterialState, params: ModelParams) -> float:
    """Acoustic emission power w = 1/2 (1 - sum p) sum_k (sigma:mu^k sigma) Lambda_k."""
    return _acoustic(snapshot(state.sigma, state.p, state.T, params))


def birth_work_rate(state: MaterialState, params: ModelParams) -> float:
    """Work rate of the external stress on strain created by new cracks."""
    snap = snapshot(state.sigma, state.p, state.T, params)
    du = sum((snap.empty * lam) * (m @ snap.sigma) for m, lam in zip(snap.pl.mu_k, snap.birth))
    return float(snap.sigma @ du)


@dataclass(frozen=True, eq=False)
class LoadProgram:
    """Piecewise-linear history of the controlled tensor (stress or strain)."""

    mode: str
    times: np.ndarray
    values: np.ndarray  # (n, 6) Mandel vectors

    def __post_init__(self):
        if self.mode not in ("stress", "strain"):
            raise ValueError(f"mode must be 'stress' or 'strain', got {self.mode!r}")
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(len(t), 6)
        if len(t) == 0:
            raise ValueError("load program needs at least one point")
        if np.any(np.diff(t) <= 0):
            raise ValueError("load program times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_tensors(cls, mode: str, times: Sequence[float], tensors: Sequence[TensorLike]) -> "LoadProgram":
        return cls(mode, np.asarray(times, dtype=float), np.array([as_mandel(x) for x in tensors]))

    @classmethod
    def from_components(cls, mode: str, times, components) -> "LoadProgram":
        """``components`` rows are (11, 22, 33, 12, 23, 31)."""
        return cls(mode, np.asarray(times, dtype=float),
                   np.array([SymTensor2(c).mandel for c in components]))

    @classmethod
    def constant(cls, mode: str, tensor: TensorLike) -> "LoadProgram":
        return cls(mode, np.array([0.0]), as_mandel(tensor)[None, :])

    @classmethod
    def ramp(cls, mode: str, rate: TensorLike, t_end: float, start: TensorLike = None) -> "LoadProgram":
        s0 = np.zeros(6) if start is None else as_mandel(start)
        return cls(mode, np.array([0.0, t_end]), np.vstack([s0, s0 + t_end * as_mandel(rate)]))

    def _segment(self, t: float) -> int:
        return int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1))

    def value(self, t: float) -> np.ndarray:
        if len(self.times) == 1 or t >= self.times[-1]:
            return self.values[-1] if t >= self.times[-1] else self.values[0]
        if t <= self.times[0]:
            return self.values[0]
        i = self._segment(t)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - w) * self.values[i] + w * self.values[i + 1]

    def rate(self, t: float) -> np.ndarray:
        """Right derivative; zero outside the scheduled interval."""
        if len(self.times) == 1 or t >= self.times[-1] or t < self.times[0]:
            return np.zeros(6)
        i = self._segment(t)
        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])


TRAJECTORY_COLUMNS_SCHEMA = "v1"


@dataclass
class Trajectory:
    """Sampled material-point history; tensors stored as Mandel rows."""

    t: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    u: np.ndarray
    eps: np.ndarray
    r: np.ndarray
    T: np.ndarray
    w: np.ndarray
    work: np.ndarray
    heat: np.ndarray
    acoustic_energy: np.ndarray
    abs_work: np.ndarray
    mode: str = "stress"
    events: list = field(default_factory=list)
    classification: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> MaterialState:
        f = SymTensor2.from_mandel
        return MaterialState(float(self.t[i]), self.p[i].copy(), f(self.sigma[i]), f(self.u[i]),
                             f(self.eps[i]), f(self.r[i]), float(self.T[i]))

    @property
    def final(self) -> MaterialState:
        return self.state(len(self) - 1)

    def columns(self) -> list:
        K = self.p.shape[1]
        cols = ["t"] + [f"p_{k + 1}" for k in range(K)]
        for name in ("sigma", "u", "eps", "r"):
            cols += [f"{name}_{c}" for c in COMPONENT_NAMES]
        return cols + ["T", "w"]

    def table(self) -> np.ndarray:
        comp = lambda a: np.vstack([SymTensor2.from_mandel(row).components for row in a])
        return np.column_stack([self.t, self.p, comp(self.sigma), comp(self.u), comp(self.eps),
                                comp(self.r), self.T, self.w])

    def to_csv(self, path) -> None:
        write_csv(path, self.columns(), self.table(), schema=TRAJECTORY_COLUMNS_SCHEMA)


class _Layout:
    def __init__(self, K):
        self.K = K
        self.p = slice(0, K)
        self.sigma = slice(K, K + 6)
        self.u = slice(K + 6, K + 12)
        self.r = slice(K + 12, K + 18)
        self.T = K + 18
        self.work, self.heat, self.acoustic, self.abs_work = K + 19, K + 20, K + 21, K + 22
        self.size = K + 23


class _System:
    """Right-hand side and switching functions for one fixed classification."""

    def __init__(self, params: ModelParams, program: LoadProgram, lay: _Layout):
        self.params, self.program, self.lay = params, program, lay
        self.lock = None
        # piecewise-linear program: the controlled rate is constant between restarts
        self.load_rate = np.zeros(6)

    def sigma(self, t, y):
        return self.program.value(t) if self.program.mode == "stress" else y[self.lay.sigma]

    def rhs(self, t, y):
        lay, params = self.lay, self.params
        snap = snapshot(self.sigma(t, y), y[lay.p], y[lay.T], params, self.lock)
        vis = snap.viscous_strain_rate()
        if self.program.mode == "strain":
            du = self.load_rate
            dsigma = invert_compliance(snap.pl.mu) @ (du - vis)
        else:
            dsigma = self.load_rate
            du = snap.pl.mu @ dsigma + vis
        dy = np.empty(lay.size)
        dy[lay.p] = snap.density_rate()
        dy[lay.sigma] = dsigma
        dy[lay.u] = du
        dy[lay.r] = snap.residual_strain_rate()
        dy[lay.T] = _temperature_rate(snap, params)
        power = float(snap.sigma @ du)
        dy[lay.work] = power
        dy[lay.heat] = params.G
        dy[lay.acoustic] = _acoustic(snap)
        dy[lay.abs_work] = abs(power)
        return dy

    def normal_stresses(self, t, y):
        from .cracks import solve_effective_stress

        p = np.clip(y[self.lay.p], 0.0, None)
        sol = solve_effective_stress(self.sigma(t, y), p, self.params.geometry, self.params.families,
                                     classification=self.lock)
        scale = max(np.linalg.norm(sol.sigma_bar), 1e-300)
        return np.array([f.normal_stress(sol.sigma_bar) for f in self.params.families]) / scale

    def events(self, t, y, band: float):
        """One terminal event per family, firing when it crosses to the other side.

        A family starting within ``band`` of the boundary only fires once it is
        ``band`` beyond it, so rounding noise on the boundary cannot chatter.
        """
        g0 = self.normal_stresses(t, y)
        out = []
        for k, is_open in enumerate(self.lock):
            offset = band if abs(g0[k]) <= band else 0.0

            def event(t, y, k=k, is_open=is_open, offset=offset):
                g = self.normal_stresses(t, y)[k]
                return g + offset if is_open else g - offset

            event.terminal = True
            event.direction = -1 if is_open else 1
            out.append(event)
        return out

    def settle(self, t, y, band: float):
        """Resolve families sitting on the open/closed boundary at a restart.

        Their side is taken from a short predictor step along the current
        stress rate (at zero stress every family is on the boundary).  Returns
        the updated state and the flipped families.
        """
        g0 = self.normal_stresses(t, y)
        ambiguous = np.abs(g0) <= band
        if not ambiguous.any():
            return y, []
        from .cracks import solve_effective_stress

        lay = self.lay
        s = self.sigma(t, y)
        ds = self.rhs(t, y)[lay.sigma] if self.program.mode == "strain" else self.load_rate
        rate = np.linalg.norm(ds)
        if rate == 0.0:
            return y, []
        step = 1e-6 * max(np.linalg.norm(s), 1e-300) / rate if np.linalg.norm(s) > 0 else 1.0 / rate
        p = np.clip(y[lay.p], 0.0, None)
        ahead = solve_effective_stress(s + step * ds, p, self.params.geometry, self.params.families).classification
        hit = [k for k in np.flatnonzero(ambiguous) if ahead[k] != self.lock[k]]
        if not hit:
            return y, []
        return self.switch(t, y, hit), [int(k) for k in hit]

    def switch(self, t, y, hit):
        """Flip the hit families and book the elastic-strain jump.

        The energy density is continuous across an open/closed switch but has
        a kink there, so eps = mu sigma jumps by an increment orthogonal to
        sigma (no work is done).  Under strain control the jump goes to the
        residual strain, under stress control to the total strain, keeping
        u = eps + r exact.
        """
        lay = self.lay
        sigma = self.sigma(t, y)
        p = np.clip(y[lay.p], 0.0, None)
        after = tuple(not c if k in hit else c for k, c in enumerate(self.lock))
        mu_b = _pliability(sigma, p, self.params, self.lock).mu
        mu_a = _pliability(sigma, p, self.params, after).mu
        jump = (mu_a - mu_b) @ sigma
        y = y.copy()
        if self.program.mode == "strain":
            y[lay.r] -= jump
        else:
            y[lay.u] += jump
        self.lock = after
        return y


def integrate(
    state0: MaterialState,
    program: LoadProgram,
    params: ModelParams,
    t_end: float,
    t_eval: Optional[Sequence[float]] = None,
    rtol: float = 1e-7,
    atol: float = 1e-9,
    method: str = "RK45",
    max_step: float = np.inf,
    invariant_tol: float = 1e-6,
    switch_band: float = 1e-9,
    max_switches: int = 10_000,
) -> Trajectory:
    """Integrate the closed material-point system from ``state0`` to ``t_end``.

    Output times are the solver's accepted steps plus ``t_eval`` (taken from
    the dense interpolant).  Integration restarts at every load-program
    breakpoint and at every open/closed switch of a crack family; between
    restarts the classification is held fixed so each stretch is smooth.
    """
    from .cracks import solve_effective_stress

    t0 = state0.t
    if t_end <= t0:
        raise ValueError("t_end must exceed the initial time")
    if len(program.times) > 1 and (program.times[0] > t0 or program.times[-1] < t_end):
        raise ValueError("load program does not cover the integration interval")
    lay = _Layout(params.K)
    y = np.zeros(lay.size)
    y[lay.p] = state0.p
    y[lay.sigma] = program.value(t0) if program.mode == "stress" else state0.sigma.mandel
    y[lay.u] = state0.u.mandel
    y[lay.r] = state0.r.mandel
    y[lay.T] = state0.T
    system = _System(params, program, lay)
    system.lock = solve_effective_stress(system.sigma(t0, y), np.clip(state0.p, 0, None),
                                         params.geometry, params.families).classification

    breaks = [tb for tb in program.times if t0 < tb < t_end] + [t_end]
    requested = None if t_eval is None else np.unique(np.asarray(t_eval, dtype=float))
    if requested is not None and (requested.min() < t0 or requested.max() > t_end):
        raise ValueError("requested output times fall outside [t0, t_end]")
    ts, ys, locks = [t0], [y.copy()], [system.lock]
    switches = []
    ta = t0
    for tb in breaks:
        fresh = True
        while ta < tb:
            system.load_rate = program.rate(0.5 * (ta + tb))
            if fresh:
                y, hit = system.settle(ta, y, switch_band)
                if hit:
                    switches.append((ta, hit))
                    ts.append(ta)
                    ys.append(y.copy())
                    locks.append(system.lock)
                fresh = False
            events = system.events(ta, y, switch_band) if len(switches) < max_switches else None
            sol = solve_ivp(system.rhs, (ta, tb), y, method=method, events=events, rtol=rtol, atol=atol,
                            max_step=max_step, dense_output=requested is not None)
            if sol.status == -1:
                raise IntegrationError(f"integration failed after t={sol.t[-1]:.6g}: {sol.message}")
            t_stop = tb if sol.status == 0 else float(sol.t[-1])
            seg_t = list(sol.t[1:])
            seg_y = list(sol.y[:, 1:].T)
            if requested is not None:
                inside = requested[(requested > ta) & (requested <= t_stop)]
                inside = inside[~np.isin(inside, seg_t)]
                if len(inside):
                    seg_t.extend(inside)
                    seg_y.extend(sol.sol(inside).T)
                    order = np.argsort(seg_t, kind="stable")
                    seg_t = [seg_t[i] for i in order]
                    seg_y = [seg_y[i] for i in order]
            ts.extend(seg_t)
            ys.extend(seg_y)
            locks.extend([system.lock] * len(seg_t))
            y = sol.y[:, -1].copy()
            if sol.status == 1:
                hit = [k for k, te in enumerate(sol.t_events) if len(te)]
                if t_stop <= ta and switches and switches[-1][0] == ta:
                    raise IntegrationError(f"open/closed switching does not advance time at t={ta:.6g}")
                y = system.switch(t_stop, y, hit)
                switches.append((t_stop, hit))
                # the switch point is reported once more with the new classification
                ts.append(t_stop)
                ys.append(y.copy())
                locks.append(system.lock)
            ta = t_stop
    return _assemble(np.asarray(ts, dtype=float), np.asarray(ys), locks, params, program, lay, invariant_tol,
                     switches)


def _assemble(ts, ys, locks, params, program, lay, tol, switches) -> Trajectory:
    n = len(ts)
    K = params.K
    out = dict(
        p=np.empty((n, K)), sigma=np.empty((n, 6)), u=np.empty((n, 6)), eps=np.empty((n, 6)),
        r=np.empty((n, 6)), T=np.empty(n), w=np.empty(n),
    )
    for i, (t, y, lock) in enumerate(zip(ts, ys, locks)):
        p = y[lay.p]
        check_density(p, params.geometry.theta)
        if y[lay.T] <= 0:
            raise InvariantViolation(f"temperature became nonpositive at t={t:.6g}")
        sigma = program.value(t) if program.mode == "stress" else y[lay.sigma]
        snap = snapshot(sigma, p, y[lay.T], params, lock)
        eps = snap.pl.mu @ sigma
        u, r = y[lay.u], y[lay.r]
        gap = np.linalg.norm(u - (eps + r))
        scale = max(np.linalg.norm(u), np.linalg.norm(eps), np.linalg.norm(r), 1e-12)
        if gap > tol * scale:
            raise InvariantViolation(f"u != eps + r at t={t:.6g}: gap {gap:.3e} (scale {scale:.3e})")
        out["p"][i] = p
        out["sigma"][i] = sigma
        out["u"][i] = u
        out["eps"][i] = eps
        out["r"][i] = r
        out["T"][i] = y[lay.T]
        out["w"][i] = _acoustic(snap)
    return Trajectory(
        t=ts, work=ys[:, lay.work], heat=ys[:, lay.heat], acoustic_energy=ys[:, lay.acoustic],
        abs_work=ys[:, lay.abs_work], mode=program.mode, events=switches,
        classification=np.array(locks, dtype=bool).reshape(n, K), **out,
    )


@dataclass
class EnergyBudget:
    residual: np.ndarray
    scale: float
    elastic: np.ndarray
    surface: np.ndarray
    thermal: np.ndarray

    @property
    def relative(self) -> float:
        return float(np.abs(self.residual).max() / self.scale)


def energy_budget(traj: Trajectory, params: ModelParams) -> EnergyBudget:
    """First-law residual along a trajectory.

    Elastic energy is evaluated from the screened-stress formula directly (not
    through mu), so this checks the rate equations against an independent
    route:  dE_el + dE_surf + rho cp dT - int sigma:du - int G dt = 0.
    """
    from .cracks import energy_density

    g = params.geometry
    el = np.array([energy_density(s, np.clip(p, 0, None), g, params.families, params.elastic)
                   for s, p in zip(traj.sigma, traj.p)])
    surf = traj.p @ params.surface_energy()
    therm = params.rho * params.cp * traj.T
    res = (el - el[0]) + (surf - surf[0]) + (therm - therm[0]) - traj.work - traj.heat
    scale = max(float(traj.abs_work[-1]), float(np.abs(el - el[0]).max()), float(np.abs(therm - therm[0]).max()),
                float(np.abs(traj.heat[-1])), 1e-300)
    return EnergyBudget(res, scale, el, surf, therm)


def with_temperature(state: MaterialState, T: float) -> MaterialState:
    return replace(state, T=float(T))
