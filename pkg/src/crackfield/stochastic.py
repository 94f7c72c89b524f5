"""Finite-N stochastic model: mean-field birth/death of cracks on N cells.

Each of N cells is empty or holds one crack of family k.  An empty cell
acquires a family-k crack at rate Lambda_k(n/N), an occupied cell heals at
rate M_k(n/N).  Rates here depend on the occupied fraction x = sum(n)/N only,
which is what the shear model produces and what makes per-count tabulation
possible.

For K = 1 the count n(t) is itself a birth-death chain whose stationary law is
available in closed form; it serves as the oracle for the large-N asymptotics.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaln, logsumexp

from .errors import RateOverflowError
from .io import write_csv

# ---------------------------------------------------------------- rate models


class RateModel:
    """Per-family birth and healing intensities as functions of the occupied fraction."""

    K: int = 1

    def birth(self, x) -> np.ndarray:
        """Lambda_k(x), shape x.shape + (K,)."""
        raise NotImplementedError

    def heal(self, x) -> np.ndarray:
        """M_k(x), shape x.shape + (K,)."""
        raise NotImplementedError

    # scalar views, K = 1
    def birth1(self, x):
        return self.birth(x)[..., 0]

    def heal1(self, x):
        return self.heal(x)[..., 0]

    def ratio1(self, x):
        """f(x) = Lambda(x) / M(x) for K = 1."""
        return self.birth1(x) / self.heal1(x)

    def log_ratio1(self, x):
        return np.log(self.birth1(x)) - np.log(self.heal1(x))


@dataclass(frozen=True)
class ConstantRates(RateModel):
    birth_values: tuple
    heal_values: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in np.atleast_1d(self.birth_values))
        h = tuple(float(v) for v in np.atleast_1d(self.heal_values))
        if len(b) != len(h):
            raise ValueError("birth and healing rates need one value per family")
        if min(b + h) < 0:
            raise ValueError("rates must be nonnegative")
        object.__setattr__(self, "birth_values", b)
        object.__setattr__(self, "heal_values", h)

    @property
    def K(self) -> int:
        return len(self.birth_values)

    def birth(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array(self.birth_values), x.shape + (self.K,)).copy()

    def heal(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array(self.heal_values), x.shape + (self.K,)).copy()


@dataclass(frozen=True)
class FunctionRates(RateModel):
    """Rates from user callables x -> scalar (shared by all K families) or (..., K)."""

    birth_fn: Callable
    heal_fn: Callable
    n_families: int = 1

    @property
    def K(self) -> int:
        return self.n_families

    def _eval(self, fn, x):
        x = np.asarray(x, dtype=float)
        v = np.asarray(fn(x), dtype=float)
        if v.shape == x.shape:
            v = v[..., None]
        return np.broadcast_to(v, x.shape + (self.K,)).copy()

    def birth(self, x):
        return self._eval(self.birth_fn, x)

    def heal(self, x):
        return self._eval(self.heal_fn, x)


@dataclass(frozen=True)
class ShearRates(RateModel):
    """Shear-model intensities at fixed stress, split evenly over K families.

    With K = 2 and identical families the total occupied fraction obeys the
    scalar shear-model equation exactly.
    """

    params: object  # phase.ShearModelParams
    sigma: float
    n_families: int = 1

    @property
    def K(self) -> int:
        return self.n_families

    def birth(self, x):
        x = np.asarray(x, dtype=float)
        lam = self.params.birth_rate(x, self.sigma) / self.K
        return np.repeat(lam[..., None], self.K, axis=-1)

    def heal(self, x):
        x = np.asarray(x, dtype=float)
        m = np.full(x.shape, self.params.heal_rate())
        return np.repeat(m[..., None], self.K, axis=-1)


# ---------------------------------------------------------------- Gillespie


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """Occupancy of N cells: 0 = empty, k = crack of family k (1-based)."""

    occupancy: np.ndarray
    K: int = 1

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.int64).reshape(-1)
        if occ.size == 0:
            raise ValueError("need at least one cell")
        if occ.min() < 0 or occ.max() > self.K:
            raise ValueError(f"occupancy values must lie in 0..{self.K}")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def empty(cls, N: int, K: int = 1) -> "SpinConfig":
        return cls(np.zeros(N, dtype=np.int64), K)

    @classmethod
    def from_counts(cls, N: int, counts: Sequence[int]) -> "SpinConfig":
        counts = [int(c) for c in counts]
        if min(counts) < 0 or sum(counts) > N:
            raise ValueError("counts must be nonnegative with sum at most N")
        occ = np.zeros(N, dtype=np.int64)
        i = 0
        for k, c in enumerate(counts, start=1):
            occ[i:i + c] = k
            i += c
        return cls(occ, len(counts))

    @property
    def N(self) -> int:
        return int(self.occupancy.size)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.occupancy, minlength=self.K + 1)[1:]


@dataclass
class EventPath:
    """Jump times, event kinds (+1 birth, -1 healing) and families (0-based)."""

    N: int
    n0: np.ndarray
    t: np.ndarray
    kind: np.ndarray
    family: np.ndarray
    t_end: float

    @property
    def K(self) -> int:
        return len(self.n0)

    def counts(self) -> np.ndarray:
        """Counts after each event, shape (len(t), K)."""
        steps = np.zeros((len(self.t), self.K), dtype=np.int64)
        steps[np.arange(len(self.t)), self.family] = self.kind
        return self.n0[None, :] + np.cumsum(steps, axis=0)

    def sample(self, times) -> np.ndarray:
        """Counts at the given times (right-continuous path), shape (len(times), K)."""
        times = np.asarray(times, dtype=float)
        c = np.vstack([self.n0[None, :], self.counts()])
        idx = np.searchsorted(self.t, times, side="right")
        return c[idx]

    def to_csv(self, path) -> None:
        cols = ["t", "event_type", "family"] + [f"n_{k + 1}" for k in range(self.K)]
        counts = self.counts()
        rows = [[0.0, 0, 0] + self.n0.tolist()]
        rows += [[t, k, f + 1] + c for t, k, f, c in
                 zip(self.t.tolist(), self.kind.tolist(), self.family.tolist(), counts.tolist())]
        write_csv(path, cols, rows)


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for (seed, replica)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replica,)))


def _tabulate(model: RateModel, N: int):
    x = np.arange(N + 1) / N
    with np.errstate(over="raise", invalid="raise"):
        try:
            b, h = model.birth(x), model.heal(x)
        except FloatingPointError as exc:
            raise RateOverflowError(f"rate evaluation overflowed on the grid n/N: {exc}") from None
    for name, tab in (("birth", b), ("healing", h)):
        bad = ~np.isfinite(tab)
        if bad.any():
            m = int(np.argwhere(bad)[0][0])
            raise RateOverflowError(f"{name} rate is not finite at n = {m} (x = {m / N:.6g})")
        if (tab < 0).any():
            raise ValueError(f"{name} rates must be nonnegative")
    return b.tolist(), h.tolist()


def gillespie_run(
    N: int,
    model: RateModel,
    t_end: float,
    seed: int = 0,
    replica: int = 0,
    initial=None,
    max_events: int = 50_000_000,
) -> EventPath:
    """Exact-in-law continuous-time path of the N-cell process on [0, t_end].

    Waiting times are exponential with the total rate
    R = sum_k [(N - sum n) Lambda_k + n_k M_k] and the event is drawn with
    probability proportional to its rate.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    K = model.K
    if initial is None:
        n = [0] * K
    elif isinstance(initial, SpinConfig):
        if initial.N != N:
            raise ValueError("initial configuration has the wrong number of cells")
        n = initial.counts.tolist()
    else:
        n = [int(c) for c in initial]
    if len(n) != K or min(n) < 0 or sum(n) > N:
        raise ValueError("initial counts must be nonnegative, one per family, sum at most N")
    n0 = np.array(n, dtype=np.int64)
    birth, heal = _tabulate(model, N)
    rng = replica_rng(seed, replica)
    block = 65536
    expo, unif, pos = [], [], block
    times, kinds, fams = [], [], []
    t = 0.0
    total = sum(n)
    rates = [0.0] * (2 * K)
    while len(times) < max_events:
        empty = N - total
        bt, ht = birth[total], heal[total]
        R = 0.0
        for k in range(K):
            rates[k] = empty * bt[k]
            rates[K + k] = n[k] * ht[k]
            R += rates[k] + rates[K + k]
        if R <= 0.0:
            break
        if pos == block:
            expo = rng.standard_exponential(block).tolist()
            unif = rng.random(block).tolist()
            pos = 0
        t += expo[pos] / R
        if t > t_end:
            break
        target = unif[pos] * R
        pos += 1
        j = 0
        acc = rates[0]
        while acc <= target and j < 2 * K - 1:
            j += 1
            acc += rates[j]
        # guard against rounding picking a zero-rate channel
        while rates[j] == 0.0:
            j -= 1
        if j < K:
            n[j] += 1
            total += 1
            kinds.append(1)
            fams.append(j)
        else:
            n[j - K] -= 1
            total -= 1
            kinds.append(-1)
            fams.append(j - K)
        times.append(t)
    else:
        raise RuntimeError(f"event budget of {max_events} exhausted before t_end")
    return EventPath(N, n0, np.array(times), np.array(kinds, dtype=np.int64),
                     np.array(fams, dtype=np.int64), float(t_end))


def _replica_task(args):
    N, model, t_end, seed, r, times, initial = args
    path = gillespie_run(N, model, t_end, seed=seed, replica=r, initial=initial)
    return path.sample(times) / N


def ensemble_mean(
    N: int,
    model: RateModel,
    t_end: float,
    times,
    seed: int = 0,
    replicas: int = 64,
    initial=None,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation over replicas of n_k(t)/N at ``times``."""
    times = np.asarray(times, dtype=float)
    tasks = [(N, model, t_end, seed, r, times, initial) for r in range(replicas)]
    if workers > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_replica_task, tasks))
    else:
        samples = [_replica_task(a) for a in tasks]
    stack = np.stack(samples)
    return stack.mean(axis=0), stack.std(axis=0)


def mean_field_ode(model: RateModel, times, y0=None, rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """Deterministic limit dy_k/dt = (1 - sum y) Lambda_k(y) - y_k M_k(y)."""
    times = np.asarray(times, dtype=float)
    y0 = np.zeros(model.K) if y0 is None else np.asarray(y0, dtype=float)

    def rhs(t, y):
        x = y.sum()
        return (1.0 - x) * model.birth(x) - y * model.heal(x)

    sol = solve_ivp(rhs, (times[0], times[-1]), y0, t_eval=times, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y.T


# ---------------------------------------------------------------- exact chain (K = 1)


@dataclass
class ChainDistribution:
    """Stationary law of the occupied count n in 0..N."""

    N: int
    log_pi: np.ndarray

    def __post_init__(self):
        self.log_pi = np.asarray(self.log_pi, dtype=float)
        if self.log_pi.shape != (self.N + 1,):
            raise ValueError("need one probability per count 0..N")

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.N + 1)

    def mean(self) -> float:
        return float(self.pi @ self.n) / self.N

    def variance(self) -> float:
        """Variance of x = n/N."""
        x = self.n / self.N
        return float(self.pi @ x**2 - (self.pi @ x) ** 2)

    def to_csv(self, path) -> None:
        write_csv(path, ["n", "probability"], list(zip(self.n.tolist(), self.pi.tolist())))


def _normalize(log_w: np.ndarray) -> np.ndarray:
    return log_w - logsumexp(log_w)


def exact_stationary(N: int, model: RateModel) -> ChainDistribution:
    """Detailed-balance solution pi(n+1)/pi(n) = (N-n) Lambda(n/N) / ((n+1) M((n+1)/N))."""
    if model.K != 1:
        raise ValueError("the exact stationary law is available for K = 1 only")
    n = np.arange(N)
    lam = model.birth1(n / N)
    mu = model.heal1((n + 1) / N)
    if np.any(lam <= 0) or np.any(mu <= 0):
        raise ValueError("rates must be strictly positive on [0, 1]")
    step = np.log(N - n) + np.log(lam) - np.log(n + 1) - np.log(mu)
    return ChainDistribution(N, _normalize(np.concatenate([[0.0], np.cumsum(step)])))


def log_binomial(N, n):
    return gammaln(N + 1) - gammaln(n + 1) - gammaln(N - n + 1)


def product_form_stationary(N: int, model: RateModel, shifted: bool = True) -> ChainDistribution:
    """pi(n) = C(N, n) prod_{m<n} f_N(m/N) / Z.

    ``shifted``: f_N(m/N) = Lambda(m/N) / M((m+1)/N), which is the exact
    balance ratio; otherwise f(m/N) = Lambda(m/N) / M(m/N).
    """
    m = np.arange(N)
    lam = model.birth1(m / N)
    mu = model.heal1((m + 1) / N if shifted else m / N)
    log_f = np.log(lam) - np.log(mu)
    n = np.arange(N + 1)
    log_w = log_binomial(N, n) + np.concatenate([[0.0], np.cumsum(log_f)])
    return ChainDistribution(N, _normalize(log_w))


def generator_residual(dist: ChainDistribution, model: RateModel) -> float:
    """max |pi Q| relative to the largest probability flux out of a state."""
    N = dist.N
    n = np.arange(N + 1)
    up = (N - n) * model.birth1(n / N)
    down = n * model.heal1(n / N)
    pi = dist.pi
    flow = -pi * (up + down)
    flow[1:] += pi[:-1] * up[:-1]
    flow[:-1] += pi[1:] * down[1:]
    return float(np.abs(flow).max() / (pi * (up + down)).max())


# ---------------------------------------------------------------- large-N asymptotics

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def integrated_log_ratio(model: RateModel, x) -> np.ndarray:
    """int_0^x ln f(s) ds on an increasing grid by panelwise Gauss-Legendre."""
    x = np.asarray(x, dtype=float)
    edges = np.concatenate([[0.0], x])
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    s = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    panels = half * (model.log_ratio1(s) @ _GL_WEIGHTS)
    return np.cumsum(panels)


def free_energy_density(model: RateModel, x) -> np.ndarray:
    """F(x) = int_0^x ln f - x ln x - (1-x) ln(1-x), exponent of the stationary law."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x)
    out = np.empty_like(x)
    out[order] = integrated_log_ratio(model, x[order])
    return out - x * np.log(x) - (1 - x) * np.log1p(-x)


def asymptotic_log_u(N: int, model: RateModel, x) -> np.ndarray:
    """Unnormalized ln u_N(x) = N F(x) - 1/2 ln[2 pi N x (1-x) Lambda(x) M(x)]."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("the asymptotic density is defined for 0 < x < 1 only")
    lam, mu = model.birth1(x), model.heal1(x)
    return N * free_energy_density(model, x) - 0.5 * np.log(2 * np.pi * N * x * (1 - x) * lam * mu)


def asymptotic_u(N: int, model: RateModel, x) -> np.ndarray:
    """Density u_N(x) on (0,1), normalized on the given grid by the trapezoid rule."""
    x = np.asarray(x, dtype=float)
    lu = asymptotic_log_u(N, model, x)
    u = np.exp(lu - lu.max())
    return u / np.trapezoid(u, x)


def asymptotic_pmf(N: int, model: RateModel) -> np.ndarray:
    """Lattice version over n = 0..N (zero at the excluded endpoints)."""
    n = np.arange(1, N)
    lu = asymptotic_log_u(N, model, n / N)
    out = np.zeros(N + 1)
    out[1:N] = np.exp(lu - logsumexp(lu))
    return out


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def stationary_points(model: RateModel, grid: int = 4000) -> np.ndarray:
    """Roots of F'(x) = ln f(x) - ln(x/(1-x)) on (0,1)."""
    x = np.linspace(0, 1, grid + 1)[1:-1]
    g = model.log_ratio1(x) - np.log(x / (1 - x))
    roots = []
    for i in np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:])):
        roots.append(brentq(lambda s: model.log_ratio1(s) - math.log(s / (1 - s)), x[i], x[i + 1],
                            xtol=1e-15, rtol=1e-15))
    return np.array(roots)


def argmax_free_energy(model: RateModel) -> float:
    """Maximizer of F: bounded search on F values, polished on its derivative."""
    x = np.linspace(0, 1, 2001)[1:-1]
    F = free_energy_density(model, x)
    i = int(np.argmax(F))
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, len(x) - 1)]
    coarse = minimize_scalar(lambda s: -free_energy_density(model, np.array([s]))[0], bounds=(lo, hi),
                             method="bounded", options={"xatol": 1e-9}).x
    dF = lambda s: float(model.log_ratio1(s) - math.log(s) + math.log1p(-s))
    a, b = max(coarse - 1e-6, 1e-15), min(coarse + 1e-6, 1 - 1e-15)
    if dF(a) > 0 > dF(b):
        return brentq(dF, a, b, xtol=1e-15, rtol=1e-15)
    return float(coarse)


def self_consistent_density(model: RateModel) -> float:
    """Solution of p = f(p) / (1 + f(p)) (unique when F has a single peak)."""
    h = lambda p: p - model.ratio1(p) / (1.0 + model.ratio1(p))
    x = np.linspace(0, 1, 2001)
    v = np.array([h(s) for s in x])
    idx = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
    if len(idx) == 0:
        raise ValueError("p = f/(1+f) has no root in [0, 1]")
    if len(idx) > 1:
        raise ValueError("p = f/(1+f) has several roots: F is not single-peaked")
    return brentq(h, x[idx[0]], x[idx[0] + 1], xtol=1e-15, rtol=1e-15)


# ---------------------------------------------------------------- marginals


def joint_marginal(size_a: int, size_b: int, dist: ChainDistribution) -> float:
    """P(the cells of B are occupied and those of A \\ B empty), B within A.

    By exchangeability, given n occupied cells every n-subset is equally
    likely, so the conditional probability is C(N-|A|, n-|B|) / C(N, n).
    """
    N = dist.N
    if not 0 <= size_b <= size_a <= N:
        raise ValueError("need 0 <= |B| <= |A| <= N")
    n = np.arange(N + 1)
    ok = (n >= size_b) & (n - size_b <= N - size_a)
    nn = n[ok]
    if size_a <= 64:
        # falling-factorial products avoid the rounding of large gammaln differences
        c = np.ones(len(nn))
        for i in range(size_b):
            c *= (nn - i) / (N - i)
        for j in range(size_a - size_b):
            c *= (N - nn - j) / (N - size_b - j)
        return float(dist.pi[ok] @ c)
    log_c = log_binomial(N - size_a, nn - size_b) - log_binomial(N, nn)
    return float(np.exp(logsumexp(dist.log_pi[ok] + log_c)))


def pair_covariance(dist: ChainDistribution) -> float:
    """Cov of the occupation indicators of two distinct cells."""
    return joint_marginal(2, 2, dist) - joint_marginal(1, 1, dist) ** 2
