"""Crack families, stress screening and the pliability of a cracked body.

All heavy lifting is done on Mandel 6-vectors (see :mod:`crackfield.tensor`).
For a fixed open/closed classification the screening map Q_k is a symmetric
orthogonal projector, the effective-stress system is a symmetric 6x6 linear
system ``L sigma_bar = sigma`` with

    L = I - sum_k theta p_k P_k,     P_k = I - Q_k,

and the energy density is the quadratic form ``e = 1/2 sigma . mu sigma`` with
``mu = L^-1 B L^-1``, ``B = (1 - theta sum p) mu0 + theta sum p_k Q_k mu0 Q_k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import (
    ClassificationBoundaryError,
    ClassificationError,
    NearSingularScreeningError,
)
from .tensor import (
    IDENTITY_MANDEL,
    Rotation,
    SymTensor2,
    TensorLike,
    as_mandel,
    isotropic_compliance,
)

#: relative dead band around a zero crack-normal stress, treated as open
TIE_TOLERANCE = 1e-12
_OPEN_MASK = np.array([0.0, 1.0, 1.0, 0.0, 1.0, 0.0])
_CLOSED_MASK = np.array([1.0, 1.0, 1.0, 0.0, 1.0, 0.0])

ActivationEnergy = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class IsotropicElastic:
    E: float
    nu: float
    full_isotropic_energy: bool = False

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {self.nu}")

    @cached_property
    def compliance(self) -> np.ndarray:
        return isotropic_compliance(self.E, self.nu, self.full_isotropic_energy)

    def energy(self, s: TensorLike) -> float:
        m = as_mandel(s)
        return 0.5 * float(m @ self.compliance @ m)


@dataclass(frozen=True)
class CrackGeometry:
    """Cell edge ``a``, crack radius ``r`` and activation volume ``v0``."""

    a: float
    r: float
    v0: float

    def __post_init__(self):
        if not (self.a > 0 and self.r > 0):
            raise ValueError("cell edge and crack radius must be positive")
        if not self.v0 > 0:
            raise ValueError("activation volume v0 must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0,1), got {self.theta:.6g}")

    @classmethod
    def from_theta(cls, theta: float, v0: float, a: float = 1.0) -> "CrackGeometry":
        if not 0.0 < theta < 1.0:
            raise ValueError(f"theta must lie in (0,1), got {theta}")
        return cls(a=a, r=a * (3.0 * theta / (4.0 * np.pi)) ** (1.0 / 3.0), v0=v0)

    @property
    def theta(self) -> float:
        """Screened volume fraction per crack, 4 pi r^3 / (3 a^3)."""
        return 4.0 * np.pi * self.r**3 / (3.0 * self.a**3)


@dataclass(frozen=True, eq=False)
class CrackFamily:
    """One crack orientation with its kinetic constants.

    ``U`` is either a constant healing activation energy or a callable of the
    effective normal stress on the crack plane.
    """

    frame: Rotation
    c0: float
    c1: float
    U: ActivationEnergy = 0.0
    radius: Optional[float] = None
    index: int = 0

    def __post_init__(self):
        if not (self.c0 >= 0 and self.c1 >= 0):
            raise ValueError("rate prefactors c0, c1 must be nonnegative")

    @classmethod
    def from_normal(cls, normal, c0: float, c1: float, U: ActivationEnergy = 0.0, **kw) -> "CrackFamily":
        return cls(Rotation.from_normal(normal), c0, c1, U, **kw)

    @cached_property
    def rotation6(self) -> np.ndarray:
        return self.frame.mandel_matrix()

    @cached_property
    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        """(Q_open, Q_closed) in lab Mandel coordinates."""
        r = self.rotation6
        return (r.T @ (_OPEN_MASK[:, None] * r), r.T @ (_CLOSED_MASK[:, None] * r))

    def normal_stress(self, sigma_bar_m: np.ndarray) -> float:
        """(T sigma_bar)_11: normal stress on the crack plane."""
        return float(self.rotation6[0] @ sigma_bar_m)

    def activation_energy(self, normal_stress: float) -> float:
        return float(self.U(normal_stress)) if callable(self.U) else float(self.U)


Classification = tuple  # tuple[bool, ...], True = open


def screen_operator(local: TensorLike) -> SymTensor2:
    """Mask a crack-frame tensor: open cracks lose row/column 1, closed only shear 12, 13."""
    t = local if isinstance(local, SymTensor2) else SymTensor2.from_mandel(as_mandel(local))
    mask = _OPEN_MASK if t.components[0] >= 0 else _CLOSED_MASK
    return SymTensor2(t.components * mask)


def classify(sigma_bar_m: np.ndarray, fams: Sequence[CrackFamily]) -> Classification:
    scale = TIE_TOLERANCE * max(np.linalg.norm(sigma_bar_m), 1e-300)
    return tuple(bool(f.normal_stress(sigma_bar_m) >= -scale) for f in fams)


def q_operator(fam: CrackFamily, sigma_bar: TensorLike) -> SymTensor2:
    """Stress inside the screened sphere: rotate to the crack frame, mask, rotate back."""
    m = as_mandel(sigma_bar)
    is_open = classify(m, [fam])[0]
    q = fam.projectors[0 if is_open else 1]
    return SymTensor2.from_mandel(q @ m)


@dataclass
class ScreeningSolution:
    """Effective stress and the fixed-classification operators behind it."""

    sigma_bar: np.ndarray
    classification: Classification
    L: np.ndarray
    L_inv: np.ndarray
    Q: list
    residual: float

    @property
    def sigma_bar_tensor(self) -> SymTensor2:
        return SymTensor2.from_mandel(self.sigma_bar)


def _check_density(p: np.ndarray, theta: float) -> None:
    if np.any(p < 0):
        raise ValueError("crack densities must be nonnegative")
    if theta * p.sum() > 1.0 - 1e-9:
        raise NearSingularScreeningError(f"near-singular screening: theta*sum(p) = {theta * p.sum():.12g}")


def _system(p, theta, fams, cls):
    qs = [f.projectors[0 if o else 1] for f, o in zip(fams, cls)]
    L = np.eye(6)
    for pk, q in zip(p, qs):
        if pk:
            L -= theta * pk * (np.eye(6) - q)
    return L, qs


def solve_effective_stress(
    sigma: TensorLike,
    p,
    geom: CrackGeometry,
    fams: Sequence[CrackFamily],
    max_iter: Optional[int] = None,
    classification: Optional[Classification] = None,
) -> ScreeningSolution:
    """Solve [I - sum theta p_i (I - Q_i)] sigma_bar = sigma self-consistently.

    Alternates between classifying the families from the current estimate and
    solving the then-linear system; if that cycles, every classification is
    tried and the first self-consistent one accepted.  A given
    ``classification`` is used as is, without a consistency check.
    """
    s = as_mandel(sigma)
    p = np.asarray(p, dtype=float).reshape(len(fams))
    theta = geom.theta
    _check_density(p, theta)
    scale = max(np.linalg.norm(s), 1e-300)

    def attempt(cls):
        L, qs = _system(p, theta, fams, cls)
        L_inv = np.linalg.inv(L)
        sb = L_inv @ s
        return sb, L, L_inv, qs

    def accept(cls, sb, L, L_inv, qs):
        res = float(np.linalg.norm(L @ sb - s) / scale)
        return ScreeningSolution(sb, cls, L, L_inv, qs, res)

    if classification is not None:
        return accept(tuple(bool(c) for c in classification), *attempt(classification))
    cls = classify(s, fams)
    n_iter = max_iter if max_iter is not None else 2 ** len(fams) + 8
    seen = set()
    for _ in range(n_iter):
        sb, L, L_inv, qs = attempt(cls)
        new = classify(sb, fams)
        if new == cls:
            return accept(cls, sb, L, L_inv, qs)
        if new in seen:
            break
        seen.add(cls)
        cls = new
    for cand in itertools.product((True, False), repeat=len(fams)):
        sb, L, L_inv, qs = attempt(cand)
        if classify(sb, fams) == cand:
            return accept(cand, sb, L, L_inv, qs)
    raise ClassificationError("no consistent classification of crack families")


def energy_density(sigma, p, geom, fams, elastic: IsotropicElastic) -> float:
    """(1 - sum rho_k) e~(sigma_bar) + sum rho_k e~(Q_k sigma_bar), rho_k = theta p_k."""
    sol = solve_effective_stress(sigma, p, geom, fams)
    rho = geom.theta * np.asarray(p, dtype=float)
    e = (1.0 - rho.sum()) * elastic.energy(sol.sigma_bar)
    for rk, q in zip(rho, sol.Q):
        e += rk * elastic.energy(q @ sol.sigma_bar)
    return e


@dataclass
class Pliability:
    """Compliance of the cracked body and its sensitivities at one state."""

    screening: ScreeningSolution
    mu: np.ndarray
    mu_k: list
    mu_healed: list

    @property
    def classification(self) -> Classification:
        return self.screening.classification


def _healed(mu_k: np.ndarray, is_open: bool) -> np.ndarray:
    # only diagonal strain slots, each receiving 1/3 of the volume strain
    if not is_open:
        return np.zeros((6, 6))
    return np.outer(IDENTITY_MANDEL, IDENTITY_MANDEL @ mu_k) / 3.0


def pliability(sigma, p, geom, fams, elastic: IsotropicElastic, classification=None) -> Pliability:
    """mu, mu^k = d mu / d p_k and the healed-crack corrections at (sigma, p).

    mu^k is obtained analytically by differentiating mu = L^-1 B L^-1 with the
    classification held fixed (the pliabilities are step functions of sigma).
    """
    sol = solve_effective_stress(sigma, p, geom, fams, classification=classification)
    theta = geom.theta
    p = np.asarray(p, dtype=float)
    mu0 = elastic.compliance
    Li = sol.L_inv
    B = (1.0 - theta * p.sum()) * mu0
    qmq = [q @ mu0 @ q for q in sol.Q]
    for pk, m in zip(p, qmq):
        B = B + theta * pk * m
    LiB = Li @ B
    mu = LiB @ Li
    mu = 0.5 * (mu + mu.T)
    mu_k, mu_t = [], []
    eye = np.eye(6)
    for q, m, is_open in zip(sol.Q, qmq, sol.classification):
        G = Li @ (eye - q) @ Li
        d = theta * (G @ B @ Li + LiB @ G + Li @ (m - mu0) @ Li)
        d = 0.5 * (d + d.T)
        mu_k.append(d)
        mu_t.append(_healed(d, is_open))
    return Pliability(sol, mu, mu_k, mu_t)


def _check_boundary(sigma, sol: ScreeningSolution, fams, rtol=1e-9):
    norm = max(np.linalg.norm(sol.sigma_bar), 1e-300)
    for f in fams:
        v = f.normal_stress(sol.sigma_bar)
        if v != 0.0 and abs(v) < rtol * norm:
            raise ClassificationBoundaryError(
                f"crack family {f.index}: normal stress {v:.3e} lies on the open/closed boundary"
            )


def crack_pliability(k: int, sigma, p, geom, fams, elastic, check_boundary: bool = True) -> np.ndarray:
    """mu^k (6x6 Mandel) with 1/2 sigma:mu^k sigma = d e / d p_k."""
    pl = pliability(sigma, p, geom, fams, elastic)
    if check_boundary:
        _check_boundary(sigma, pl.screening, fams)
    return pl.mu_k[k]


def healed_pliability(k: int, sigma, p, geom, fams, elastic) -> np.ndarray:
    """mu~^k: volume part of mu^k spread over the diagonal for open cracks, 0 if closed."""
    return pliability(sigma, p, geom, fams, elastic).mu_healed[k]


def effective_pliability(sigma, p, geom, fams, elastic) -> np.ndarray:
    return pliability(sigma, p, geom, fams, elastic).mu


@dataclass(frozen=True)
class CrackSystem:
    """Convenience bundle of geometry, families and host elasticity."""

    geometry: CrackGeometry
    families: tuple
    elastic: IsotropicElastic = field(default_factory=lambda: IsotropicElastic(1.0, 0.25))

    def solve(self, sigma, p) -> ScreeningSolution:
        return solve_effective_stress(sigma, p, self.geometry, self.families)

    def energy(self, sigma, p) -> float:
        return energy_density(sigma, p, self.geometry, self.families, self.elastic)

    def pliability(self, sigma, p) -> Pliability:
        return pliability(sigma, p, self.geometry, self.families, self.elastic)
