"""Symmetric second-order tensors, rotations and 6x6 compliance algebra.

Convention used throughout the package: a symmetric tensor ``t`` is stored as
its six independent components in the order (11, 22, 33, 12, 23, 31).  For
linear algebra it is mapped to the orthonormal (Mandel) 6-vector

    m = (t11, t22, t33, sqrt2*t12, sqrt2*t23, sqrt2*t31)

so that the double inner product is ``a:b = m_a . m_b`` and a fourth-order
tensor acting on symmetric tensors is an ordinary 6x6 matrix.  Compliance and
stiffness are then plain matrix inverses of each other, with no factor-of-two
bookkeeping on shear slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegeneratePliabilityError, NonOrthogonalRotationError

SQRT2 = np.sqrt(2.0)
#: index pairs of the six stored components
COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0))
COMPONENT_NAMES = ("11", "22", "33", "12", "23", "31")
_MANDEL_SCALE = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])
#: Mandel vector of the identity tensor (also the trace functional)
IDENTITY_MANDEL = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class SymTensor2:
    """Symmetric 3x3 tensor stored by its upper triangle."""

    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float).reshape(6).copy()
        if not np.all(np.isfinite(c)):
            raise ValueError("tensor components must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    @classmethod
    def from_components(cls, c11=0.0, c22=0.0, c33=0.0, c12=0.0, c23=0.0, c31=0.0):
        return cls(np.array([c11, c22, c33, c12, c23, c31], dtype=float))

    @classmethod
    def from_matrix(cls, m) -> "SymTensor2":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise ValueError("matrix is not symmetric")
        s = 0.5 * (m + m.T)
        return cls(np.array([s[i, j] for i, j in COMPONENTS]))

    @classmethod
    def from_mandel(cls, v) -> "SymTensor2":
        return cls(np.asarray(v, dtype=float) / _MANDEL_SCALE)

    @classmethod
    def zeros(cls) -> "SymTensor2":
        return cls(np.zeros(6))

    @classmethod
    def identity(cls) -> "SymTensor2":
        return cls(IDENTITY_MANDEL)

    @property
    def matrix(self) -> np.ndarray:
        m = np.empty((3, 3))
        for value, (i, j) in zip(self.components, COMPONENTS):
            m[i, j] = m[j, i] = value
        return m

    @property
    def mandel(self) -> np.ndarray:
        return self.components * _MANDEL_SCALE

    @property
    def trace(self) -> float:
        return float(self.components[:3].sum())

    def norm(self) -> float:
        """Frobenius norm, sqrt(t:t)."""
        return float(np.linalg.norm(self.mandel))

    def __add__(self, other):
        return SymTensor2(self.components + as_symtensor(other).components)

    def __sub__(self, other):
        return SymTensor2(self.components - as_symtensor(other).components)

    def __neg__(self):
        return SymTensor2(-self.components)

    def __mul__(self, scalar):
        return SymTensor2(self.components * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SymTensor2(self.components / float(scalar))

    def __eq__(self, other):
        if not isinstance(other, SymTensor2):
            return NotImplemented
        return bool(np.array_equal(self.components, other.components))

    def allclose(self, other, rtol=1e-12, atol=1e-14) -> bool:
        return bool(np.allclose(self.components, as_symtensor(other).components, rtol=rtol, atol=atol))

    def __repr__(self):
        body = ", ".join(f"{n}={v:.6g}" for n, v in zip(COMPONENT_NAMES, self.components))
        return f"SymTensor2({body})"


TensorLike = Union[SymTensor2, np.ndarray]


def as_symtensor(t) -> SymTensor2:
    """Coerce a SymTensor2, a 3x3 matrix or a Mandel 6-vector."""
    if isinstance(t, SymTensor2):
        return t
    a = np.asarray(t, dtype=float)
    if a.shape == (3, 3):
        return SymTensor2.from_matrix(a)
    if a.shape == (6,):
        return SymTensor2.from_mandel(a)
    raise ValueError(f"cannot interpret array of shape {a.shape} as a symmetric tensor")


def as_mandel(t) -> np.ndarray:
    """Mandel 6-vector of a SymTensor2, 3x3 matrix, or (already) Mandel vector."""
    if isinstance(t, SymTensor2):
        return t.mandel
    a = np.asarray(t, dtype=float)
    if a.shape == (6,):
        return a
    return as_symtensor(a).mandel


@dataclass(frozen=True, eq=False)
class Rotation:
    """Proper orthogonal 3x3 matrix A mapping lab coordinates to a local frame.

    Rows of ``matrix`` are the local axes expressed in lab coordinates, so the
    local components of a tensor are ``A t A^T``.
    """

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float).reshape(3, 3).copy()
        residual = np.abs(a.T @ a - np.eye(3)).max()
        if residual > 1e-9:
            raise NonOrthogonalRotationError(f"orthogonality residual {residual:.3e} exceeds 1e-9")
        if np.linalg.det(a) < 0:
            raise NonOrthogonalRotationError("rotation has determinant -1 (improper)")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def about_axis(cls, axis, angle: float) -> "Rotation":
        """Active rotation by ``angle`` (radians) about ``axis`` (Rodrigues).

        The returned frame matrix is the transpose of the active rotation, i.e.
        a tensor rotated by the active map has the returned-frame components
        of the original one.
        """
        k = np.asarray(axis, dtype=float)
        k = k / np.linalg.norm(k)
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        r = np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx
        return cls(r.T)

    @classmethod
    def from_normal(cls, normal) -> "Rotation":
        """Frame whose first axis is the unit vector along ``normal``."""
        n = np.asarray(normal, dtype=float)
        length = np.linalg.norm(n)
        if not np.isfinite(length) or length < 1e-12:
            raise ValueError("crack normal must be a nonzero finite vector")
        n = n / length
        # complete the basis with the lab axis least aligned with n
        helper = np.eye(3)[np.argmin(np.abs(n))]
        t1 = helper - n * (helper @ n)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        return cls(np.vstack([n, t1, t2]))

    @classmethod
    def from_euler(cls, angles, convention: str = "ZXZ") -> "Rotation":
        """Frame from intrinsic Euler angles (radians); first row is the normal."""
        from scipy.spatial.transform import Rotation as _R

        return cls(_R.from_euler(convention, angles).as_matrix().T)

    @property
    def normal(self) -> np.ndarray:
        return self.matrix[0].copy()

    def mandel_matrix(self) -> np.ndarray:
        """6x6 orthogonal matrix R with mandel(A t A^T) = R @ mandel(t)."""
        out = np.empty((6, 6))
        for j in range(6):
            e = np.zeros(6)
            e[j] = 1.0
            m = self.matrix @ SymTensor2.from_mandel(e).matrix @ self.matrix.T
            out[:, j] = SymTensor2.from_matrix(0.5 * (m + m.T)).mandel
        return out


def rotate_tensor(t: TensorLike, rotation: Rotation | np.ndarray) -> SymTensor2:
    """Components of ``t`` in the frame of ``rotation``: (A t A^T)_kl."""
    if not isinstance(rotation, Rotation):
        rotation = Rotation(rotation)
    t = as_symtensor(t)
    m = rotation.matrix @ t.matrix @ rotation.matrix.T
    return SymTensor2.from_matrix(0.5 * (m + m.T))


def double_dot(a: TensorLike, b: TensorLike) -> float:
    """Full index sum a_ij b_ij (off-diagonal terms counted twice)."""
    return float(as_mandel(a) @ as_mandel(b))


def isotropic_compliance(E: float, nu: float, full_isotropic_energy: bool = False) -> np.ndarray:
    """Mandel compliance of the uncracked host.

    By default this reproduces the energy density with squared terms only,
    (1/2E)(s11^2+s22^2+s33^2) + ((1+nu)/E)(s12^2+s23^2+s31^2).  With
    ``full_isotropic_energy`` the Poisson cross terms -(nu/E)(s11 s22 + ...)
    of standard isotropic elasticity are added.
    """
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {nu}")
    mu = np.diag([1.0 / E] * 3 + [(1.0 + nu) / E] * 3)
    if full_isotropic_energy:
        for i in range(3):
            for j in range(3):
                if i != j:
                    mu[i, j] = -nu / E
    return mu


def isotropic_energy_density(s: TensorLike, E: float, nu: float, full_isotropic_energy: bool = False) -> float:
    """Elastic energy density of the homogeneous isotropic host under stress ``s``."""
    m = as_mandel(s)
    return 0.5 * float(m @ isotropic_compliance(E, nu, full_isotropic_energy) @ m)


def invert_compliance(mu: np.ndarray, max_condition: float = 1e12) -> np.ndarray:
    """Stiffness (6x6) from compliance; raises on (near-)singular input."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (6, 6):
        raise ValueError(f"expected a 6x6 matrix, got {mu.shape}")
    cond = np.linalg.cond(mu)
    if not np.isfinite(cond) or cond >= max_condition:
        raise DegeneratePliabilityError(f"degenerate pliability: condition number {cond:.3e}")
    lam = np.linalg.inv(mu)
    return 0.5 * (lam + lam.T) if np.allclose(mu, mu.T, rtol=1e-12, atol=0) else lam
