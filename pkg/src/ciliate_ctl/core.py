"""Numeric primitives and validated model containers.

State layout used throughout the package:

    z    = (xi, omega)        linear and angular velocity in the body frame
    zeta                      position of the body in the fixed frame
    R                         orientation, R in SO(3)

and the drift of the velocity equation is  A z + E(z)  with

    E(z) = (xi x omega, J^{-1} ((J omega) x omega)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOL, Tolerances


class ValidationError(ValueError):
    """Raised when a container violates one of its invariants."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def _frozen(a, shape=None, name="array") -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"{name} shape", f"expected {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} finite", "NaN or Inf entry")
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# SO(3) helpers
# --------------------------------------------------------------------------

def skew(w) -> np.ndarray:
    """Matrix S(w) with S(w) v = w x v."""
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(S) -> np.ndarray:
    """Inverse of skew; uses the antisymmetric part of S."""
    S = np.asarray(S, dtype=float)
    return 0.5 * np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]])


def expm_so3(w) -> np.ndarray:
    """exp(S(w)) via Rodrigues' formula."""
    w = np.asarray(w, dtype=float)
    th2 = float(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = skew(w)
    if th2 < 1e-12:
        # Taylor coefficients to O(th^6)
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R) -> np.ndarray:
    """Rotation vector w with expm_so3(w) = R, |w| <= pi."""
    R = np.asarray(R, dtype=float)
    # vee(R - R^T) = 2 sin(th) * axis; atan2 stays accurate near 0 and pi
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * float(np.linalg.norm(v))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    th = math.atan2(s, c)
    if th < 1e-4:
        return 0.5 * v * (1.0 + th * th / 6.0)
    if np.pi - th < 1e-3:
        # near pi: axis from the symmetric part R + R^T = 2 cos(th) Id + 2 (1 - cos(th)) a a^T
        M = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(max(M[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if axis @ v < 0:
            axis = -axis
        return th * axis
    return th / (2.0 * s) * v


def orthogonality_defect(R) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def check_rotation(R, tol: float = DEFAULT_TOL.orth) -> np.ndarray:
    """Validate and freeze a rotation matrix."""
    R = _frozen(R, (3, 3), "R")
    d = orthogonality_defect(R)
    if d > tol:
        raise ValidationError("R^T R = Id", f"defect {d:.3e} > {tol:.1e}")
    if np.linalg.det(R) <= 0:
        raise ValidationError("det R > 0")
    return R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


# --------------------------------------------------------------------------
# Linear-algebra decisions shared by the criteria
# --------------------------------------------------------------------------

def numeric_rank(M, tol: float = DEFAULT_TOL.rank) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s / s[0] > tol))


def hadamard_bound(M) -> float:
    """Product of column norms, an upper bound on |det M|."""
    return float(np.prod(np.linalg.norm(np.asarray(M, dtype=float), axis=0)))


def det_nonzero(M, tol: float = DEFAULT_TOL.det, scale: float | None = None) -> tuple[bool, float]:
    d = float(np.linalg.det(M))
    ref = hadamard_bound(M) if scale is None else scale
    return (abs(d) > tol * ref and ref > 0.0), d


# --------------------------------------------------------------------------
# Inner product and the quadratic drift term
# --------------------------------------------------------------------------

def j_metric(mbar: float, J) -> np.ndarray:
    """Gram matrix blockdiag(mbar Id, J) of the kinetic-energy inner product."""
    M = np.zeros((6, 6))
    M[:3, :3] = mbar * np.eye(3)
    M[3:, 3:] = np.asarray(J, dtype=float)
    return M


def j_inner(a, b, model: "SwimmerModel") -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(model.mbar * (a[:3] @ b[:3]) + a[3:] @ model.J @ b[3:])


def _check_invertible(J) -> None:
    if np.linalg.cond(J) > 1e12:
        raise np.linalg.LinAlgError("inertia matrix J is singular")


def drift_E(z, J) -> np.ndarray:
    """Quadratic part of the velocity dynamics, E(z)."""
    if isinstance(z, BodyState):
        xi, om = z.xi, z.omega
    else:
        z = np.asarray(z, dtype=float)
        xi, om = z[:3], z[3:]
    J = np.asarray(J, dtype=float)
    _check_invertible(J)
    return np.concatenate([np.cross(xi, om), np.linalg.solve(J, np.cross(J @ om, om))])


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SwimmerModel:
    """The triple (A, B, J) and the mass mbar of the organism.

    ``dissipative=False`` skips the check that A is self-adjoint and negative
    definite for the J-inner product; used for samples of the larger
    parameter space where only J is constrained.
    """

    A: np.ndarray
    B: np.ndarray
    J: np.ndarray
    mbar: float = 1.0
    dissipative: bool = True
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False, repr=False)

    def __post_init__(self):
        A = _frozen(self.A, (6, 6), "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(6, 1)
        if B.ndim != 2 or B.shape[0] != 6 or B.shape[1] < 1:
            raise ValidationError("B is 6 x m with m >= 1", f"got shape {B.shape}")
        B = _frozen(B, None, "B")
        J = _frozen(self.J, (3, 3), "J")
        mbar = float(self.mbar)
        if not (np.isfinite(mbar) and mbar > 0):
            raise ValidationError("mbar > 0", f"mbar = {mbar}")
        scale = max(1.0, float(np.abs(J).max()))
        if np.abs(J - J.T).max() > 1e-12 * scale:
            raise ValidationError("J symmetric")
        if np.linalg.eigvalsh(J).min() <= 0:
            raise ValidationError("J positive definite")
        if self.dissipative:
            MA = j_metric(mbar, J) @ A
            na = max(float(np.linalg.norm(MA, 2)), 1e-300)
            if np.abs(MA - MA.T).max() > 1e-9 * na:
                raise ValidationError("A self-adjoint w.r.t. <.,.>_J",
                                      f"asymmetry {np.abs(MA - MA.T).max():.3e}")
            top = float(np.linalg.eigvalsh(0.5 * (MA + MA.T)).max())
            if not top < -1e-12 * na:
                raise ValidationError("A negative definite w.r.t. <.,.>_J",
                                      f"max eigenvalue {top:.3e}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "mbar", mbar)

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def B1(self) -> np.ndarray:
        return self.B[:3]

    @property
    def B2(self) -> np.ndarray:
        return self.B[3:]

    @property
    def A11(self):
        return self.A[:3, :3]

    @property
    def A12(self):
        return self.A[:3, 3:]

    @property
    def A21(self):
        return self.A[3:, :3]

    @property
    def A22(self):
        return self.A[3:, 3:]

    @property
    def Jinv(self) -> np.ndarray:
        return np.linalg.inv(self.J)

    def velocity_rhs(self, z, u) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.A @ z + drift_E(z, self.J) + self.B @ np.asarray(u, dtype=float)

    def with_B(self, B) -> "SwimmerModel":
        return SwimmerModel(self.A, B, self.J, self.mbar, self.dissipative, self.tol)

    def spherical(self, rel: float = 1e-9) -> "SphericalModel | None":
        """Return the spherical view of this model, or None.

        The model counts as spherical when A = diag(-rho1 Id, -rho2 Id) with
        rho2 > rho1 > 0 and J is a multiple of Id, to ``rel`` relative accuracy.
        """
        A, J = self.A, self.J
        na = np.abs(A).max()
        rho1 = -float(np.mean(np.diag(A)[:3]))
        rho2 = -float(np.mean(np.diag(A)[3:]))
        target = np.diag([-rho1] * 3 + [-rho2] * 3)
        if np.abs(A - target).max() > rel * na:
            return None
        j = float(np.trace(J)) / 3.0
        if np.abs(J - j * np.eye(3)).max() > rel * abs(j):
            return None
        if not rho2 > rho1 > 0:
            return None
        return SphericalModel(rho1, rho2, self.B1, self.B2)


@dataclass(frozen=True)
class SphericalModel:
    """Homogeneous ball: A = diag(-rho1 Id, -rho2 Id), J proportional to Id."""

    rho1: float
    rho2: float
    B1: np.ndarray
    B2: np.ndarray

    def __post_init__(self):
        rho1, rho2 = float(self.rho1), float(self.rho2)
        if not (rho2 > rho1 > 0):
            raise ValidationError("rho2 > rho1 > 0", f"rho1={rho1}, rho2={rho2}")
        B1 = np.asarray(self.B1, dtype=float)
        B2 = np.asarray(self.B2, dtype=float)
        if B1.ndim == 1:
            B1 = B1.reshape(3, 1)
        if B2.ndim == 1:
            B2 = B2.reshape(3, 1)
        if B1.shape != B2.shape or B1.shape[0] != 3 or B1.shape[1] < 1:
            raise ValidationError("B1, B2 are 3 x m", f"got {B1.shape} and {B2.shape}")
        object.__setattr__(self, "rho1", rho1)
        object.__setattr__(self, "rho2", rho2)
        object.__setattr__(self, "B1", _frozen(B1, None, "B1"))
        object.__setattr__(self, "B2", _frozen(B2, None, "B2"))

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def A(self) -> np.ndarray:
        return np.diag([-self.rho1] * 3 + [-self.rho2] * 3)

    def to_swimmer(self, mbar: float = 1.0, inertia: float = 1.0) -> SwimmerModel:
        return SwimmerModel(self.A, np.vstack([self.B1, self.B2]),
                            inertia * np.eye(3), mbar)


@dataclass(frozen=True)
class KinematicModel:
    """Equal-density reduction: zeta' = R L1 u, R' = R S(L2 u)."""

    L1: np.ndarray
    L2: np.ndarray

    def __post_init__(self):
        L1 = np.asarray(self.L1, dtype=float)
        L2 = np.asarray(self.L2, dtype=float)
        if L1.ndim == 1:
            L1 = L1.reshape(3, 1)
        if L2.ndim == 1:
            L2 = L2.reshape(3, 1)
        if L1.shape != L2.shape or L1.shape[0] != 3 or L1.shape[1] < 1:
            raise ValidationError("L1, L2 are 3 x m", f"got {L1.shape} and {L2.shape}")
        object.__setattr__(self, "L1", _frozen(L1, None, "L1"))
        object.__setattr__(self, "L2", _frozen(L2, None, "L2"))

    @classmethod
    def from_L(cls, L) -> "KinematicModel":
        L = np.asarray(L, dtype=float)
        return cls(L[:3], L[3:])

    @property
    def L(self) -> np.ndarray:
        return np.vstack([self.L1, self.L2])

    @property
    def m(self) -> int:
        return self.L1.shape[1]


# --------------------------------------------------------------------------
# States
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BodyState:
    xi: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _frozen(self.xi, (3,), "xi"))
        object.__setattr__(self, "omega", _frozen(self.omega, (3,), "omega"))

    @classmethod
    def from_z(cls, z) -> "BodyState":
        z = np.asarray(z, dtype=float)
        return cls(z[:3], z[3:])

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.xi, self.omega])


@dataclass(frozen=True)
class FullState:
    xi: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _frozen(self.xi, (3,), "xi"))
        object.__setattr__(self, "omega", _frozen(self.omega, (3,), "omega"))
        object.__setattr__(self, "zeta", _frozen(self.zeta, (3,), "zeta"))
        object.__setattr__(self, "R", check_rotation(self.R))

    @classmethod
    def rest(cls) -> "FullState":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.eye(3))

    @classmethod
    def from_parts(cls, z, zeta=None, R=None) -> "FullState":
        z = np.asarray(z, dtype=float)
        return cls(z[:3], z[3:], np.zeros(3) if zeta is None else zeta,
                   np.eye(3) if R is None else R)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.xi, self.omega])

    @property
    def body(self) -> BodyState:
        return BodyState(self.xi, self.omega)
