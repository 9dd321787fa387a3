"""Model matrices for a homogeneous spherical swimmer.

The body is the ball |y| < a in a fluid with viscosity mu. The exterior
Stokes problems with rigid boundary data have classical closed forms:

    translation with velocity e_i:  traction on the body, inner normal,
                                    g_i(y) = 3 mu / (2a) e_i
    rotation with velocity e_i:     G_i(y) = 3 mu / a (e_i x y)

("inner" normal points from the fluid into the body, which is what makes
the resistance blocks negative). Every integral over the sphere is done
with a product rule: Gauss-Legendre in cos(theta) times the trapezoid
rule in phi, which is exact for polynomial integrands of moderate degree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import KinematicModel, SwimmerModel

DEFAULT_ORDER = 24
MAX_SURFACE_DEGREE = 4


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SphereSpec:
    a: float = 1.0
    mu: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        for name in ("a", "mu", "delta"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"sphere parameter {name} must be > 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def mass(self) -> float:
        return self.delta * 4.0 / 3.0 * np.pi * self.a ** 3

    @property
    def inertia(self) -> np.ndarray:
        return 0.4 * self.mass * self.a ** 2 * np.eye(3)


@dataclass(frozen=True)
class SurfaceField:
    """Vector field on the sphere with polynomial components in (y1, y2, y3).

    ``comps[c]`` maps an exponent triple (i, j, k) to the coefficient of
    y1^i y2^j y3^k in component c.
    """

    comps: tuple = field(default_factory=lambda: ({}, {}, {}))

    def __post_init__(self):
        if len(self.comps) != 3:
            raise ValueError("a surface field has 3 components")
        clean = []
        for d in self.comps:
            out = {}
            for e, c in dict(d).items():
                e = tuple(int(x) for x in e)
                if len(e) != 3 or min(e) < 0:
                    raise ValueError(f"bad exponent {e}")
                if sum(e) > MAX_SURFACE_DEGREE:
                    raise ValueError(f"degree {sum(e)} exceeds bound {MAX_SURFACE_DEGREE}")
                c = float(c)
                if not np.isfinite(c):
                    raise ValueError("non-finite coefficient")
                if c != 0.0:
                    out[e] = out.get(e, 0.0) + c
            clean.append(out)
        object.__setattr__(self, "comps", tuple(clean))

    @classmethod
    def constant(cls, v) -> "SurfaceField":
        return cls(tuple({(0, 0, 0): float(x)} for x in v))

    @classmethod
    def rotation(cls, w) -> "SurfaceField":
        """y -> w x y."""
        w = np.asarray(w, dtype=float)
        E = np.eye(3, dtype=int)
        M = np.cross(w[:, None], np.eye(3), axis=0)   # column k is w x e_k
        return cls(tuple({tuple(E[k]): M[c, k] for k in range(3) if M[c, k] != 0.0}
                         for c in range(3)))

    def scaled(self, s: float) -> "SurfaceField":
        return SurfaceField(tuple({e: s * c for e, c in d.items()} for d in self.comps))

    def degree(self) -> int:
        return max((sum(e) for d in self.comps for e in d), default=0)

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        out = np.zeros_like(Y, dtype=float)
        for c, d in enumerate(self.comps):
            for (i, j, k), coef in d.items():
                out[:, c] += coef * Y[:, 0] ** i * Y[:, 1] ** j * Y[:, 2] ** k
        return out

    def to_json(self) -> list:
        return [[{"exponents": list(e), "coef": c} for e, c in d.items()] for d in self.comps]

    @classmethod
    def from_json(cls, obj) -> "SurfaceField":
        if isinstance(obj, dict):
            obj = obj.get("components", obj)
        if len(obj) != 3:
            raise ValueError("surface field needs 3 component lists")
        return cls(tuple({tuple(t["exponents"]): float(t["coef"]) for t in comp}
                         for comp in obj))


@dataclass(frozen=True)
class TractionBasis:
    """Tractions of the six rigid exterior problems on the sphere.

    ``g(i, Y)`` and ``G(i, Y)`` return N x 3 arrays at surface points Y.
    """

    spec: SphereSpec

    def g(self, i: int, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        out = np.zeros_like(Y, dtype=float)
        out[:, i] = 1.5 * self.spec.mu / self.spec.a
        return out

    def G(self, i: int, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        e = np.zeros(3)
        e[i] = 1.0
        return 3.0 * self.spec.mu / self.spec.a * np.cross(e[None, :], Y)


def sphere_tractions(spec: SphereSpec) -> TractionBasis:
    return TractionBasis(spec)


def sphere_quadrature(a: float, order: int = DEFAULT_ORDER):
    """Nodes (N x 3) and weights (N,) on |y| = a; order x 2*order points."""
    t, wt = np.polynomial.legendre.leggauss(order)
    nphi = 2 * order
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    T, PHI = np.meshgrid(t, phi, indexing="ij")
    st = np.sqrt(1.0 - T ** 2)
    Y = a * np.stack([st * np.cos(PHI), st * np.sin(PHI), T], axis=-1).reshape(-1, 3)
    W = (a * a * np.outer(wt, np.full(nphi, 2.0 * np.pi / nphi))).reshape(-1)
    return Y, W


def resistance_blocks(spec: SphereSpec, order: int = DEFAULT_ORDER) -> dict:
    """Theta1, Theta2, Upsilon1, Upsilon2 by quadrature of the traction basis."""
    tb = sphere_tractions(spec)
    Y, W = sphere_quadrature(spec.a, order)
    out = {k: np.zeros((3, 3)) for k in ("Theta1", "Theta2", "Upsilon1", "Upsilon2")}
    for i in range(3):
        g = tb.g(i, Y)
        G = tb.G(i, Y)
        out["Theta1"][i] = -(W @ g)
        out["Theta2"][i] = -(W @ np.cross(Y, g))
        out["Upsilon1"][i] = -(W @ G)
        out["Upsilon2"][i] = -(W @ np.cross(Y, G))
    return out


def coupling_blocks(spec: SphereSpec, psi: list[SurfaceField],
                    order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """kappa_ij = -int g_i . psi_j and K_ij = -int G_i . psi_j."""
    tb = sphere_tractions(spec)
    Y, W = sphere_quadrature(spec.a, order)
    m = len(psi)
    kappa = np.zeros((3, m))
    K = np.zeros((3, m))
    vals = [p(Y) for p in psi]
    for i in range(3):
        g = tb.g(i, Y)
        G = tb.G(i, Y)
        for j, v in enumerate(vals):
            kappa[i, j] = -(W @ np.sum(g * v, axis=1))
            K[i, j] = -(W @ np.sum(G * v, axis=1))
    return kappa, K


def _converged(f, order: int, tol: float):
    """Evaluate f(order) and f(2 order); raise if any entry moves too much."""
    lo = f(order)
    hi = f(2 * order)
    # one scale for all blocks: symmetric zero blocks only carry roundoff
    scale = max([float(np.abs(y).max()) for y in hi if y.size] + [1e-300])
    for k, (x, y) in enumerate(zip(lo, hi)):
        diff = float(np.abs(x - y).max()) if y.size else 0.0
        if diff > tol * scale:
            raise QuadratureError(
                f"quadrature not converged at order {order}: block {k} moved by "
                f"{diff:.3e} (relative {diff / scale:.3e} > {tol:.1e})")
    return hi


def _check_psi(psi):
    psi = list(psi)
    if not psi:
        raise ValueError("need at least one surface field")
    return psi


def build_matrices(spec: SphereSpec, psi, order: int = DEFAULT_ORDER,
                   tol: float = 1e-10) -> SwimmerModel:
    """SwimmerModel (A, B, J, mbar) for the ball and surface fields psi_j."""
    psi = _check_psi(psi)

    def blocks(n):
        r = resistance_blocks(spec, n)
        kap, K = coupling_blocks(spec, psi, n)
        return r["Theta1"], r["Theta2"], r["Upsilon1"], r["Upsilon2"], kap, K

    T1, T2, U1, U2, kap, K = _converged(blocks, order, tol)
    mbar = spec.mass
    J = spec.inertia
    Jinv = np.linalg.inv(J)
    A = np.block([[T1 / mbar, T2 / mbar], [Jinv @ U1, Jinv @ U2]])
    B = np.vstack([kap / mbar, Jinv @ K])
    return SwimmerModel(A, B, J, mbar)


def build_kinematic(spec: SphereSpec, psi, order: int = DEFAULT_ORDER,
                    tol: float = 1e-10) -> KinematicModel:
    """L = -(Theta1 Theta2; Upsilon1 Upsilon2)^{-1} (kappa; K)."""
    psi = _check_psi(psi)

    def blocks(n):
        r = resistance_blocks(spec, n)
        kap, K = coupling_blocks(spec, psi, n)
        grand = np.block([[r["Theta1"], r["Theta2"]], [r["Upsilon1"], r["Upsilon2"]]])
        return grand, np.vstack([kap, K])

    grand, coup = _converged(blocks, order, tol)
    if np.linalg.cond(grand) > 1e12:
        raise np.linalg.LinAlgError("grand resistance matrix is singular")
    return KinematicModel.from_L(-np.linalg.solve(grand, coup))


# --------------------------------------------------------------------------
# Sphere description files
# --------------------------------------------------------------------------

def parse_sphere(text: str) -> tuple[SphereSpec, list[SurfaceField]]:
    doc = json.loads(text)
    s = doc["sphere"]
    spec = SphereSpec(float(s["a"]), float(s["mu"]), float(s["delta"]))
    psi = [SurfaceField.from_json(p) for p in doc["psi"]]
    return spec, psi


def load_sphere(path) -> tuple[SphereSpec, list[SurfaceField]]:
    return parse_sphere(Path(path).read_text(encoding="utf-8"))


def dumps_sphere(spec: SphereSpec, psi) -> str:
    doc = {"sphere": {"a": spec.a, "mu": spec.mu, "delta": spec.delta},
           "psi": [p.to_json() for p in psi]}
    return json.dumps(doc, indent=1) + "\n"
