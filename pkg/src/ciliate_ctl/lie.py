"""Bracket calculus on the closed class of structured vector fields.

A structured field on R^6 x R^3 x SO(3) has the form

    X(z, zeta, R) = (P(z), R q(z), R S(r(z)))

with polynomial P (6 comps), q (3 comps) and r (3 comps). The class is
closed under the Lie bracket [X, Y] = (DY) X - (DX) Y:

    z:    DP_Y P_X - DP_X P_Y
    zeta: r_X x q_Y - r_Y x q_X + Dq_Y P_X - Dq_X P_Y
    R:    r_X x r_Y + Dr_Y P_X - Dr_X P_Y

Trivializing T(R^6 x R^3 x SO(3)) by left translation sends X to the
12-vector (P, q, r) evaluated at z, so ranks never depend on (zeta, R).

Internally a monomial z^e is keyed by the packed integer sum_k e_k 32^k,
which turns exponent addition into integer addition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOL
from .core import FullState, KinematicModel, SwimmerModel, skew
from .poly import DEFAULT_MAX_DEGREE, PRUNE_REL, DegreeOverflow, Poly

NV = 6
_BITS = 5
_MASK = (1 << _BITS) - 1
_SH = tuple(_BITS * k for k in range(NV))
_ONE = tuple(1 << s for s in _SH)


def pack(e) -> int:
    return sum(int(p) << s for p, s in zip(e, _SH))


def unpack(code: int) -> tuple:
    return tuple((code >> s) & _MASK for s in _SH)


def _deg(code: int) -> int:
    return sum((code >> s) & _MASK for s in _SH)


def _prune_comp(d: dict) -> dict:
    if not d:
        return d
    cut = PRUNE_REL * max(abs(c) for c in d.values())
    return {e: c for e, c in d.items() if abs(c) > cut}


def _prune_field(comps) -> tuple:
    """Per-polynomial pruning, then drop roundoff relative to the whole field."""
    comps = [_prune_comp(d) for d in comps]
    big = max((abs(c) for d in comps for c in d.values()), default=0.0)
    if big == 0.0:
        return tuple({} for _ in comps)
    cut = PRUNE_REL * big
    return tuple({e: c for e, c in d.items() if abs(c) > cut} for d in comps)


# --------------------------------------------------------------------------
# dict-level kernels (hot path)
# --------------------------------------------------------------------------

def _dir_acc(acc: dict, p: dict, P: tuple, sign: float) -> None:
    """acc += sign * (grad p) . P"""
    get = acc.get
    live = [(k, _SH[k], _ONE[k], P[k]) for k in range(NV) if P[k]]
    for e, c in p.items():
        for k, sh, one, Pk in live:
            ek = (e >> sh) & _MASK
            if not ek:
                continue
            f = e - one
            s = sign * c * ek
            for g, d in Pk.items():
                h = f + g
                acc[h] = get(h, 0.0) + s * d


def _mul_acc(acc: dict, a: dict, b: dict, sign: float) -> None:
    get = acc.get
    for ea, ca in a.items():
        s = sign * ca
        for eb, cb in b.items():
            h = ea + eb
            acc[h] = get(h, 0.0) + s * cb


def _cross_acc(acc, a, b, sign: float) -> None:
    """acc[i] += sign * (a x b)[i] for 3-sequences of polynomial dicts."""
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        if a[j] and b[k]:
            _mul_acc(acc[i], a[j], b[k], sign)
        if a[k] and b[j]:
            _mul_acc(acc[i], a[k], b[j], -sign)


# --------------------------------------------------------------------------
# Field types
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StructuredVF:
    """Field (P(z), R q(z), R S(r(z))); ``comps`` holds 12 packed term dicts."""

    comps: tuple
    label: str = "?"
    depth: int = 0          # number of nested bracket operations

    @classmethod
    def from_polys(cls, P, q, r, label="?", depth=0) -> "StructuredVF":
        def as_dict(p):
            if isinstance(p, Poly):
                return {pack(e): c for e, c in p.terms.items()}
            return {0: float(p)} if p else {}
        comps = tuple(as_dict(p) for p in list(P) + list(q) + list(r))
        if len(comps) != 12:
            raise ValueError("need 6 + 3 + 3 components")
        return cls(_prune_field(comps), label, depth)

    @classmethod
    def constant(cls, v1, v2, label="V") -> "StructuredVF":
        """The constant field (v1, v2, 0_6)."""
        vals = list(np.asarray(v1, float)) + list(np.asarray(v2, float))
        comps = tuple(({0: float(x)} if x != 0.0 else {}) for x in vals) + ({},) * 6
        return cls(comps, label, 0)

    def _polys(self, lo, hi):
        return tuple(Poly._raw({unpack(e): c for e, c in d.items()}, NV)
                     for d in self.comps[lo:hi])

    @property
    def P(self):
        return self._polys(0, 6)

    @property
    def q(self):
        return self._polys(6, 9)

    @property
    def r(self):
        return self._polys(9, 12)

    def is_zero(self) -> bool:
        return not any(self.comps)

    def degree(self) -> int:
        return max((_deg(e) for d in self.comps for e in d), default=-1)

    def n_terms(self) -> int:
        return sum(len(d) for d in self.comps)

    def evaluate(self, z, with_scale: bool = False):
        """Trivialized value (P(z), q(z), r(z)) in R^12.

        With ``with_scale`` also returns sum |c| |z^e|, the natural roundoff
        scale of the evaluation.
        """
        z = _point_z(z)
        pw = []
        for k in range(NV):
            row = [1.0]
            for _ in range(2 * DEFAULT_MAX_DEGREE + 1):
                row.append(row[-1] * z[k])
            pw.append(row)
        out = np.zeros(12)
        scale = 0.0
        for i, d in enumerate(self.comps):
            s = 0.0
            for e, c in d.items():
                t = c
                if e:
                    for k in range(NV):
                        ek = (e >> _SH[k]) & _MASK
                        if ek:
                            t *= pw[k][ek]
                s += t
                scale += abs(t)
            out[i] = s
        return (out, scale) if with_scale else out

    def evaluate_many(self, zs) -> tuple[np.ndarray, np.ndarray]:
        """Values at several points at once: (npts x 12 array, roundoff scales)."""
        Z = np.array([_point_z(z) for z in zs])
        codes, coefs, comp = [], [], []
        for i, d in enumerate(self.comps):
            for e, c in d.items():
                codes.append(e)
                coefs.append(c)
                comp.append(i)
        out = np.zeros((len(Z), 12))
        if not codes:
            return out, np.zeros(len(Z))
        E = np.array([unpack(e) for e in codes], dtype=float)
        mon = np.prod(np.where(E[None] == 0, 1.0, Z[:, None, :] ** E[None]), axis=2)
        T = mon * np.array(coefs)[None]
        comp = np.array(comp)
        for i in range(12):
            sel = comp == i
            if sel.any():
                out[:, i] = T[:, sel].sum(axis=1)
        return out, np.abs(T).sum(axis=1)

    def full_vector(self, state: FullState) -> tuple:
        """Untrivialized value (zdot, zetadot, Rdot) at a full state."""
        v = self.evaluate(state.z)
        R = state.R
        return v[:6], R @ v[6:9], R @ skew(v[9:])

    def coeff_items(self):
        for i, d in enumerate(self.comps):
            for e, c in d.items():
                yield (i, e), c

    def scaled(self, s: float) -> "StructuredVF":
        return StructuredVF(tuple({e: s * c for e, c in d.items()} for d in self.comps),
                            self.label, self.depth)

    def __add__(self, other: "StructuredVF") -> "StructuredVF":
        comps = []
        for a, b in zip(self.comps, other.comps):
            d = dict(a)
            for e, c in b.items():
                d[e] = d.get(e, 0.0) + c
            comps.append(d)
        return StructuredVF(_prune_field(comps), f"({self.label}+{other.label})",
                            max(self.depth, other.depth))

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def max_abs(self) -> float:
        return max((abs(c) for _, c in self.coeff_items()), default=0.0)

    def allclose(self, other: "StructuredVF", rtol: float = 1e-9) -> bool:
        """Coefficient-wise agreement relative to the larger field's max coefficient."""
        big = max(self.max_abs(), other.max_abs())
        if big == 0.0:
            return True
        da = dict(self.coeff_items())
        db = dict(other.coeff_items())
        return all(abs(da.get(k, 0.0) - db.get(k, 0.0)) <= rtol * big for k in set(da) | set(db))


@dataclass(frozen=True)
class ConstVF:
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        for name in ("v1", "v2"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (3,) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, a)

    def as_field(self, label="V") -> StructuredVF:
        return StructuredVF.constant(self.v1, self.v2, label)


def _point_z(p) -> np.ndarray:
    if isinstance(p, FullState):
        return p.z
    p = np.asarray(p, dtype=float).ravel()
    return p[:6]


# --------------------------------------------------------------------------
# The bracket
# --------------------------------------------------------------------------

def bracket(X: StructuredVF, Y: StructuredVF, max_degree: int = DEFAULT_MAX_DEGREE,
            label: str | None = None) -> StructuredVF:
    """[X, Y] = (DY) X - (DX) Y inside the structured class."""
    PX, PY = X.comps[:6], Y.comps[:6]
    out = [dict() for _ in range(12)]
    x_moves = any(PX)
    y_moves = any(PY)
    for i in range(12):
        if x_moves and Y.comps[i]:
            _dir_acc(out[i], Y.comps[i], PX, 1.0)
        if y_moves and X.comps[i]:
            _dir_acc(out[i], X.comps[i], PY, -1.0)
    qX, qY = X.comps[6:9], Y.comps[6:9]
    rX, rY = X.comps[9:], Y.comps[9:]
    acc_q, acc_r = out[6:9], out[9:]
    if any(rX) and any(qY):
        _cross_acc(acc_q, rX, qY, 1.0)
    if any(rY) and any(qX):
        _cross_acc(acc_q, rY, qX, -1.0)
    if any(rX) and any(rY):
        _cross_acc(acc_r, rX, rY, 1.0)
    depth = X.depth + Y.depth + 1
    res = StructuredVF(_prune_field(out), label or f"[{X.label},{Y.label}]", depth)
    deg = res.degree()
    if deg > max_degree:
        raise DegreeOverflow(
            f"bracket {res.label} at depth {depth} has degree {deg} > bound {max_degree}")
    return res


# --------------------------------------------------------------------------
# Fields of the swimmer system
# --------------------------------------------------------------------------

def _add_quad(d: dict, a: int, b: int, c: float) -> None:
    e = _ONE[a] + _ONE[b]
    d[e] = d.get(e, 0.0) + c


def drift_field(model: SwimmerModel) -> StructuredVF:
    """X0 = (Az + E(z), R xi, R S(omega))."""
    A = model.A
    J = model.J
    Jinv = model.Jinv
    P = [dict() for _ in range(6)]
    for i in range(6):
        for k in range(6):
            if A[i, k] != 0.0:
                P[i][_ONE[k]] = float(A[i, k])
    # xi x omega
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        _add_quad(P[i], j, 3 + k, 1.0)
        _add_quad(P[i], k, 3 + j, -1.0)
    # (J w) x w: component i is sum_{b,c} C[i,b,c] w_b w_c
    C = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for b in range(3):
            C[i, b, k] += J[j, b]
            C[i, b, j] -= J[k, b]
    Q = np.einsum("ia,abc->ibc", Jinv, C)
    for i in range(3):
        for b in range(3):
            for c in range(3):
                if Q[i, b, c] != 0.0:
                    _add_quad(P[3 + i], 3 + b, 3 + c, float(Q[i, b, c]))
    q = [{_ONE[k]: 1.0} for k in range(3)]
    r = [{_ONE[3 + k]: 1.0} for k in range(3)]
    return StructuredVF(_prune_field(P + q + r), "X0", 0)


def control_fields(model: SwimmerModel) -> list[StructuredVF]:
    B = model.B
    return [StructuredVF.constant(B[:3, j], B[3:, j], f"X{j + 1}") for j in range(model.m)]


def kinematic_fields_structured(L: KinematicModel) -> list[StructuredVF]:
    """(R L1 e_j, R S(L2 e_j)) embedded in the structured class (P = 0)."""
    out = []
    for j in range(L.m):
        comps = [dict() for _ in range(6)]
        for v in (L.L1[:, j], L.L2[:, j]):
            comps += [({0: float(x)} if x != 0.0 else {}) for x in v]
        out.append(StructuredVF(tuple(comps), f"X{j + 1}", 0))
    return out


def bracket_cvf(model, V: ConstVF, W: ConstVF) -> ConstVF:
    """Closed form of [[X0, V], W] for constant V, W.

    Returns (v1 x w2 + w1 x v2, J^{-1}(J w2 x v2 + J v2 x w2)); the field
    has zero (zeta, R) part and does not depend on A. ``model`` is a
    SwimmerModel or the inertia matrix J itself.
    """
    J = model.J if isinstance(model, SwimmerModel) else np.asarray(model, dtype=float)
    if np.linalg.cond(J) > 1e12:
        raise np.linalg.LinAlgError("inertia matrix J is singular")
    v1, v2, w1, w2 = V.v1, V.v2, W.v1, W.v2
    first = np.cross(v1, w2) + np.cross(w1, v2)
    second = np.linalg.solve(J, np.cross(J @ w2, v2) + np.cross(J @ v2, w2))
    return ConstVF(first, second)


# --------------------------------------------------------------------------
# Rank of a family of vectors
# --------------------------------------------------------------------------

def normalized_rank(vectors, tol: float = DEFAULT_TOL.rank, scales=None,
                    zero_rel: float = 1e-12) -> int:
    """SVD rank of column-normalized vectors, sigma_k / sigma_1 > tol.

    Each vector is a value of a different field, and fields from deep brackets
    differ in size by many orders of magnitude; scaling every column to unit
    length makes the decision independent of that. A vector is treated as zero
    when its norm is below ``zero_rel`` times its roundoff scale.
    """
    M = _normalized(vectors, scales, zero_rel)
    if M.shape[1] == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s / s[0] > tol))


def _normalized(vectors, scales=None, zero_rel=1e-12) -> np.ndarray:
    V = [np.asarray(v, dtype=float) for v in vectors]
    cols = []
    for i, v in enumerate(V):
        n = float(np.linalg.norm(v))
        ref = n if scales is None else max(scales[i], n)
        if n > zero_rel * ref and n > 0.0:
            cols.append(v / n)
    if not cols:
        dim = V[0].shape[0] if V else 0
        return np.zeros((dim, 0))
    return np.array(cols).T


def greedy_pivots(vectors, tol: float = DEFAULT_TOL.rank, scales=None,
                  zero_rel: float = 1e-12) -> list[int]:
    """Indices of vectors that each add a new direction, in order."""
    Q: list[np.ndarray] = []
    out = []
    for i, v in enumerate(vectors):
        v = np.asarray(v, dtype=float)
        n0 = float(np.linalg.norm(v))
        ref = n0 if scales is None else max(scales[i], n0)
        if not (n0 > zero_rel * ref and n0 > 0.0):
            continue
        w = v / n0
        for _ in range(2):
            for qv in Q:
                w = w - (qv @ w) * qv
        n = float(np.linalg.norm(w))
        if n > tol:
            Q.append(w / n)
            out.append(i)
    return out


# --------------------------------------------------------------------------
# Filtration
# --------------------------------------------------------------------------

@dataclass
class FieldRow:
    depth: int
    label: str
    values: list          # one trivialized vector per point
    pivot: bool = False


@dataclass
class RankReport:
    rank: int                       # minimum rank over the points
    ranks: list                     # per point
    dim: int
    depth_reached: int
    pivots: list                    # labels of pivot fields at the first point
    rows: list = field(default_factory=list)
    n_fields: int = 0

    @property
    def full(self) -> bool:
        return self.rank == self.dim


def _norm_key(X: StructuredVF, digits: int = 9):
    items = sorted(X.coeff_items())
    big = max(abs(c) for _, c in items)
    s = 1.0 / big if items[0][1] > 0 else -1.0 / big
    return frozenset((k, round(c * s, digits)) for k, c in items)


class _Span:
    """Incremental Gram-Schmidt on coefficient vectors (dense, growing)."""

    def __init__(self, tol: float = 1e-9):
        self.index: dict = {}
        self.Q = np.zeros((0, 0))
        self.tol = tol

    def add(self, X: StructuredVF) -> bool:
        items = list(X.coeff_items())
        for k, _ in items:
            if k not in self.index:
                self.index[k] = len(self.index)
        n = len(self.index)
        if self.Q.shape[1] < n:
            self.Q = np.pad(self.Q, ((0, 0), (0, n - self.Q.shape[1])))
        x = np.zeros(n)
        for k, c in items:
            x[self.index[k]] = c
        n0 = np.linalg.norm(x)
        if n0 == 0.0:
            return False
        x /= n0
        if self.Q.shape[0]:
            for _ in range(2):
                x -= self.Q.T @ (self.Q @ x)
        nr = np.linalg.norm(x)
        if nr <= self.tol:
            return False
        self.Q = np.vstack([self.Q, x / nr])
        return True


def filtration(generators: list[StructuredVF], points: list, depth: int,
               dim: int = 12, tol_rank: float = DEFAULT_TOL.rank,
               max_degree: int = DEFAULT_MAX_DEGREE, span_prune: bool = True,
               keep_rows: bool = False, early_stop: bool = True) -> RankReport:
    """Left-normed bracket filtration [..[[g_a, g_b], g_c] ..] up to ``depth``.

    Depth counts nested bracket operations: generators have depth 0 and a
    depth-d filtration contains left-normed brackets of up to d + 1 fields.

    Fields equal (up to scale) to an earlier one, or in the constant-coefficient
    span of earlier ones, are dropped; this does not change the span of the
    filtration because [., g] is linear.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    zs = [_point_z(p) for p in points]
    seen = set()
    span = _Span()
    kept: list[StructuredVF] = []
    vals: list[list] = [[] for _ in zs]
    scales: list[list] = [[] for _ in zs]
    rows = []

    def accept(X: StructuredVF) -> bool:
        if X.is_zero():
            return False
        key = _norm_key(X)
        if key in seen:
            return False
        seen.add(key)
        if span_prune and not span.add(X):
            return False
        kept.append(X)
        V, S = X.evaluate_many(zs)
        here = list(V)
        for i in range(len(zs)):
            vals[i].append(V[i])
            scales[i].append(S[i])
        if keep_rows:
            rows.append(FieldRow(X.depth, X.label, here))
        return True

    def ranks():
        return [normalized_rank(v, tol_rank, s) if v else 0 for v, s in zip(vals, scales)]

    gens = [g for g in generators if not g.is_zero()]
    level = [g for g in gens if accept(g)]
    reached = 0
    rk = ranks()
    for d in range(1, depth + 1):
        if early_stop and rk and min(rk) == dim:
            break
        nxt = []
        for Y in level:
            for g in gens:
                if Y is g:
                    continue
                try:
                    Z = bracket(Y, g, max_degree)
                except DegreeOverflow as exc:
                    raise DegreeOverflow(f"filtration depth {d}: {exc}") from None
                Z = StructuredVF(Z.comps, Z.label, d)
                if accept(Z):
                    nxt.append(Z)
        reached = d
        rk = ranks()
        if not nxt:
            break
        level = nxt
    piv = []
    if vals and vals[0]:
        idx = greedy_pivots(vals[0], tol_rank, scales[0])
        piv = [kept[i].label for i in idx]
        if keep_rows:
            for i in idx:
                rows[i].pivot = True
    return RankReport(min(rk) if rk else 0, rk, dim, reached, piv, rows, len(kept))


def lie_rank(model: SwimmerModel, point, depth: int = 6, tol_rank: float = DEFAULT_TOL.rank,
             keep_rows: bool = False, max_degree: int = DEFAULT_MAX_DEGREE) -> RankReport:
    """Rank of the Lie algebra generated by X0, X1..Xm at one or more points."""
    pts = list(point) if isinstance(point, (list, tuple)) else [point]
    gens = [drift_field(model)] + control_fields(model)
    return filtration(gens, pts, depth, 12, tol_rank, max_degree, keep_rows=keep_rows)


# --------------------------------------------------------------------------
# Kinematic (driftless, left-invariant) system on R^3 x SO(3)
# --------------------------------------------------------------------------

def kinematic_bracket(X, Y) -> np.ndarray:
    """[(b1,c1),(b2,c2)] = (c1 x b2 - c2 x b1, c1 x c2) for left-invariant fields."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return np.concatenate([np.cross(X[3:], Y[:3]) - np.cross(Y[3:], X[:3]),
                           np.cross(X[3:], Y[3:])])


def kinematic_lie_rank(L: KinematicModel, point=None, depth: int = 6,
                       tol_rank: float = DEFAULT_TOL.rank, labels: bool = False):
    """Rank of Lie{(R L1 e_j, R S(L2 e_j))} on R^3 x SO(3).

    The fields are left-invariant, so the trivialized rank is the same at
    every point; ``point`` is accepted for interface symmetry only.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    gens = [(np.concatenate([L.L1[:, j], L.L2[:, j]]), f"X{j + 1}") for j in range(L.m)]
    scale = max([float(np.linalg.norm(v)) for v, _ in gens] + [0.0])
    gens = [(v, s) for v, s in gens if np.linalg.norm(v) > 1e-14 * scale]
    kept: list = []

    def independent(v):
        return normalized_rank([k for k, _ in kept] + [v], tol_rank) == len(kept) + 1

    level = []
    for v, s in gens:
        if independent(v):
            kept.append((v, s))
        level.append((v, s))
    for _ in range(1, depth + 1):
        if len(kept) == 6:
            break
        nxt = []
        for v, s in level:
            for g, t in gens:
                w = kinematic_bracket(v, g)
                # roundoff scale of the cross products
                if np.linalg.norm(w) <= 1e-13 * np.linalg.norm(v) * np.linalg.norm(g):
                    continue
                lab = f"[{s},{t}]"
                if independent(w):
                    kept.append((w, lab))
                    nxt.append((w, lab))
        if not nxt:
            break
        level = nxt
    rank = len(kept)
    if labels:
        return rank, [s for _, s in kept]
    return rank
