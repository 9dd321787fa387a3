"""Controllability and accessibility criteria with witnesses.

Sufficient conditions that fail give "undetermined", never "not
controllable"; negative verdicts are only issued from an explicit
obstruction (spherical and equal-density cases, which are exact).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .core import (FullState, KinematicModel, SphericalModel, SwimmerModel, det_nonzero,
                   numeric_rank)

HOLDS, FAILS, NA = "holds", "fails", "not-applicable"
CONTROLLABLE = "controllable"
NOT_CONTROLLABLE = "not-controllable"
ACCESSIBLE = "accessible-only"
UNDETERMINED = "undetermined"


@dataclass
class Verdict:
    name: str
    status: str
    quantities: dict = field(default_factory=dict)
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.status == HOLDS

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status,
                "quantities": _jsonable(self.quantities), "note": self.note}


@dataclass
class CriterionReport:
    classification: str
    verdicts: list = field(default_factory=list)
    kind: str = "general"

    def verdict(self, name: str) -> Verdict | None:
        for v in self.verdicts:
            if v.name == name:
                return v
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "classification": self.classification,
                "verdicts": [v.to_dict() for v in self.verdicts]}

    def text(self) -> str:
        lines = [f"model kind: {self.kind}", f"classification: {self.classification}"]
        for v in self.verdicts:
            q = ", ".join(f"{k}={_fmt(x)}" for k, x in v.quantities.items())
            lines.append(f"  [{v.status:>14}] {v.name}: {q}" + (f"  ({v.note})" if v.note else ""))
        return "\n".join(lines)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, np.ndarray):
        return np.array2string(x, precision=6, suppress_small=True).replace("\n", "")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# m = 1: three determinant conditions
# --------------------------------------------------------------------------

def check_prop_pa(model: SwimmerModel, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """det(b1,Jb2,J^2b2), det(b2,Jb2,J^2b2) and det(J - lambda Id) all nonzero."""
    if model.m != 1:
        raise ValueError("the three-determinant test needs m = 1")
    J = model.J
    b1, b2 = model.B1[:, 0], model.B2[:, 0]
    Jb, J2b = J @ b2, J @ (J @ b2)
    ok1, d1 = det_nonzero(np.column_stack([b1, Jb, J2b]), tol.det)
    ok2, d2 = det_nonzero(np.column_stack([b2, Jb, J2b]), tol.det)
    q = {"hypo1": d1, "hypo2": d2}
    jb2 = float(Jb @ b2)
    if not jb2 > 0.0:
        q.update(lam=float("nan"), specJ=0.0)
        return Verdict("prop-pa", FAILS, q, "b2 = 0, so <Jb2, b2> = 0")
    lam = float(Jb @ Jb) / jb2
    M = J - lam * np.eye(3)
    # scale by |J|^3: the rows of J - lam Id can be small exactly when the
    # determinant is degenerate, so they are not a useful reference
    okj, dj = det_nonzero(M, tol.det, scale=float(np.linalg.norm(J, 2)) ** 3)
    q.update(lam=lam, specJ=dj)
    failed = [n for n, ok in (("hypo1", ok1), ("hypo2", ok2), ("specJ", okj)) if not ok]
    if failed:
        return Verdict("prop-pa", FAILS, q, "zero: " + ", ".join(failed))
    return Verdict("prop-pa", HOLDS, q)


# --------------------------------------------------------------------------
# m = 3: invertibility and eigenvector conditions
# --------------------------------------------------------------------------

def _eigen_clusters(J, rel: float = 1e-9):
    w, U = np.linalg.eigh(J)
    scale = max(abs(w).max(), 1e-300)
    groups, cur = [], [0]
    for i in range(1, 3):
        if w[i] - w[cur[-1]] <= rel * scale:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return w, U, groups


def eigvec_condition(J, Bt, tol: float = DEFAULT_TOL.rank) -> tuple[bool, dict]:
    """Is some eigenvector of J not an eigenvector of Bt?

    For a repeated eigenvalue every vector of the eigenspace is an
    eigenvector of J, so the test checks a basis u_i of each eigenspace and
    the sums u_i + u_j; Bt acts as a scalar on the eigenspace iff all of them
    are eigenvectors of Bt.
    """
    w, U, groups = _eigen_clusters(J)
    nb = max(float(np.linalg.norm(Bt, 2)), 1e-300)
    best, witness = 0.0, None
    for g in groups:
        cands = [U[:, i] for i in g]
        cands += [(U[:, i] + U[:, j]) / np.sqrt(2.0) for i, j in combinations(g, 2)]
        for v in cands:
            s = float(np.linalg.norm(np.cross(v, Bt @ v))) / nb
            if s > best:
                best, witness = s, v
    return best > tol, {"max_sin": best, "witness": witness, "eigenvalues": w,
                        "multiplicities": [len(g) for g in groups]}


def _pc_square(A, B1, B2, J, tol: Tolerances):
    ok_b2, dB2 = det_nonzero(B2, tol.det)
    q = {"detB2": dB2}
    if not ok_b2:
        return False, q, "B2 singular"
    Bt = np.linalg.solve(B2.T, B1.T).T
    At11 = A[:3, :3] - Bt @ A[3:, :3]
    sym = At11 + At11.T
    ok_s, ds = det_nonzero(sym, tol.det)
    ok_e, info = eigvec_condition(J, Bt, tol.rank)
    q.update(det_sym_At11=ds, eig_sin=info["max_sin"], witness=info["witness"])
    failed = [n for n, ok in (("At11 + At11^T singular", ok_s),
                              ("every J-eigenvector is a Bt-eigenvector", ok_e)) if not ok]
    return not failed, q, "; ".join(failed)


def check_prop_pc(model: SwimmerModel, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """B2 and At11 + At11^T invertible, and a J-eigenvector that Bt does not fix.

    For m > 3 every column triple is tried: restricting the controls to a
    triple keeps any controllability it gives.
    """
    if model.m < 3:
        return Verdict("prop-pc", NA, {"m": model.m}, "needs m >= 3")
    triples = [(0, 1, 2)] if model.m == 3 else list(combinations(range(model.m), 3))
    last = None
    for tr in triples:
        idx = list(tr)
        ok, q, note = _pc_square(model.A, model.B1[:, idx], model.B2[:, idx], model.J, tol)
        if model.m > 3:
            q["columns"] = tr
        if ok:
            return Verdict("prop-pc", HOLDS, q)
        last = (q, note)
    return Verdict("prop-pc", FAILS, last[0], last[1])


# --------------------------------------------------------------------------
# Exact criteria
# --------------------------------------------------------------------------

def _is_zero(M, ref, rel) -> bool:
    return float(np.abs(M).max(initial=0.0)) <= rel * ref


def check_spherical(model: SphericalModel, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Controllable iff rank B2 = 3 and B1 != 0."""
    r2 = numeric_rank(model.B2, tol.rank)
    ref = max(float(np.abs(model.B1).max()), float(np.abs(model.B2).max()), 1e-300)
    b1_nonzero = not _is_zero(model.B1, ref, tol.zero)
    q = {"rank_B2": r2, "norm_B1": float(np.linalg.norm(model.B1)),
         "proportional": _proportional(model.B1, model.B2, tol)}
    if r2 == 3 and b1_nonzero:
        return Verdict("spherical", HOLDS, q)
    why = []
    if not b1_nonzero:
        why.append("B1 = 0: {0} x R^3 is invariant")
    if r2 < 3:
        why.append(f"rank B2 = {r2}: omega' = -rho2 omega + B2 u is not controllable")
    return Verdict("spherical", FAILS, q, "; ".join(why))


def _proportional(B1, B2, tol: Tolerances):
    """lambda with B1 = lambda B2, or None."""
    n2 = float(np.vdot(B2, B2))
    if n2 == 0.0:
        return None
    lam = float(np.vdot(B2, B1)) / n2
    ref = max(float(np.abs(B1).max()), float(np.abs(B2).max()))
    return lam if _is_zero(B1 - lam * B2, ref, 1e-9) else None


def check_equal_density(L: KinematicModel, tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Condition 1: rank L2 >= 2 and L1^T L2 + L2^T L1 != 0.
    Condition 2: rank L2 = 2 and rank L >= 3."""
    r = numeric_rank(L.L2, tol.rank)
    rL = numeric_rank(L.L, tol.rank)
    S = L.L1.T @ L.L2 + L.L2.T @ L.L1
    ref = max(float(np.linalg.norm(L.L1, 2) * np.linalg.norm(L.L2, 2)), 1e-300)
    s_nonzero = not _is_zero(S, ref, tol.rank)
    c1 = r >= 2 and s_nonzero
    c2 = r == 2 and rL >= 3
    q = {"rank_L2": r, "rank_L": rL, "norm_sym": float(np.abs(S).max()),
         "cond1": c1, "cond2": c2}
    if c1 or c2:
        return Verdict("equal-density", HOLDS, q, "condition 1" if c1 else "condition 2")
    if r <= 1:
        note = "rank L2 <= 1: R(t) x0 is constant for x0 orthogonal to the range of L2"
    elif r == 2:
        note = "rank L2 = rank L = 2 with symmetric part zero: algebra spanned by X1, X2, [X1, X2]"
    else:
        note = "rank L2 = 3 with symmetric part zero: so(3)-type closure"
    return Verdict("equal-density", FAILS, q, note)


# --------------------------------------------------------------------------
# Normalization of the spherical control matrices
# --------------------------------------------------------------------------

class PreconditionError(ValueError):
    pass


@dataclass
class Normalization:
    Gamma: np.ndarray     # m x 3
    Q: np.ndarray         # rotation with Q d_i = e_i
    B1n: np.ndarray       # Q B1 Gamma
    B2n: np.ndarray       # Q B2 Gamma = Id
    d: np.ndarray         # columns d_1, d_2, d_3 (orthonormal)
    c: np.ndarray         # columns c_i = B1 Gamma e_i
    case: str


def _best_direction(Bt):
    """Unit d maximizing |d x Bt d| over a small candidate set."""
    E = np.eye(3)
    cands = [E[i] for i in range(3)]
    cands += [(E[i] + s * E[j]) / np.sqrt(2) for i in range(3) for j in range(i + 1, 3)
              for s in (1.0, -1.0)]
    cands += [np.array([1.0, 1.0, 1.0]) / np.sqrt(3)]
    vals = [np.linalg.norm(np.cross(d, Bt @ d)) for d in cands]
    return cands[int(np.argmax(vals))], max(vals)


def _normalize_square(B1, B2, tol):
    Bt = np.linalg.solve(B2.T, B1.T).T
    d1, s = _best_direction(Bt)
    if s <= tol * max(float(np.linalg.norm(Bt, 2)), 1e-300):
        raise PreconditionError("B1 B2^{-1} is a multiple of Id on the triple")
    # complete to a right-handed orthonormal basis
    a = np.eye(3)[int(np.argmin(np.abs(d1)))]
    d2 = np.cross(d1, a)
    d2 /= np.linalg.norm(d2)
    d3 = np.cross(d1, d2)
    D = np.column_stack([d1, d2, d3])
    G3 = np.linalg.solve(B2, D)
    return G3, D, Bt @ D


def normalize_spherical(B1, B2, tol: Tolerances = DEFAULT_TOL) -> Normalization:
    """Gamma and Q with Q B2 Gamma = Id and (Q B1 Gamma) e1 not parallel to e1."""
    B1 = np.atleast_2d(np.asarray(B1, dtype=float))
    B2 = np.atleast_2d(np.asarray(B2, dtype=float))
    m = B2.shape[1]
    if numeric_rank(B2, tol.rank) != 3:
        raise PreconditionError("rank B2 must be 3")
    if _proportional(B1, B2, tol) is not None:
        raise PreconditionError("B1 lies in span(B2)")

    def finish(S, case):
        G3, D, C = _normalize_square(B1 @ S, B2 @ S, tol.rank)
        Gamma = S @ G3
        Q = D.T
        return Normalization(Gamma, Q, Q @ B1 @ Gamma, Q @ B2 @ Gamma, D, C, case)

    if m == 3:
        return finish(np.eye(3), "m=3")
    indep = [t for t in combinations(range(m), 3)
             if numeric_rank(B2[:, list(t)], tol.rank) == 3]
    for t in indep:
        sub1, sub2 = B1[:, list(t)], B2[:, list(t)]
        if _proportional(sub1, sub2, tol) is None:
            S = np.zeros((m, 3))
            S[list(t), [0, 1, 2]] = 1.0
            return finish(S, "independent-triple")
    # every independent triple is proportional: mix a column with B2^(j) = 0
    ref = max(float(np.abs(B1).max()), float(np.abs(B2).max()))
    for j in range(m):
        if (not _is_zero(B1[:, j], ref, tol.zero)) and _is_zero(B2[:, j], ref, tol.zero):
            j1, j2, j3 = indep[0]
            S = np.zeros((m, 3))
            S[j1, 0] = S[j, 0] = 1.0
            S[j2, 1] = 1.0
            S[j3, 2] = 1.0
            return finish(S, "proportional-columns")
    raise PreconditionError("no column realizes the reduction")  # excluded by the rank test


# --------------------------------------------------------------------------
# Algebraic identities used in the m = 1 argument
# --------------------------------------------------------------------------

def identity_checks(J, b, tol: Tolerances = DEFAULT_TOL) -> dict:
    """Both sides of C^{-1}(Cb x b) = det(C^{-1})(C^2 b x Cb) and the D formula."""
    C = np.asarray(J, dtype=float)
    b = np.asarray(b, dtype=float)
    out: dict = {}
    if np.linalg.cond(C) > 1e12 or np.abs(C - C.T).max() > 1e-12 * np.abs(C).max():
        return {"status": NA, "note": "C must be symmetric and invertible"}
    Cb, C2b = C @ b, C @ (C @ b)
    lhs = np.linalg.solve(C, np.cross(Cb, b))
    rhs = np.cross(C2b, Cb) / np.linalg.det(C)
    scale = max(float(np.linalg.norm(lhs)), float(np.linalg.norm(rhs)),
                float(np.linalg.norm(C2b) * np.linalg.norm(Cb) / abs(np.linalg.det(C))), 1e-300)
    err = float(np.linalg.norm(lhs - rhs)) / scale
    indep = numeric_rank(np.column_stack([Cb, C2b]), tol.rank) == 2
    out["algebraic"] = {"lhs": lhs, "rhs": rhs, "rel_err": err,
                        "status": HOLDS if err < 1e-9 else FAILS,
                        "hypothesis": bool(indep)}
    ok2, _ = det_nonzero(np.column_stack([b, Cb, C2b]), tol.det)
    if not ok2:
        out["D"] = {"status": NA, "note": "b, Jb, J^2 b are dependent"}
        return out
    b4 = np.cross(C2b, Cb)
    b5 = np.linalg.solve(C, np.cross(C @ b4, b) + np.cross(Cb, b4))
    brute = float(np.linalg.det(np.column_stack([b, b4, b5])))
    jb = float(Cb @ b)
    lam = float(Cb @ Cb) / jb
    closed = jb ** 3 * float(np.linalg.det(C - lam * np.eye(3)))
    ratio = brute / closed if closed != 0.0 else float("nan")
    out["D"] = {"brute": brute, "closed": closed, "ratio": ratio,
                "det_Jinv": 1.0 / float(np.linalg.det(C)), "status": HOLDS}
    return out


# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------

def classify(model, tol: Tolerances = DEFAULT_TOL, depth: int = 6,
             with_lie: bool = True) -> CriterionReport:
    """Run every applicable test and combine the verdicts."""
    if isinstance(model, KinematicModel):
        v = check_equal_density(model, tol)
        from .lie import kinematic_lie_rank
        rk = kinematic_lie_rank(model, depth=depth, tol_rank=tol.rank)
        lv = Verdict("kinematic-lie-rank", HOLDS if rk == 6 else FAILS, {"rank": rk})
        return CriterionReport(CONTROLLABLE if v.holds else NOT_CONTROLLABLE, [v, lv],
                               "equal-density")
    sph = model if isinstance(model, SphericalModel) else model.spherical()
    if sph is not None:
        v = check_spherical(sph, tol)
        return CriterionReport(CONTROLLABLE if v.holds else NOT_CONTROLLABLE, [v], "spherical")

    verdicts = []
    lie_full = False
    if with_lie:
        from .lie import lie_rank
        rep = lie_rank(model, FullState.rest(), depth, tol.rank)
        lie_full = rep.full
        verdicts.append(Verdict("lie-rank-at-rest", HOLDS if lie_full else FAILS,
                                {"rank": rep.rank, "depth": rep.depth_reached,
                                 "pivots": len(rep.pivots)}))
    if model.m == 1:
        pa = check_prop_pa(model, tol)
        verdicts.append(pa)
        cls = ACCESSIBLE if (pa.holds or lie_full) else UNDETERMINED
        return CriterionReport(cls, verdicts)
    if model.m >= 3:
        pc = check_prop_pc(model, tol)
        verdicts.append(pc)
        if pc.holds and lie_full:
            return CriterionReport(CONTROLLABLE, verdicts)
    return CriterionReport(ACCESSIBLE if lie_full else UNDETERMINED, verdicts)
