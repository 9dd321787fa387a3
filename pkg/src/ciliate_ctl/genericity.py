"""Random sampling of model parameters and empirical criterion pass rates.

Xi0: J = J^T > 0 and A symmetric negative definite for the kinetic-energy
inner product. Xi1: J = J^T > 0, A arbitrary. Every sample i is drawn from
its own generator ``default_rng([seed, i])``, so streams are reproducible
and can be split across workers without coordination.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import DEFAULT_TOL, Tolerances, max_workers
from .core import SwimmerModel, j_metric, random_rotation
from .criteria import NA, check_prop_pa, check_prop_pc
from .modelio import model_to_dict

FAMILIES = ("generic", "isotropic_J", "degenerate_B")
CRITERIA = ("prop-pa", "prop-pc", "lie-rank")


@dataclass(frozen=True)
class SampleConfig:
    m: int = 1
    space: str = "Xi0"
    count: int = 1000
    seed: int = 0
    scale: float = 1.0
    family: str = "generic"
    eps: float = 0.1          # spectral margin of -A in Xi0
    depth: int = 6            # only used by the lie-rank criterion

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.space not in ("Xi0", "Xi1"):
            raise ValueError(f"space must be Xi0 or Xi1, got {self.space!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.scale > 0:
            raise ValueError("scale must be > 0")


def sample_one(cfg: SampleConfig, i: int) -> SwimmerModel:
    rng = np.random.default_rng([cfg.seed, i])
    s = cfg.scale
    if cfg.family == "isotropic_J":
        J = rng.uniform(0.2, 2.0) * s * np.eye(3)
    else:
        Q = random_rotation(rng)
        J = Q @ np.diag(rng.uniform(0.2, 2.0, 3) * s) @ Q.T
        J = 0.5 * (J + J.T)
    mbar = 1.0
    if cfg.space == "Xi0":
        G = rng.normal(scale=s, size=(6, 6))
        A = np.linalg.solve(j_metric(mbar, J), -(G @ G.T) - cfg.eps * np.eye(6))
    else:
        A = rng.normal(scale=s, size=(6, 6))
    B = rng.normal(scale=s, size=(6, cfg.m))
    if cfg.family == "degenerate_B":
        # B2 of rank <= min(m, 3) - 1 and B1 = lam B2
        r = min(cfg.m, 3) - 1
        B2 = rng.normal(scale=s, size=(3, r)) @ rng.normal(size=(r, cfg.m)) if r else np.zeros((3, cfg.m))
        B = np.vstack([rng.normal() * B2, B2])
    return SwimmerModel(A, B, J, mbar, dissipative=(cfg.space == "Xi0"))


def sample_xi(cfg: SampleConfig):
    """Yield cfg.count models."""
    for i in range(cfg.count):
        yield sample_one(cfg, i)


def wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


@dataclass
class SampleStats:
    config: SampleConfig
    criteria: tuple
    passes: dict = field(default_factory=dict)
    fails: dict = field(default_factory=dict)
    not_applicable: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.config.count

    def rate(self, name: str) -> float:
        tot = self.passes[name] + self.fails[name]
        return self.passes[name] / tot if tot else float("nan")

    def to_dict(self) -> dict:
        out = {"config": asdict(self.config), "n": self.n, "criteria": {}}
        for c in self.criteria:
            k, f = self.passes[c], self.fails[c]
            out["criteria"][c] = {"pass": k, "fail": f, "not_applicable": self.not_applicable[c],
                                  "rate": self.rate(c), "wilson95": list(wilson(k, k + f))}
        out["witnesses"] = self.witnesses
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["index"] + list(self.criteria))
        for row in self.rows:
            w.writerow([row["index"]] + [row[c] for c in self.criteria])
        return buf.getvalue()


def _evaluate(model, name, cfg, tol):
    if name == "prop-pa":
        if model.m != 1:
            return NA, {}
        v = check_prop_pa(model, tol)
        return v.status, v.quantities
    if name == "prop-pc":
        v = check_prop_pc(model, tol)
        return v.status, v.quantities
    if name == "lie-rank":
        from .core import FullState
        from .lie import lie_rank
        rep = lie_rank(model, FullState.rest(), cfg.depth, tol.rank)
        return ("holds" if rep.full else "fails"), {"rank": rep.rank}
    raise ValueError(f"unknown criterion {name!r}; choose from {CRITERIA}")


def _chunk(cfg, criteria, tol, lo, hi, keep):
    rows, wit = [], {c: [] for c in criteria}
    for i in range(lo, hi):
        model = sample_one(cfg, i)
        row = {"index": i}
        for c in criteria:
            status, q = _evaluate(model, c, cfg, tol)
            row[c] = status
            if status == "fails" and len(wit[c]) < keep:
                wit[c].append({"index": i, "model": model_to_dict(model),
                               "quantities": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                              for k, v in q.items()}})
        rows.append(row)
    return rows, wit


def measure(cfg: SampleConfig, criteria=("prop-pa",), tol: Tolerances = DEFAULT_TOL,
            keep_witnesses: int = 5, workers: int | None = None) -> SampleStats:
    """Evaluate each criterion on every sample; counts are exact."""
    criteria = tuple(criteria)
    for c in criteria:
        if c not in CRITERIA:
            raise ValueError(f"unknown criterion {c!r}; choose from {CRITERIA}")
    workers = workers or max_workers()
    n = cfg.count
    if workers <= 1 or n < 200:
        parts = [_chunk(cfg, criteria, tol, 0, n, keep_witnesses)]
    else:
        bounds = np.linspace(0, n, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_chunk, cfg, criteria, tol, int(a), int(b), keep_witnesses)
                    for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            parts = [f.result() for f in futs]
    st = SampleStats(cfg, criteria)
    for c in criteria:
        st.witnesses[c] = []
    for rows, wit in parts:
        st.rows.extend(rows)
        for c in criteria:
            st.witnesses[c].extend(wit[c])
    for c in criteria:
        st.witnesses[c] = st.witnesses[c][:keep_witnesses]
        st.passes[c] = sum(r[c] == "holds" for r in st.rows)
        st.fails[c] = sum(r[c] == "fails" for r in st.rows)
        st.not_applicable[c] = sum(r[c] == NA for r in st.rows)
    return st
