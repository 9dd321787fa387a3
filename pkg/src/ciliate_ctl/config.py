"""Shared numerical tolerances and run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used to turn open conditions into computable tests.

    rank:   singular values with sigma_k / sigma_1 <= rank count as zero
    det:    |det M| <= det * (Hadamard bound of M) counts as zero
    orth:   Frobenius bound on R^T R - Id for a rotation
    zero:   relative bound below which a matrix is treated as exactly zero
    """

    rank: float = 1e-8
    det: float = 1e-10
    orth: float = 1e-9
    zero: float = 1e-12

    def __post_init__(self):
        for name in ("rank", "det", "orth", "zero"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name!r} must be > 0")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Config:
    tol: Tolerances = field(default_factory=Tolerances)
    dt: float = 1e-3
    depth: int = 6
    max_iter: int = 200
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    def with_(self, **kw) -> "Config":
        return replace(self, **kw)


def max_workers() -> int:
    """Parallelism cap from CILIATE_CTL_THREADS (default 1)."""
    raw = os.environ.get("CILIATE_CTL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
