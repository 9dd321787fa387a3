"""Sparse real polynomials in a fixed number of variables.

Terms are stored as ``{exponent_tuple: coefficient}``. Coefficients smaller
than ``PRUNE_REL * max|coef|`` are dropped after every arithmetic operation,
so exact cancellations (antisymmetry, Jacobi) leave an empty dict.
"""

from __future__ import annotations

import math

import numpy as np

PRUNE_REL = 1e-14
DEFAULT_MAX_DEGREE = 8


class DegreeOverflow(ArithmeticError):
    pass


def _prune(terms: dict) -> dict:
    if not terms:
        return terms
    big = max(abs(c) for c in terms.values())
    if big == 0.0:
        return {}
    cut = PRUNE_REL * big
    return {e: c for e, c in terms.items() if abs(c) > cut}


class Poly:
    """Polynomial in ``nvars`` real variables with float coefficients."""

    __slots__ = ("terms", "nvars", "_arr")

    def __init__(self, terms=None, nvars: int = 6, prune: bool = True):
        self.nvars = nvars
        t = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != nvars:
                raise ValueError(f"exponent {e} has wrong length for {nvars} variables")
            if not math.isfinite(c):
                raise ValueError("non-finite coefficient")
            if c != 0.0:
                t[e] = t.get(e, 0.0) + float(c)
        self.terms = _prune(t) if prune else t
        self._arr = None

    # -- constructors ------------------------------------------------------
    @classmethod
    def const(cls, c: float, nvars: int = 6) -> "Poly":
        return cls({(0,) * nvars: float(c)}, nvars)

    @classmethod
    def var(cls, k: int, nvars: int = 6, coef: float = 1.0) -> "Poly":
        e = [0] * nvars
        e[k] = 1
        return cls({tuple(e): coef}, nvars)

    @classmethod
    def linear(cls, row, nvars: int = 6) -> "Poly":
        """sum_k row[k] * x_k"""
        return cls({tuple(1 if i == k else 0 for i in range(nvars)): float(c)
                    for k, c in enumerate(row) if c != 0.0}, nvars)

    @classmethod
    def _raw(cls, terms: dict, nvars: int) -> "Poly":
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = _prune(terms)
        p._arr = None
        return p

    # -- queries -----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __call__(self, x) -> float:
        if not self.terms:
            return 0.0
        if self._arr is None:
            E = np.array(list(self.terms.keys()), dtype=float)
            C = np.array(list(self.terms.values()))
            self._arr = (E, C)
        E, C = self._arr
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            mon = np.prod(np.where(E == 0, 1.0, x ** E), axis=1)
        return float(mon @ C)

    def deriv(self, k: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            p = e[k]
            if p:
                f = list(e)
                f[k] = p - 1
                out[tuple(f)] = c * p
        return Poly._raw(out, self.nvars)

    # -- arithmetic --------------------------------------------------------
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return other
        return Poly.const(float(other), self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly._raw(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            s = float(other)
            return Poly._raw({e: s * c for e, c in self.terms.items()}, self.nvars)
        other = self._coerce(other)
        out: dict = {}
        mul_acc(out, self.terms, other.terms, 1.0)
        return Poly._raw(out, self.nvars)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Poly):
            other = self._coerce(other)
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def allclose(self, other, rtol: float = 1e-9, atol: float = 0.0) -> bool:
        other = self._coerce(other)
        scale = max(self.max_abs(), other.max_abs(), 1e-300)
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= atol + rtol * scale
                   for k in keys)

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"z{i + 1}" + (f"^{p}" if p > 1 else "")
                            for i, p in enumerate(e) if p)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return " ".join(parts)


def mul_acc(acc: dict, a: dict, b: dict, sign: float) -> None:
    """acc += sign * a * b, all as term dicts."""
    get = acc.get
    for ea, ca in a.items():
        s = sign * ca
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            acc[e] = get(e, 0.0) + s * cb
