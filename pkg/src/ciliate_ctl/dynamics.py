"""Simulation of the full, reduced and kinematic systems.

Full system on R^6 x R^3 x SO(3):

    z'    = A z + E(z) + B u
    zeta' = R xi
    R'    = R S(omega)

Time stepping is RK4 in the Munthe-Kaas form: within one step R is written
as R0 exp(S(theta)) and (z, zeta, theta) is advanced by classical RK4 with

    theta' = dexp^{-1}_theta(omega)
           = omega + theta x omega / 2 + c(|theta|) theta x (theta x omega),
    c(p)   = (1 - (p/2) cot(p/2)) / p^2,

so R stays on SO(3) up to rounding and the global error is O(dt^4).
Steps never straddle a control breakpoint.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import (FullState, KinematicModel, SwimmerModel, check_rotation, expm_so3,
                   orthogonality_defect, skew)


class SimulationError(RuntimeError):
    def __init__(self, message: str, last_time: float):
        self.last_time = last_time
        super().__init__(f"{message} (last valid time {last_time:.6g})")


# --------------------------------------------------------------------------
# Control signals
# --------------------------------------------------------------------------

class ControlSignal:
    """Control u: [0, T] -> R^m.

    mode "hold":  ``values[k]`` is applied on [knots[k], knots[k+1]);
                  len(values) == len(knots) - 1.
    mode "cubic": cubic spline through (knots[k], values[k]); optional
                  end slopes clamp the spline, otherwise not-a-knot.
    """

    def __init__(self, knots, values, mode: str = "hold", slopes=None):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if mode not in ("hold", "cubic"):
            raise ValueError(f"unknown interpolation mode {mode!r}")
        if knots.ndim != 1 or len(knots) < 2 or knots[0] != 0.0:
            raise ValueError("knots must start at 0 and contain at least two times")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        want = len(knots) - 1 if mode == "hold" else len(knots)
        if values.shape[0] != want:
            raise ValueError(f"{mode} signal needs {want} value rows, got {values.shape[0]}")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(knots))):
            raise ValueError("control values must be finite")
        self.knots = knots
        self.values = values
        self.mode = mode
        self._spline = None
        if mode == "cubic":
            if len(knots) == 2 and slopes is None:
                self._spline = CubicSpline(knots, values, axis=0, bc_type="natural")
            elif slopes is None:
                self._spline = CubicSpline(knots, values, axis=0)
            else:
                s0, s1 = (np.asarray(s, dtype=float) for s in slopes)
                self._spline = CubicSpline(knots, values, axis=0,
                                           bc_type=((1, s0), (1, s1)))
            self._dspline = self._spline.derivative()

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, T: float, m: int) -> "ControlSignal":
        return cls([0.0, T], np.zeros((1, m)))

    @classmethod
    def constant(cls, T: float, u) -> "ControlSignal":
        return cls([0.0, T], np.atleast_2d(np.asarray(u, dtype=float)))

    @classmethod
    def piecewise(cls, durations, values) -> "ControlSignal":
        d = np.asarray(durations, dtype=float)
        if np.any(d <= 0):
            raise ValueError("durations must be positive")
        return cls(np.concatenate([[0.0], np.cumsum(d)]), values)

    @classmethod
    def sampled(cls, fn, T: float, n: int, slopes=None) -> "ControlSignal":
        """Cubic spline through fn at n + 1 equispaced nodes."""
        t = np.linspace(0.0, T, n + 1)
        return cls(t, np.array([np.atleast_1d(fn(s)) for s in t]), "cubic", slopes)

    # interface ------------------------------------------------------------
    @property
    def T(self) -> float:
        return float(self.knots[-1])

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def segments(self):
        """(a, b, f) triples; f evaluates u on the closed segment [a, b]."""
        out = []
        for k in range(len(self.knots) - 1):
            a, b = float(self.knots[k]), float(self.knots[k + 1])
            if self.mode == "hold":
                v = self.values[k]
                out.append((a, b, lambda t, v=v: v))
            else:
                out.append((a, b, self._eval_cubic))
        return out

    def _eval_cubic(self, t):
        return self._spline(t)

    def __call__(self, t: float) -> np.ndarray:
        if self.mode == "cubic":
            return self._spline(np.clip(t, 0.0, self.T))
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        return self.values[min(max(k, 0), len(self.values) - 1)]

    def derivative(self, t: float) -> np.ndarray:
        if self.mode == "cubic":
            return self._dspline(np.clip(t, 0.0, self.T))
        return np.zeros(self.m)

    def energy(self) -> float:
        """Integral of |u|^2 over [0, T]."""
        if self.mode == "hold":
            return float(np.sum(np.diff(self.knots) * np.sum(self.values ** 2, axis=1)))
        x, w = np.polynomial.legendre.leggauss(4)
        tot = 0.0
        for a, b in zip(self.knots[:-1], self.knots[1:]):
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            tot += 0.5 * (b - a) * float(w @ np.sum(self._spline(t) ** 2, axis=1))
        return tot

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t"] + [f"u{j + 1}" for j in range(self.m)] + ["mode"])
        rows = self.values if self.mode == "cubic" else np.vstack([self.values, self.values[-1:]])
        for t, row in zip(self.knots, rows):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row] + [self.mode])
        return buf.getvalue()


class SignalSequence:
    """Concatenation of signals in time."""

    def __init__(self, parts):
        parts = [p for p in parts if p is not None and p.T > 0]
        if not parts:
            raise ValueError("empty signal sequence")
        ms = {p.m for p in parts}
        if len(ms) != 1:
            raise ValueError("all parts must have the same control dimension")
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SignalSequence) else [p])
        self.parts = flat
        self.offsets = np.concatenate([[0.0], np.cumsum([p.T for p in flat])])

    @property
    def T(self) -> float:
        return float(self.offsets[-1])

    @property
    def m(self) -> int:
        return self.parts[0].m

    @property
    def knots(self) -> np.ndarray:
        ks = [self.offsets[i] + p.knots[:-1] for i, p in enumerate(self.parts)]
        return np.concatenate(ks + [[self.T]])

    def _locate(self, t):
        i = int(np.searchsorted(self.offsets, t, side="right")) - 1
        return min(max(i, 0), len(self.parts) - 1)

    def segments(self):
        out = []
        for off, p in zip(self.offsets, self.parts):
            for a, b, f in p.segments():
                out.append((off + a, off + b, lambda t, f=f, off=off: f(t - off)))
        return out

    def __call__(self, t):
        i = self._locate(t)
        return self.parts[i](t - self.offsets[i])

    def derivative(self, t):
        i = self._locate(t)
        return self.parts[i].derivative(t - self.offsets[i])

    def energy(self) -> float:
        return sum(p.energy() for p in self.parts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t"] + [f"u{j + 1}" for j in range(self.m)] + ["mode"])
        for off, p in zip(self.offsets, self.parts):
            rows = p.values if p.mode == "cubic" else np.vstack([p.values, p.values[-1:]])
            for t, row in zip(p.knots, rows):
                w.writerow([repr(float(off + t))] + [repr(float(x)) for x in row] + [p.mode])
        return buf.getvalue()


def concat(*signals):
    return SignalSequence(signals)


def _cross(a, b) -> np.ndarray:
    # np.cross has large per-call overhead for single 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _steps(a: float, b: float, dt: float):
    n = max(1, int(math.ceil((b - a) / dt - 1e-9)))
    h = (b - a) / n
    return n, h


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray | None = None        # N x 6 (full) or None
    zeta: np.ndarray | None = None     # N x 3
    R: np.ndarray | None = None        # N x 3 x 3
    x: np.ndarray | None = None        # N x 3 (reduced system)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> FullState:
        z = self.z[-1] if self.z is not None else np.zeros(6)
        zeta = self.zeta[-1] if self.zeta is not None else np.zeros(3)
        R = self.R[-1] if self.R is not None else np.eye(3)
        return FullState(z[:3], z[3:], zeta, R)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        if self.x is not None:
            w.writerow(["t", "x1", "x2", "x3"])
            for t, x in zip(self.t, self.x):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
            return buf.getvalue()
        head = ["t"]
        if self.z is not None:
            head += ["xi1", "xi2", "xi3", "om1", "om2", "om3"]
        head += ["zeta1", "zeta2", "zeta3"] + [f"R{i}{j}" for i in range(1, 4) for j in range(1, 4)]
        w.writerow(head)
        for k, t in enumerate(self.t):
            row = [float(t)]
            if self.z is not None:
                row += list(self.z[k])
            row += list(self.zeta[k]) + list(self.R[k].ravel())
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _dexpinv(theta, w):
    p2 = float(theta @ theta)
    if p2 < 1e-8:
        c = 1.0 / 12.0 + p2 / 720.0
    else:
        p = math.sqrt(p2)
        c = (1.0 - 0.5 * p / math.tan(0.5 * p)) / p2
    tw = _cross(theta, w)
    return w + 0.5 * tw + c * _cross(theta, tw)


def _rkmk4(y, R0, h, t, rhs):
    """One RKMK4 step. rhs(t, y, R) -> (ydot, omega); y holds (z, zeta)."""
    th0 = np.zeros(3)

    def F(tt, yy, th):
        R = R0 @ expm_so3(th)
        dy, om = rhs(tt, yy, R)
        return dy, _dexpinv(th, om)

    k1y, k1t = F(t, y, th0)
    k2y, k2t = F(t + 0.5 * h, y + 0.5 * h * k1y, 0.5 * h * k1t)
    k3y, k3t = F(t + 0.5 * h, y + 0.5 * h * k2y, 0.5 * h * k2t)
    k4y, k4t = F(t + h, y + h * k3y, h * k3t)
    y1 = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
    th = h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
    return y1, R0 @ expm_so3(th)


def _run_group(y0, R0, u, dt, rhs, record: int):
    """Integrate (y, R) through all control segments."""
    ts, ys, Rs = [0.0], [y0.copy()], [R0.copy()]
    y, R = y0.copy(), R0.copy()
    steps = 0
    max_def = orthogonality_defect(R)
    t_last = 0.0
    for a, b, f in u.segments():
        n, h = _steps(a, b, dt)
        for i in range(n):
            t = a + i * h
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    y, R = _rkmk4(y, R, h, t, lambda tt, yy, RR: rhs(tt, yy, RR, f(tt)))
            except (ValueError, OverflowError):
                raise SimulationError("non-finite state", t_last) from None
            steps += 1
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(R))):
                raise SimulationError("non-finite state", t_last)
            t_last = a + (i + 1) * h if i + 1 < n else b
            if steps % record == 0 or (i + 1 == n):
                ts.append(t_last)
                ys.append(y.copy())
                Rs.append(R.copy())
                max_def = max(max_def, orthogonality_defect(R))
    max_def = max(max_def, orthogonality_defect(R))
    return np.array(ts), np.array(ys), np.array(Rs), {"steps": steps, "max_orth_defect": max_def}


# --------------------------------------------------------------------------
# Simulators
# --------------------------------------------------------------------------

def simulate_full(model: SwimmerModel, x0: FullState, u, dt: float = 1e-3,
                  record: int = 1) -> Trajectory:
    """Integrate the full 12-dimensional system under control u."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if u.m != model.m:
        raise ValueError(f"control has {u.m} channels, model expects {model.m}")
    A, B, J = model.A, model.B, model.J
    Jinv = np.linalg.inv(J)

    def rhs(t, y, R, uu):
        z = y[:6]
        xi, om = z[:3], z[3:]
        zd = A @ z + B @ uu
        zd[:3] += _cross(xi, om)
        zd[3:] += Jinv @ _cross(J @ om, om)
        return np.concatenate([zd, R @ xi]), om

    y0 = np.concatenate([x0.z, x0.zeta])
    ts, ys, Rs, diag = _run_group(y0, np.array(x0.R), u, dt, rhs, record)
    return Trajectory(ts, ys[:, :6], ys[:, 6:], Rs, diagnostics=diag)


def btilde(model: SwimmerModel) -> np.ndarray:
    """B1 B2^{-1}; needs m = 3 and B2 invertible."""
    B2 = model.B2
    if B2.shape != (3, 3) or np.linalg.cond(B2) > 1e12:
        raise np.linalg.LinAlgError("B2 must be square and invertible")
    return np.linalg.solve(B2.T, model.B1.T).T


def reduction_map(model: SwimmerModel, z) -> np.ndarray:
    """x = xi - B1 B2^{-1} omega."""
    z = z.z if hasattr(z, "z") else np.asarray(z, dtype=float)
    return z[:3] - btilde(model) @ z[3:]


def reduced_coefficients(model: SwimmerModel) -> dict:
    Bt = btilde(model)
    At11 = model.A11 - Bt @ model.A21
    return {"Bt": Bt, "At11": At11,
            "C": At11 @ Bt + model.A12 - Bt @ model.A22,
            "J": model.J, "Jinv": np.linalg.inv(model.J)}


def reduced_rhs(coef: dict, x, v) -> np.ndarray:
    Bt, J, Jinv = coef["Bt"], coef["J"], coef["Jinv"]
    return (coef["At11"] @ x - _cross(v, x) + coef["C"] @ v
            - _cross(v, Bt @ v) - Bt @ (Jinv @ _cross(J @ v, v)))


def simulate_reduced(model: SwimmerModel, x0, v, dt: float = 1e-3,
                     record: int = 1) -> Trajectory:
    """Integrate x' = At11 x - v x x + C v - v x Bt v - Bt J^{-1}(J v x v)."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    coef = reduced_coefficients(model)
    x = np.asarray(x0, dtype=float).copy()
    ts, xs = [0.0], [x.copy()]
    steps = 0
    for a, b, f in v.segments():
        n, h = _steps(a, b, dt)
        for i in range(n):
            t = a + i * h
            k1 = reduced_rhs(coef, x, f(t))
            vm = f(t + 0.5 * h)
            k2 = reduced_rhs(coef, x + 0.5 * h * k1, vm)
            k3 = reduced_rhs(coef, x + 0.5 * h * k2, vm)
            k4 = reduced_rhs(coef, x + h * k3, f(t + h))
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            steps += 1
            if not np.all(np.isfinite(x)):
                raise SimulationError("non-finite state", t)
            if steps % record == 0 or i + 1 == n:
                ts.append(a + (i + 1) * h if i + 1 < n else b)
                xs.append(x.copy())
    return Trajectory(np.array(ts), x=np.array(xs), diagnostics={"steps": steps})


def _se3_step(zeta, R, v, w, t):
    """Exact flow of zeta' = R v, R' = R S(w) for constant body velocities."""
    phi = t * np.asarray(w, dtype=float)
    p2 = float(phi @ phi)
    K = skew(phi)
    if p2 < 1e-12:
        a = 0.5 - p2 / 24.0
        b = 1.0 / 6.0 - p2 / 120.0
    else:
        p = math.sqrt(p2)
        a = (1.0 - math.cos(p)) / p2
        b = (p - math.sin(p)) / (p2 * p)
    V = np.eye(3) + a * K + b * (K @ K)
    return zeta + R @ (V @ (t * np.asarray(v, dtype=float))), R @ expm_so3(phi)


def simulate_kinematic(L: KinematicModel, x0, u, dt: float = 1e-3,
                       record: int = 1) -> Trajectory:
    """Integrate zeta' = R L1 u, R' = R S(L2 u) from x0 = (zeta0, R0).

    Held segments use the exact SE(3) exponential; spline segments use RKMK4.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    zeta0, R0 = x0
    zeta = np.asarray(zeta0, dtype=float).copy()
    R = np.array(check_rotation(R0))
    if u.m != L.m:
        raise ValueError(f"control has {u.m} channels, model expects {L.m}")
    ts, zs, Rs = [0.0], [zeta.copy()], [R.copy()]
    steps = 0
    max_def = orthogonality_defect(R)
    L1, L2 = L.L1, L.L2
    parts = u.parts if isinstance(u, SignalSequence) else [u]
    offsets = u.offsets if isinstance(u, SignalSequence) else [0.0]
    for off, p in zip(offsets, parts):
        for a, b, f in p.segments():
            a, b = off + a, off + b
            if p.mode == "hold":
                uu = f(0.0)
                zeta, R = _se3_step(zeta, R, L1 @ uu, L2 @ uu, b - a)
                steps += 1
            else:
                n, h = _steps(a, b, dt)
                g = (lambda tt, f=f, off=off: f(tt - off))
                for i in range(n):
                    t = a + i * h
                    zeta, R = _rkmk4(zeta, R, h, t,
                                     lambda tt, yy, RR: (RR @ (L1 @ g(tt)), L2 @ g(tt)))
                    steps += 1
            if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(R))):
                raise SimulationError("non-finite state", a)
            ts.append(b)
            zs.append(zeta.copy())
            Rs.append(R.copy())
            max_def = max(max_def, orthogonality_defect(R))
    return Trajectory(np.array(ts), None, np.array(zs), np.array(Rs),
                      diagnostics={"steps": steps, "max_orth_defect": max_def})


def simulate_omega(model, w0, u, dt: float = 1e-3) -> np.ndarray:
    """Endpoint of w' = -rho2 w + B2 u for a spherical model (RK4)."""
    w = np.asarray(w0, dtype=float).copy()
    rho2, B2 = model.rho2, model.B2
    for a, b, f in u.segments():
        n, h = _steps(a, b, dt)
        for i in range(n):
            t = a + i * h
            g = lambda tt, ww: -rho2 * ww + B2 @ f(tt)
            k1 = g(t, w)
            k2 = g(t + 0.5 * h, w + 0.5 * h * k1)
            k3 = g(t + 0.5 * h, w + 0.5 * h * k2)
            k4 = g(t + h, w + h * k3)
            w = w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return w


def velocity_only(model: SwimmerModel, z0, u, dt: float = 1e-3) -> np.ndarray:
    """Endpoint z(T) of the velocity equation alone (cheaper than the full state)."""
    z = np.asarray(z0, dtype=float).copy()
    A, B, J = model.A, model.B, model.J
    Jinv = np.linalg.inv(J)

    def vel(zz, uu):
        out = A @ zz + B @ uu
        out[:3] += _cross(zz[:3], zz[3:])
        out[3:] += Jinv @ _cross(J @ zz[3:], zz[3:])
        return out

    for a, b, f in u.segments():
        n, h = _steps(a, b, dt)
        for i in range(n):
            t = a + i * h
            g = lambda tt, zz: vel(zz, f(tt))
            k1 = g(t, z)
            k2 = g(t + 0.5 * h, z + 0.5 * h * k1)
            k3 = g(t + 0.5 * h, z + 0.5 * h * k2)
            k4 = g(t + h, z + h * k3)
            z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(z)):
                raise SimulationError("non-finite state", t)
    return z
