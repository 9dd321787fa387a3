"""Steering procedures.

* ``steer_omega``: minimum-energy steering of omega' = -rho2 omega + B2 u.
* ``steer_spherical_reduced``: explicit radial / great-circle plan for
  x' = -rho1 x - v x x + k v (spherical body with B1 = lam B2, k = (rho2 - rho1) lam).
* ``steer_reduced_shooting``: Levenberg-Marquardt shooting on the reduced
  3-D system with spline controls and fixed end values.
* ``lift_reduced_control``: turns a reduced plan into a control of the
  velocity equation, and ``plan_velocity`` chains the steps.
* ``plan_kinematic``: driftless planning on R^3 x SO(3).

Every planner returns a PlanResult whose error was measured by replaying the
control through the matching simulator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation

from .config import DEFAULT_TOL
from .core import (KinematicModel, SphericalModel, SwimmerModel, check_rotation, log_so3,
                   numeric_rank, skew)
from .criteria import _proportional, check_equal_density, normalize_spherical
from .dynamics import (ControlSignal, SignalSequence, _se3_step, _steps, reduced_coefficients,
                       reduced_rhs, simulate_kinematic, simulate_omega, simulate_reduced,
                       velocity_only)


class PlanningRefused(ValueError):
    """The model is outside the planner's scope (for example not controllable)."""


@dataclass
class PlanResult:
    control: object                  # ControlSignal or SignalSequence
    achieved: object                 # terminal state reached on replay
    errors: dict                     # position / velocity / rotation norms
    converged: bool
    kind: str
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def summary(self) -> dict:
        return {"kind": self.kind, "converged": bool(self.converged),
                "iterations": int(self.iterations), "T": float(self.control.T),
                "errors": {k: float(v) for k, v in self.errors.items()}}


# --------------------------------------------------------------------------
# Smooth profiles
# --------------------------------------------------------------------------

def _S(s):
    """Quintic smoothstep: S(0)=0, S(1)=1, first two derivatives vanish at the ends."""
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _dS(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def _intS(s):
    return s ** 6 - 3.0 * s ** 5 + 2.5 * s ** 4


def _sampled(fn, T: float, n: int) -> ControlSignal:
    """Clamped cubic spline through fn; end slopes from central differences."""
    h = 1e-6 * T
    s0 = (fn(h) - fn(0.0)) / h
    s1 = (fn(T) - fn(T - h)) / h
    return ControlSignal.sampled(fn, T, n, slopes=(s0, s1))


# --------------------------------------------------------------------------
# omega subsystem
# --------------------------------------------------------------------------

def _omega_data(model):
    rho2 = float(model.rho2)
    B2 = np.asarray(model.B2, dtype=float)
    if numeric_rank(B2, DEFAULT_TOL.rank) != 3:
        raise PlanningRefused("rank B2 < 3: omega' = -rho2 omega + B2 u is not controllable")
    return rho2, B2


def omega_path(model, w0, w1, T: float):
    """omega(t) of the continuous minimum-energy transfer w0 -> w1 in time T."""
    rho2, B2 = _omega_data(model)
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    M = B2 @ B2.T
    g = -math.expm1(-2.0 * rho2 * T) / (2.0 * rho2)
    Meta = M @ np.linalg.solve(g * M, w1 - math.exp(-rho2 * T) * w0)

    def path(t):
        return (math.exp(-rho2 * t) * w0
                - Meta * math.exp(-rho2 * (T - t)) * math.expm1(-2.0 * rho2 * t) / (2.0 * rho2))
    return path


def steer_omega(model, w0, w1, T: float, n: int = 200, dt: float | None = None) -> PlanResult:
    """Minimum-energy piecewise-constant control for omega' = -rho2 omega + B2 u.

    With n equal holds of length h, the endpoint is
    e^{-rho2 T} w0 + sum_k g_k B2 u_k with g_k = int e^{-rho2 (T - s)} over the
    k-th hold; the minimizer of sum h |u_k|^2 is u_k = (g_k / h) B2^T eta.
    """
    if not T > 0:
        raise ValueError("T must be > 0")
    rho2, B2 = _omega_data(model)
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    h = T / n
    t1 = h * np.arange(1, n + 1)
    g = np.exp(-rho2 * (T - t1)) * (-math.expm1(-rho2 * h)) / rho2
    W = float(np.sum(g * g) / h) * (B2 @ B2.T)
    eta = np.linalg.solve(W, w1 - math.exp(-rho2 * T) * w0)
    U = np.outer(g / h, B2.T @ eta)
    u = ControlSignal(np.linspace(0.0, T, n + 1), U)
    dt = dt or min(1e-3, h)
    w_end = simulate_omega(model, w0, u, dt)
    err = float(np.linalg.norm(w_end - w1))
    return PlanResult(u, w_end, {"velocity": err}, err < 1e-8, "omega",
                      diagnostics={"gramian_cond": float(np.linalg.cond(W)),
                                   "energy": u.energy(), "dt": dt})


# --------------------------------------------------------------------------
# Reduced spherical system, explicit plan
# --------------------------------------------------------------------------

def spherical_gamma(model: SphericalModel):
    """(Gamma, lam) with B2 Gamma = Id and B1 Gamma = lam Id, or None if B1 is not lam B2."""
    lam = _proportional(model.B1, model.B2, DEFAULT_TOL)
    if lam is None or numeric_rank(model.B2, DEFAULT_TOL.rank) != 3:
        return None
    return np.linalg.pinv(model.B2), lam


def _reduced_spherical_model(model: SphericalModel, Gamma) -> SwimmerModel:
    return SphericalModel(model.rho1, model.rho2, model.B1 @ Gamma,
                          model.B2 @ Gamma).to_swimmer()


def _radial(x_s, rho1, kp, tau, w_s, w_e, r_e):
    """v = w(t) x with w(0)=w_s, w(tau)=w_e and |x(tau)| = r_e."""
    r_s = float(np.linalg.norm(x_s))
    g0, g1 = kp * w_s - rho1, kp * w_e - rho1
    c = math.log(r_e / r_s) / tau - 0.5 * (g0 + g1)

    def v(t):
        s = min(max(t / tau, 0.0), 1.0)
        g = g0 * (1.0 - _S(s)) + g1 * _S(s) + c * _dS(s)
        G = tau * (g0 * (s - _intS(s)) + g1 * _intS(s) + c * _S(s))
        return (g + rho1) / kp * x_s * math.exp(G)
    return v, x_s * (r_e / r_s)


def _great_circle(x_s, u1, rho1, kp, tau):
    """Norm-preserving motion of x from direction x_s/|x_s| to u1."""
    r = float(np.linalg.norm(x_s))
    u0 = x_s / r
    cr = np.cross(u0, u1)
    sn, cs = float(np.linalg.norm(cr)), float(u0 @ u1)
    Theta = math.atan2(sn, cs)
    if sn > 1e-12:
        n = cr / sn
    else:
        a = np.eye(3)[int(np.argmin(np.abs(u0)))]
        n = np.cross(u0, a)
        n /= np.linalg.norm(n)
    p = np.cross(n, u0)

    def v(t):
        s = min(max(t / tau, 0.0), 1.0)
        th = Theta * _S(s)
        thd = Theta * _dS(s) / tau
        x = r * (math.cos(th) * u0 + math.sin(th) * p)
        alpha = thd * kp / (kp * kp + r * r)
        W = alpha * np.cross(n, x) - alpha * r * r / kp * n
        return rho1 / kp * x + W
    return v, r * (math.cos(Theta) * u0 + math.sin(Theta) * p)


def _bump_gain(rho1, tau):
    """int_0^tau e^{-rho1 (tau - t)} S'(t / tau) dt."""
    x, w = np.polynomial.legendre.leggauss(20)
    t = 0.5 * tau * (x + 1.0)
    return float(0.5 * tau * (w @ (np.exp(-rho1 * (tau - t)) * _dS(t / tau))))


def _affine_map(rmodel, v, dt):
    """x(T) = Phi x(0) + c for the reduced system (affine in x for fixed v)."""
    c = simulate_reduced(rmodel, np.zeros(3), v, dt).x[-1]
    Phi = np.column_stack([simulate_reduced(rmodel, e, v, dt).x[-1] - c for e in np.eye(3)])
    return Phi, c


def steer_spherical_reduced(model: SphericalModel, x0, x1, w0=None, w1=None,
                            tau: float = 1.0, n: int = 40, dt: float = 2e-3,
                            tol: float = 1e-9, max_refine: int = 8) -> PlanResult:
    """Explicit plan for x' = -rho1 x - v x x + k v.

    Phases: optional ramp of v from w0 to 0, optional exit from the origin,
    radial phase (v parallel to x), great-circle phase at constant |x|,
    closing radial phase, optional entry into the origin, optional ramp of v
    from 0 to w1. The ramps follow minimum-energy omega transfers. A short
    fixed-point loop on the design target absorbs spline and integrator error.
    """
    gl = spherical_gamma(model)
    if gl is None:
        raise PlanningRefused("explicit plan needs rank B2 = 3 and B1 = lam B2")
    Gamma, lam = gl
    kp = (model.rho2 - model.rho1) * lam
    if abs(kp) < 1e-12:
        raise PlanningRefused("B1 = 0: {0} x R^3 is invariant")
    rho1 = model.rho1
    rmodel = _reduced_spherical_model(model, Gamma)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    w0 = np.zeros(3) if w0 is None else np.asarray(w0, dtype=float)
    w1 = np.zeros(3) if w1 is None else np.asarray(w1, dtype=float)
    unit = SphericalModel(rho1, model.rho2, lam * np.eye(3), np.eye(3))
    scale = max(1.0, float(np.linalg.norm(x0)), float(np.linalg.norm(x1)))

    if np.allclose(x0, x1, rtol=0, atol=1e-14 * scale) and not w0.any() and not w1.any():
        v = ControlSignal.zero(tau, 3)
        return PlanResult(v, x0.copy(), {"position": 0.0}, True, "reduced-spherical",
                          diagnostics={"model": rmodel, "x0": x0, "dt": dt})

    head, tail = [], None
    xa = x0
    if w0.any():
        head.append(_sampled(omega_path(unit, w0, np.zeros(3), tau), tau, n))
        xa = simulate_reduced(rmodel, x0, head[0], dt).x[-1]
    if w1.any():
        tail = _sampled(omega_path(unit, np.zeros(3), w1, tau), tau, n)
        Phi, c = _affine_map(rmodel, tail, dt)
        target = np.linalg.solve(Phi, x1 - c)
    else:
        target = x1.copy()

    def build(xa, target):
        parts = list(head)
        d_ref = target if np.linalg.norm(target) > 1e-9 * scale else (
            xa if np.linalg.norm(xa) > 1e-9 * scale else np.array([1.0, 0.0, 0.0]))
        d_ref = d_ref / np.linalg.norm(d_ref)
        gain = _bump_gain(rho1, tau)
        x = xa
        if np.linalg.norm(x) <= 1e-9 * scale:
            # leave the origin along d_ref: v parallel to x keeps v x x = 0
            cp = 1.0 / (kp * gain)
            parts.append(_sampled(lambda t: cp * _dS(t / tau) * d_ref, tau, n))
            x = x * math.exp(-rho1 * tau) + d_ref
        end = target
        into_origin = np.linalg.norm(target) <= 1e-9 * scale
        if into_origin:
            cp = -1.0 / (kp * gain)
            end = d_ref * math.exp(rho1 * tau)   # the bump brings this to the origin
        r_e = float(np.linalg.norm(end))
        v1, x = _radial(x, rho1, kp, tau, 0.0, rho1 / kp, r_e)
        parts.append(_sampled(v1, tau, n))
        v2, x = _great_circle(x, end / r_e, rho1, kp, tau)
        parts.append(_sampled(v2, tau, n))
        v3, x = _radial(x, rho1, kp, tau, rho1 / kp, 0.0, r_e)
        parts.append(_sampled(v3, tau, n))
        if into_origin:
            parts.append(_sampled(lambda t: cp * _dS(t / tau) * end / r_e, tau, n))
        if tail is not None:
            parts.append(tail)
        return SignalSequence(parts)

    design = target.copy()
    it = 0
    while True:
        v = build(xa, design)
        xT = simulate_reduced(rmodel, x0, v, dt).x[-1]
        err = float(np.linalg.norm(xT - x1))
        if err < tol * scale or it >= max_refine:
            break
        # the achieved point is a near-identity function of the design target
        miss = xT - x1
        design = design - (np.linalg.solve(Phi, miss) if tail is not None else miss)
        it += 1
    return PlanResult(v, xT, {"position": err}, err < 1e-6, "reduced-spherical", it,
                      {"model": rmodel, "x0": x0, "dt": dt, "kprime": kp})


# --------------------------------------------------------------------------
# Reduced system, shooting
# --------------------------------------------------------------------------

def _grid(knots, dt):
    ts, hs = [], []
    for a, b in zip(knots[:-1], knots[1:]):
        n, h = _steps(float(a), float(b), dt)
        ts.extend(float(a) + i * h for i in range(n))
        hs.extend([h] * n)
    ts, hs = np.array(ts), np.array(hs)
    return ts, hs


def _rcross(a, b):
    # rows are components: a, b are 3 x batch
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _batch_reduced(coef, x0, Phi3, hs, V):
    """RK4 for a batch of spline controls; V is (batch, nknots, 3), possibly complex."""
    At, C, Bt, J = coef["At11"], coef["C"], coef["Bt"], coef["J"]
    JB = Bt @ coef["Jinv"]

    def f(x, v):
        return (At @ x - _rcross(v, x) + C @ v - _rcross(v, Bt @ v)
                - JB @ _rcross(J @ v, v))

    x = np.broadcast_to(np.asarray(x0, dtype=V.dtype)[:, None], (3, V.shape[0])).copy()
    vs = np.einsum("skn,bnd->skdb", Phi3, V)      # steps x 3 stages x 3 x batch
    for i, h in enumerate(hs):
        va, vm, vb = vs[i]
        k1 = f(x, va)
        k2 = f(x + 0.5 * h * k1, vm)
        k3 = f(x + 0.5 * h * k2, vm)
        k4 = f(x + h * k3, vb)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x.T


def steer_reduced_shooting(model: SwimmerModel, x0, x1, T: float = 2.0, v_boundary=None,
                           n_knots: int = 6, dt: float | None = None, tol: float = 1e-10,
                           max_iter: int = 200, starts: int = 4, seed: int = 0) -> PlanResult:
    """Two-point shooting for the reduced system with v(0), v(T) fixed.

    v is a not-a-knot cubic spline through n_knots equispaced values; the
    interior values are the unknowns. Jacobians come from complex-step
    differentiation of a batched RK4 (the right-hand side is polynomial).
    Failed starts are retried from seeded random interior values.
    """
    if not T > 0:
        raise ValueError("T must be > 0")
    if n_knots < 4:
        raise ValueError("need at least 4 knots")
    coef = reduced_coefficients(model)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    w0, w1 = (np.zeros(3), np.zeros(3)) if v_boundary is None else (
        np.asarray(v_boundary[0], dtype=float), np.asarray(v_boundary[1], dtype=float))
    knots = np.linspace(0.0, T, n_knots)
    dt = dt or T / ((n_knots - 1) * 60)
    basis = CubicSpline(knots, np.eye(n_knots), axis=0)
    P = 3 * (n_knots - 2)
    step = 1e-20
    E = np.eye(P).reshape(P, n_knots - 2, 3)
    scale = max(1.0, float(np.linalg.norm(x1)), float(np.linalg.norm(x0)))

    def values(p):
        V = np.empty((n_knots, 3))
        V[0], V[-1] = w0, w1
        V[1:-1] = p.reshape(n_knots - 2, 3)
        return V

    def stepper(dt):
        ts, hs = _grid(knots, dt)
        return np.stack([basis(ts), basis(ts + 0.5 * hs), basis(ts + hs)], axis=1), hs

    Phi3, hs = stepper(dt)
    Phi3f, hsf = stepper(dt / 16)

    def lm(p, target):
        def endpoint(p):
            return _batch_reduced(coef, x0, Phi3, hs, values(p)[None])[0]

        def jac(p):
            V = np.empty((P, n_knots, 3), dtype=complex)
            V[:] = values(p)
            V[:, 1:-1, :] += 1j * step * E
            X = _batch_reduced(coef, x0, Phi3, hs, V)
            return X[0].real, (X.imag / step).T

        lam, its, nr = 1e-3, 0, float("inf")
        for _ in range(max_iter):
            xT, Jm = jac(p)
            r = xT - target
            nr = float(np.linalg.norm(r))
            if not np.isfinite(nr) or nr < tol * scale:
                break
            G = Jm @ Jm.T
            accepted = False
            for _ in range(30):
                d = -Jm.T @ np.linalg.solve(G + lam * np.trace(G) / 3.0 * np.eye(3), r)
                rn = float(np.linalg.norm(endpoint(p + d) - target))
                if rn < nr:
                    p = p + d
                    lam = max(lam / 3.0, 1e-12)
                    accepted = True
                    break
                lam *= 4.0
            its += 1
            if not accepted:
                break
        return p, its, nr

    rng = np.random.default_rng(seed)
    lin = np.array([w0 + (w1 - w0) * s for s in knots[1:-1] / T]).ravel()
    total_it = 0
    best = None
    for k in range(starts):
        p = lin.copy() if k == 0 else lin + rng.normal(scale=1.0, size=P)
        p, its, nr = lm(p, x1)
        total_it += its
        # the coarse grid has an O(dt^4) endpoint bias; remove it by shifting
        # the target with the bias measured on a 16x finer grid
        target = x1
        for _ in range(4 if nr < 1e-6 * scale else 0):
            fine = _batch_reduced(coef, x0, Phi3f, hsf, values(p)[None])[0]
            if not np.all(np.isfinite(fine)) or np.linalg.norm(fine - x1) < 1e-9 * scale:
                break
            target = target - (fine - x1)
            p, its, nr = lm(p, target)
            total_it += its
        v = ControlSignal(knots, values(p), "cubic")
        xT = simulate_reduced(model, x0, v, dt / 16).x[-1]
        err = float(np.linalg.norm(xT - x1))
        if best is None or err < best[1]:
            best = (v, err, xT)
        if err < 1e-5:
            break
    v, err, xT = best
    return PlanResult(v, xT, {"position": err}, err < 1e-5, "reduced-shooting", total_it,
                      {"model": model, "x0": x0, "dt": dt / 16, "starts": k + 1})


# --------------------------------------------------------------------------
# Lifting to the velocity equation
# --------------------------------------------------------------------------

def _cubic_parts(v):
    parts = v.parts if isinstance(v, SignalSequence) else [v]
    offs = v.offsets if isinstance(v, SignalSequence) else [0.0]
    for p in parts:
        if p.mode != "cubic":
            raise ValueError("lifting needs a differentiable (cubic) v")
    return list(zip(offs, parts))


def lift_reduced_control(model: SwimmerModel, x0, v, Gamma=None, h_max: float = 0.01):
    """u = B2^{-1}(v' - A21 x - (A21 Bt + A22) v - J^{-1}(J v x v)), mapped by Gamma.

    x is integrated along v (RK4 on every sub-interval); on each spline piece
    of v the lifted u is sampled on a fine grid and interpolated by a cubic.
    """
    coef = reduced_coefficients(model)
    B2 = model.B2
    A21, A22 = model.A21, model.A22
    Bt, J, Jinv = coef["Bt"], coef["J"], coef["Jinv"]
    K = A21 @ Bt + A22
    x = np.asarray(x0, dtype=float).copy()
    out = []
    for off, p in _cubic_parts(v):
        for a, b in zip(p.knots[:-1], p.knots[1:]):
            n = max(4, int(math.ceil((b - a) / h_max)))
            h = (b - a) / n
            U = np.empty((n + 1, 3))
            for i in range(n + 1):
                t = a + i * h
                vt, dv = p(t), p.derivative(t)
                U[i] = np.linalg.solve(B2, dv - A21 @ x - K @ vt - Jinv @ np.cross(J @ vt, vt))
                if i < n:
                    k1 = reduced_rhs(coef, x, vt)
                    vm = p(t + 0.5 * h)
                    k2 = reduced_rhs(coef, x + 0.5 * h * k1, vm)
                    k3 = reduced_rhs(coef, x + 0.5 * h * k2, vm)
                    k4 = reduced_rhs(coef, x + h * k3, p(t + h))
                    x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if Gamma is not None:
                U = U @ np.asarray(Gamma).T
            out.append(ControlSignal(np.linspace(0.0, b - a, n + 1), U, "cubic"))
    return SignalSequence(out)


def _to_square(model: SwimmerModel, tol=DEFAULT_TOL):
    """(model with m = 3 and invertible B2, Gamma)."""
    if model.m == 3 and numeric_rank(model.B2, tol.rank) == 3:
        return model, None
    if numeric_rank(model.B2, tol.rank) != 3:
        raise PlanningRefused("rank B2 < 3")
    try:
        Gamma = normalize_spherical(model.B1, model.B2, tol).Gamma
    except ValueError:
        Gamma = np.linalg.pinv(model.B2)
    return model.with_B(model.B @ Gamma), Gamma


def _default_horizon(model: SwimmerModel, T: float = 2.0, c: float = 8.0) -> float:
    """Shorten the shooting horizon when the reduced drift is unstable.

    Endpoint sensitivity grows like exp(lam T) with lam the largest real
    part of the reduced drift matrix; lam T <= c keeps shooting well posed.
    """
    lam = float(np.linalg.eigvals(reduced_coefficients(model)["At11"]).real.max())
    return min(T, c / lam) if lam > 0 else T


def plan_velocity(model, z0, z1, T: float | None = None, dt: float = 1e-3,
                  tol: float = 1e-4, seed: int = 0, starts: int = 6) -> PlanResult:
    """Steer the velocity state z = (xi, omega) from z0 to z1.

    x = xi - Bt omega is steered on the reduced system with v(0) = omega0,
    v(T) = omega1, then v is lifted. Spherical bodies with B1 = lam B2 use
    the explicit plan, everything else uses shooting.
    """
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    sph = model if isinstance(model, SphericalModel) else None
    full = model.to_swimmer() if sph is not None else model
    if sph is None:
        sph = full.spherical()
    gl = spherical_gamma(sph) if sph is not None else None
    if gl is not None:
        Gamma, lam = gl
        rmodel = full.with_B(full.B @ Gamma)
        if not abs(lam) > 0:
            raise PlanningRefused("B1 = 0")
        Bt = lam * np.eye(3)
        x0, x1 = z0[:3] - Bt @ z0[3:], z1[:3] - Bt @ z1[3:]
        red = steer_spherical_reduced(sph, x0, x1, z0[3:], z1[3:])
    else:
        rmodel, Gamma = _to_square(full)
        Bt = reduced_coefficients(rmodel)["Bt"]
        x0, x1 = z0[:3] - Bt @ z0[3:], z1[:3] - Bt @ z1[3:]
        red = steer_reduced_shooting(rmodel, x0, x1, T or _default_horizon(rmodel),
                                     (z0[3:], z1[3:]), seed=seed, starts=starts)
    if not red.converged:
        return PlanResult(ControlSignal.zero(red.control.T, full.m), None,
                          {"velocity": float("inf")}, False, "velocity", red.iterations,
                          {"reduced": red})
    # refine the lift grid until the open-loop replay meets tol with margin
    h0 = min(0.01, red.control.T / 200)
    for h_max in (h0, h0 / 4, h0 / 16):
        u = lift_reduced_control(rmodel, x0, red.control, Gamma, h_max=h_max)
        dt_replay = min(dt, h_max)
        zT = velocity_only(full, z0, u, dt_replay)
        err = float(np.linalg.norm(zT - z1))
        if err < 0.1 * tol:
            break
    return PlanResult(u, zT, {"velocity": err}, err < tol, "velocity", red.iterations,
                      {"reduced": red, "Gamma": Gamma, "dt": dt_replay})


# --------------------------------------------------------------------------
# Kinematic planning on R^3 x SO(3)
# --------------------------------------------------------------------------

def _V(phi):
    p2 = float(phi @ phi)
    K = skew(phi)
    if p2 < 1e-12:
        a, b = 0.5 - p2 / 24.0, 1.0 / 6.0 - p2 / 120.0
    else:
        p = math.sqrt(p2)
        a, b = (1.0 - math.cos(p)) / p2, (p - math.sin(p)) / (p2 * p)
    return np.eye(3) + a * K + b * (K @ K)


def log_se3(dp, dR):
    """Twist (v, w) with exp of the twist equal to (dp, dR)."""
    w = log_so3(dR)
    return np.linalg.solve(_V(w), dp), w


def kinematic_error(state, goal) -> dict:
    (z, R), (z1, R1) = state, goal
    return {"position": float(np.linalg.norm(np.asarray(z) - z1)),
            "rotation": float(np.linalg.norm(np.asarray(R) - R1))}


def bracket_square(L: KinematicModel, ui, uj, eps: float) -> ControlSignal:
    """u_i, u_j, -u_i, -u_j held for eps each; net motion ~ eps^2 [X_i, X_j]."""
    ui = np.asarray(ui, dtype=float)
    uj = np.asarray(uj, dtype=float)
    return ControlSignal.piecewise([eps] * 4, np.array([ui, uj, -ui, -uj]))


def _rotation_stage(L, R0, R1, tau):
    """Hold segments realizing R0 -> R1 through S(L2 u) motions."""
    U, s, _ = np.linalg.svd(L.L2)
    r = int(np.sum(s > DEFAULT_TOL.rank * s[0])) if s[0] > 0 else 0
    L2p = np.linalg.pinv(L.L2)
    dR = R0.T @ R1
    if r == 3:
        return [tau], [L2p @ (log_so3(dR) / tau)]
    a, b = U[:, 0], U[:, 1]
    P = np.column_stack([a, b, np.cross(a, b)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        al, be, ga = Rotation.from_matrix(P.T @ dR @ P).as_euler("XYX")
    d = tau / 3.0
    return [d] * 3, [L2p @ (al * a / d), L2p @ (be * b / d), L2p @ (ga * a / d)]


def _translation_guess(L, delta, tau, rng):
    """Bracket squares whose leading-order motion adds up to delta (body frame)."""
    m = L.m
    L1, L2 = L.L1, L.L2
    Kn = _null(L2)
    dirs, prims = [], []
    for k in range(Kn.shape[1]):
        dirs.append(L1 @ Kn[:, k])
        prims.append(("line", Kn[:, k]))
    for i, j in combinations(range(m), 2):
        dirs.append(np.cross(L2[:, i], L1[:, j]) - np.cross(L2[:, j], L1[:, i]))
        prims.append(("square", (i, j)))
    D = np.column_stack(dirs) if dirs else np.zeros((3, 0))
    coef = np.linalg.lstsq(D, delta, rcond=None)[0] if D.size else np.zeros(0)
    order = np.argsort(-np.abs(coef))[:3]
    durs, vals = [], []
    nsq = max(1, len(order))
    for idx in order:
        kind, data = prims[idx]
        a = coef[idx]
        if kind == "line":
            durs.append(tau / nsq)
            vals.append(data * a / (tau / nsq))
            continue
        i, j = data
        eps = tau / (4 * nsq)
        amp = math.sqrt(abs(a)) / eps
        ui, uj = np.eye(m)[i] * amp, np.eye(m)[j] * amp
        if a < 0:
            ui, uj = uj, ui
        durs += [eps] * 4
        vals += [ui, uj, -ui, -uj]
    if not durs:
        durs, vals = [tau], [np.zeros(m)]
    # a small seeded perturbation keeps the start away from singular controls
    vals = [v + 1e-3 * rng.normal(size=m) for v in vals]
    return durs, vals


def _null(M, tol=DEFAULT_TOL.rank):
    _, s, Vt = np.linalg.svd(M)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[r:].T


def plan_kinematic(L: KinematicModel, start, goal, T: float = 1.0, tol: float = 1e-9,
                   max_iter: int = 200, seed: int = 0, starts: int = 4) -> PlanResult:
    """Piecewise-constant plan for zeta' = R L1 u, R' = R S(L2 u).

    A goal reachable along one screw motion is hit exactly by a constant
    control. Otherwise a rotation stage (one hold when rank L2 = 3, three
    holds from an a-b-a Euler split of the rotation when rank L2 = 2) is
    followed by a translation stage built from kernel motions and bracket
    squares; all hold values are then refined by Levenberg-Marquardt on the
    exact endpoint map. Success means position and rotation errors < 1e-3.
    """
    verdict = check_equal_density(L)
    if not verdict.holds:
        raise PlanningRefused(f"not controllable: {verdict.note}")
    z0, R0 = np.asarray(start[0], dtype=float), check_rotation(start[1])
    z1, R1 = np.asarray(goal[0], dtype=float), check_rotation(goal[1])
    m = L.m

    def finish(u, it, kind):
        traj = simulate_kinematic(L, (z0, R0), u)
        st = (traj.zeta[-1], traj.R[-1])
        e = kinematic_error(st, (z1, R1))
        return PlanResult(u, st, e, max(e.values()) < 1e-3, kind, it,
                          {"max_orth_defect": traj.diagnostics["max_orth_defect"]})

    if np.linalg.norm(z1 - z0) < 1e-14 and np.linalg.norm(R1 - R0) < 1e-14:
        return finish(ControlSignal.zero(T, m), 0, "kinematic-empty")
    tv, tw = log_se3(R0.T @ (z1 - z0), R0.T @ R1)
    twist = np.concatenate([tv, tw]) / T
    u = np.linalg.lstsq(L.L, twist, rcond=None)[0]
    if np.linalg.norm(L.L @ u - twist) <= 1e-12 * max(1.0, float(np.linalg.norm(twist))):
        return finish(ControlSignal.constant(T, u), 0, "kinematic-screw")

    rng = np.random.default_rng(seed)
    rd, rv = _rotation_stage(L, R0, R1, 0.5 * T)
    zr = simulate_kinematic(L, (z0, R0), ControlSignal.piecewise(rd, np.array(rv))).zeta[-1]
    td, tv_ = _translation_guess(L, R1.T @ (z1 - zr), 0.5 * T, rng)
    durs = np.array(rd + td)
    base = np.array(rv + tv_)

    def resid(vals):
        z, R = z0, R0
        for d, uu in zip(durs, vals):
            uu = uu.reshape(-1)
            z, R = _se3_step(z, R, L.L1 @ uu, L.L2 @ uu, d)
        return np.concatenate([R1.T @ (z - z1), log_so3(R1.T @ R)])

    total = 0
    best = None
    for k in range(starts):
        p = base.ravel().copy()
        if k:
            p += 0.3 * rng.normal(size=p.size) * (1.0 + np.abs(p))
        lam = 1e-3
        r = resid(p.reshape(base.shape))
        for _ in range(max_iter):
            nr = float(np.linalg.norm(r))
            if nr < tol:
                break
            h = 1e-7 * (1.0 + np.abs(p))
            Jm = np.empty((6, p.size))
            for i in range(p.size):
                q = p.copy()
                q[i] += h[i]
                Jm[:, i] = (resid(q.reshape(base.shape)) - r) / h[i]
            G = Jm @ Jm.T
            accepted = False
            for _ in range(30):
                d = -Jm.T @ np.linalg.solve(G + lam * (np.trace(G) / 6.0 + 1e-300) * np.eye(6), r)
                rn = resid((p + d).reshape(base.shape))
                if np.linalg.norm(rn) < nr:
                    p, r = p + d, rn
                    lam = max(lam / 3.0, 1e-12)
                    accepted = True
                    break
                lam *= 4.0
            total += 1
            if not accepted:
                break
        res = finish(ControlSignal.piecewise(durs, p.reshape(base.shape)), total, "kinematic")
        if best is None or res.error < best.error:
            best = res
        if best.error < 1e-6:
            break
    return best
