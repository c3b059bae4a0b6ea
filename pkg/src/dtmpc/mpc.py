"""Trajectory optimizers for dynamic tube MPC and fixed-tube MPC.

Both problems are discretized with trapezoidal collocation over ``N`` knots
(states ``theta, theta_dot`` and, for the dynamic tube, ``Phi, Omega``) with
piecewise-constant input ``u`` and bandwidth ``alpha``.  They are solved by
sequential convex programming: each pass linearizes the constraints about a
dynamically consistent trajectory, solves a trust-region QP in scaled
deviation variables, then rolls the nonlinear discretized dynamics forward
from the new controls so the next iterate is consistent again.

State and input inequality rows are softened by one shared elastic slack with
a large linear penalty, so every subproblem is feasible; a returned plan is
reported infeasible when its true constraint violation stays above tolerance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import convex
from .ancillary import (
    ControllerGains,
    InfeasibleTightening,
    ReferencePoint,
    UncertaintyModel,
    ancillary_input_bound,
    speed_error_bound,
)
from .plant import PendulumParams

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TubeLimit:
    """Piecewise-constant cap ``Omega_max(theta)``: bands ``(lo, hi, value)`` over a default."""

    default: float
    bands: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not self.default > 0 or any(not v > 0 for _, _, v in self.bands):
            raise ValueError("tube caps must be positive")

    def __call__(self, theta: float, pad: float = 0.0) -> float:
        """Tightest cap over ``[theta - pad, theta + pad]``."""
        caps = [v for lo, hi, v in self.bands if lo - pad <= theta <= hi + pad]
        return min(caps, default=self.default) if caps else self.default

    @property
    def min_value(self) -> float:
        return min([self.default] + [v for _, _, v in self.bands])


@dataclass(frozen=True)
class ScpSettings:
    max_iter: int = 30
    trust_init: float = 0.5
    trust_max: float = 2.0
    trust_min: float = 1e-6
    shrink: float = 0.5
    grow: float = 1.5
    step_tol: float = 1e-4
    viol_tol: float = 1e-5
    backoff: float = 2e-6
    slack_penalty: float = 1e5
    max_corrections: int = 3
    cost_tol: float = 1e-6  # relative predicted decrease that counts as stationary


@dataclass(frozen=True)
class OcpConfig:
    """Discretized optimal control problem shared by both planners."""

    nominal: PendulumParams
    model: UncertaintyModel = field(default_factory=UncertaintyModel)
    gains: ControllerGains = field(default_factory=ControllerGains)
    omega_max: TubeLimit = field(default_factory=lambda: TubeLimit(math.radians(7.5)))
    horizon: int = 45
    dt: float = 0.010
    Q: tuple[float, float] = (10.0, 0.1)  # diagonal
    Qf: tuple[float, float] = (10.0, 0.1)
    R: float = 1.0
    M: float = 0.01
    u_max: float = 2.0
    du_max: float = 4.5
    theta_dot_max: float = 15.0
    target: float = 5.0 * math.pi
    target_rate: float = 0.0
    cap_pad: float = 0.1  # rad, Omega_max is taken as the min over theta +- pad
    scp: ScpSettings = field(default_factory=ScpSettings)

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if min(self.Q) < 0 or min(self.Qf) < 0 or self.R < 0 or self.M < 0:
            raise ValueError("weights must be non-negative")
        if not (self.u_max > 0 and self.du_max > 0 and self.theta_dot_max > 0):
            raise ValueError("limits must be positive")

    @property
    def target_input(self) -> float:
        p = self.nominal
        return p.gravity_torque * math.sin(self.target) / p.lever_arm

    def hover_input(self, theta: float) -> float:
        return self.nominal.gravity_torque * math.sin(theta) / self.nominal.lever_arm

    def with_model(self, model: UncertaintyModel) -> "OcpConfig":
        return replace(self, model=model)


class PlanStatus(str, enum.Enum):
    CONVERGED = "converged"
    NO_CONVERGENCE = "no-convergence"
    INFEASIBLE = "infeasible"
    HOLD = "hold"


@dataclass(frozen=True)
class FixedTube:
    radius: float  # Omega_max
    phi: float
    alpha: float
    delta_bar: float
    speed_bound: float  # tightened |theta_dot| bound for the plan
    input_bound: float  # tightened |u| bound for the plan


@dataclass
class PlannedTrajectory:
    """Knot arrays of a plan starting at ``t0``; ``u`` and ``alpha`` hold over each interval."""

    t0: float
    dt: float
    theta: np.ndarray
    theta_dot: np.ndarray
    phi: np.ndarray
    radius: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    speed_bound: np.ndarray  # per knot
    input_bound: np.ndarray  # per interval
    model: UncertaintyModel
    status: PlanStatus = PlanStatus.CONVERGED
    iterations: int = 0
    trust_radius: float = 0.0
    violation: float = 0.0
    cost: float = 0.0
    fixed_tube: FixedTube | None = None

    @property
    def horizon(self) -> int:
        return len(self.u)

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon * self.dt

    @property
    def usable(self) -> bool:
        return self.status is not PlanStatus.INFEASIBLE

    def _locate(self, t: float) -> tuple[int, float]:
        tau = (t - self.t0) / self.dt
        if tau < 0:
            tau = 0.0
        k = min(int(tau), self.horizon - 1)
        return k, min(tau - k, 1.0) * self.dt

    def reference(self, t: float) -> ReferencePoint:
        """Plan point at time ``t``: quadratic angle, linear speed, Phi and Omega, held u and alpha.

        Past the horizon the final knot is held at rest-rate extrapolation
        (only reached when replanning has failed).
        """
        if t > self.t_end:
            return ReferencePoint(theta=float(self.theta[-1]), theta_dot=float(self.theta_dot[-1]),
                                  u=float(self.u[-1]), alpha=float(self.alpha[-1]), phi=float(self.phi[-1]),
                                  radius=float(self.radius[-1]), theta_ddot=None)
        k, s = self._locate(t)
        h = self.dt
        w0, w1 = self.theta_dot[k], self.theta_dot[k + 1]
        a = (w1 - w0) / h
        f = s / h
        return ReferencePoint(
            theta=float(self.theta[k] + w0 * s + 0.5 * a * s * s),
            theta_dot=float(w0 + a * s),
            u=float(self.u[k]),
            alpha=float(self.alpha[k]),
            phi=float((1 - f) * self.phi[k] + f * self.phi[k + 1]),
            radius=float((1 - f) * self.radius[k] + f * self.radius[k + 1]),
            theta_ddot=float(a),
        )

    def control_at(self, t: float) -> tuple[float, float]:
        """Held ``(u, alpha)`` on the interval containing ``t``."""
        if t >= self.t_end:
            return float(self.u[-1]), float(self.alpha[-1])
        k, _ = self._locate(t)
        return float(self.u[k]), float(self.alpha[k])


# ------------------------------------------------------------------ layout

class _Layout:
    """Index map of the stacked decision vector."""

    def __init__(self, N: int, dynamic: bool):
        self.N, self.n, self.dynamic = N, N + 1, dynamic
        n = self.n
        self.th = np.arange(0, n)
        self.om = np.arange(n, 2 * n)
        off = 2 * n
        if dynamic:
            self.ph = np.arange(off, off + n)
            self.rd = np.arange(off + n, off + 2 * n)
            off += 2 * n
        self.u = np.arange(off, off + N)
        off += N
        if dynamic:
            self.al = np.arange(off, off + N)
            off += N
        self.slack = off
        self.size = off + 1
        self.nx = 4 if dynamic else 2

    def states(self, z):
        cols = [z[self.th], z[self.om]]
        if self.dynamic:
            cols += [z[self.ph], z[self.rd]]
        return np.stack(cols, axis=1)

    def state_index(self):
        cols = [self.th, self.om] + ([self.ph, self.rd] if self.dynamic else [])
        return np.stack(cols, axis=1)


@dataclass
class _Context:
    """Per-knot quantities frozen at the linearization trajectory."""

    region: np.ndarray  # regional disturbance level in the Phi drive
    cap: np.ndarray  # Omega_max at each knot
    x0: np.ndarray  # fixed initial state
    u_prev: float | None
    alpha_prev: float | None
    tube: FixedTube | None = None


def _context(theta: np.ndarray, cfg: OcpConfig, x0, u_prev, alpha_prev, tube=None) -> _Context:
    region = np.array([cfg.model.region_bound(t) for t in theta])
    cap = np.array([cfg.omega_max(t, cfg.cap_pad) for t in theta])
    return _Context(region, cap, np.asarray(x0, float), u_prev, alpha_prev, tube)


# ------------------------------------------------------------ model terms

def _flow(X: np.ndarray, u: np.ndarray, alpha: np.ndarray, region: np.ndarray, cfg: OcpConfig):
    """Continuous-time right-hand side and its partials at rows of ``X``.

    Returns ``F`` (k x nx), ``dF/dx`` (k x nx x nx), ``dF/du`` and ``dF/dalpha`` (k x nx).
    """
    p = cfg.nominal
    I, L, G = p.inertia, p.lever_arm, p.gravity_torque
    ch = cfg.model.drag_nominal
    th, om = X[:, 0], X[:, 1]
    k, nx = X.shape
    F = np.zeros((k, nx))
    Fx = np.zeros((k, nx, nx))
    Fu = np.zeros((k, nx))
    Fa = np.zeros((k, nx))
    F[:, 0] = om
    F[:, 1] = (L * u - ch * np.abs(om) * om - G * np.sin(th)) / I
    Fx[:, 0, 1] = 1.0
    Fx[:, 1, 0] = -G * np.cos(th) / I
    Fx[:, 1, 1] = -2.0 * ch * np.abs(om) / I
    Fu[:, 1] = L / I
    if nx == 4:
        lam, eta = cfg.gains.lam, cfg.gains.eta
        c = cfg.model.drag_error / I
        ph, rd = X[:, 2], X[:, 3]
        v = np.abs(om) + ph + lam * rd
        F[:, 2] = -alpha * ph + c * v * v + region + cfg.model.disturbance + eta
        F[:, 3] = -lam * rd + ph
        Fx[:, 2, 1] = 2.0 * c * v * np.sign(om)
        Fx[:, 2, 2] = -alpha + 2.0 * c * v
        Fx[:, 2, 3] = 2.0 * c * v * lam
        Fx[:, 3, 2] = 1.0
        Fx[:, 3, 3] = -lam
        Fa[:, 2] = -ph
    return F, Fx, Fu, Fa


def _input_reserve(rd, ph, alpha, cfg: OcpConfig):
    """Ancillary input bound and its partials in ``(Omega, Phi, alpha)``."""
    p = cfg.nominal
    I, L, G = p.inertia, p.lever_arm, p.gravity_torque
    lam, ch, vmax = cfg.gains.lam, cfg.model.drag_nominal, cfg.theta_dot_max
    k = I / L
    e = ph + lam * rd
    val = k * (G / I * 2.0 * np.sin(rd / 2.0) + ch / I * e * 2.0 * vmax + lam * e + alpha * ph)
    d_e = k * (ch / I * 2.0 * vmax + lam)
    d_rd = k * G / I * np.cos(rd / 2.0) + d_e * lam
    d_ph = d_e + k * alpha
    d_al = k * ph
    return val, d_rd, d_ph, d_al


# ------------------------------------------------------------ constraints

def constraint_values(z: np.ndarray, lay: _Layout, cfg: OcpConfig, ctx: _Context):
    """Nonlinear constraints: equalities ``c(z) = 0`` and inequalities ``g(z) <= 0``.

    Also returns a boolean mask of the soft (slack-relaxed) inequality rows.
    """
    return _constraints(z, lay, cfg, ctx, jac=False)


def constraint_jacobians(z: np.ndarray, lay: _Layout, cfg: OcpConfig, ctx: _Context):
    return _constraints(z, lay, cfg, ctx, jac=True)


def _constraints(z, lay: _Layout, cfg: OcpConfig, ctx: _Context, jac: bool):
    N, n, nx, h = lay.N, lay.n, lay.nx, cfg.dt
    X = lay.states(z)
    U = z[lay.u]
    A = z[lay.al] if lay.dynamic else np.zeros(N)
    idx = lay.state_index()

    # --- equalities: initial state then trapezoid defects
    Fa_, Fxa, Fua, Faa = _flow(X[:-1], U, A, ctx.region[:-1], cfg)
    Fb_, Fxb, Fub, Fab = _flow(X[1:], U, A, ctx.region[1:], cfg)
    defect = X[1:] - X[:-1] - 0.5 * h * (Fa_ + Fb_)
    eq = np.concatenate([X[0] - ctx.x0, defect.ravel()])
    Jeq = None
    if jac:
        Jeq = np.zeros((nx + N * nx, lay.size))
        Jeq[np.arange(nx), idx[0]] = 1.0
        eye = np.eye(nx)
        for k in range(N):
            r = slice(nx + k * nx, nx + (k + 1) * nx)
            Jeq[r, idx[k]] = -eye - 0.5 * h * Fxa[k]
            Jeq[r, idx[k + 1]] = eye - 0.5 * h * Fxb[k]
            Jeq[r, lay.u[k]] = -0.5 * h * (Fua[k] + Fub[k])
            if lay.dynamic:
                Jeq[r, lay.al[k]] = -0.5 * h * (Faa[k] + Fab[k])

    # --- inequalities
    rows, soft, jrows = [], [], []

    def add(vals, is_soft, jblock=None):
        rows.append(np.atleast_1d(vals))
        soft.append(np.full(np.size(vals), is_soft))
        if jac:
            jrows.append(jblock)

    knots = np.arange(1, n)
    lam = cfg.gains.lam
    if lay.dynamic:
        om, ph, rd = z[lay.om], z[lay.ph], z[lay.rd]
        e = ph + lam * rd
        for sgn in (1.0, -1.0):
            J = None
            if jac:
                J = np.zeros((len(knots), lay.size))
                J[np.arange(len(knots)), lay.om[knots]] = sgn
                J[np.arange(len(knots)), lay.ph[knots]] = 1.0
                J[np.arange(len(knots)), lay.rd[knots]] = lam
            add(sgn * om[knots] + e[knots] - cfg.theta_dot_max, True, J)
        J = None
        if jac:
            J = np.zeros((len(knots), lay.size))
            J[np.arange(len(knots)), lay.rd[knots]] = 1.0
        add(rd[knots] - ctx.cap[knots], True, J)
        if jac:
            J = -J
        add(-rd[knots], True, J)
        # input tightening at both ends of every interval
        for end in (0, 1):
            kk = np.arange(N) + end
            val, d_rd, d_ph, d_al = _input_reserve(rd[kk], ph[kk], A, cfg)
            for sgn in (1.0, -1.0):
                J = None
                if jac:
                    J = np.zeros((N, lay.size))
                    r = np.arange(N)
                    J[r, lay.u] = sgn
                    J[r, lay.rd[kk]] = d_rd
                    J[r, lay.ph[kk]] = d_ph
                    J[r, lay.al] = d_al
                add(sgn * U + val - cfg.u_max, True, J)
        # bandwidth box and rate
        g = cfg.gains
        for sgn, bound in ((1.0, g.alpha_max), (-1.0, -g.alpha_min)):
            J = None
            if jac:
                J = np.zeros((N, lay.size))
                J[np.arange(N), lay.al] = sgn
            add(sgn * A - bound, False, J)
        _rate_rows(A, lay.al, ctx.alpha_prev, g.dalpha_max * h, lay, add, jac)
    else:
        tube = ctx.tube
        om = z[lay.om]
        for sgn in (1.0, -1.0):
            J = None
            if jac:
                J = np.zeros((len(knots), lay.size))
                J[np.arange(len(knots)), lay.om[knots]] = sgn
            add(sgn * om[knots] - tube.speed_bound, True, J)
        for sgn in (1.0, -1.0):
            J = None
            if jac:
                J = np.zeros((N, lay.size))
                J[np.arange(N), lay.u] = sgn
            add(sgn * U - tube.input_bound, True, J)
    _rate_rows(U, lay.u, ctx.u_prev, cfg.du_max * h, lay, add, jac)

    g_all = np.concatenate(rows)
    soft_mask = np.concatenate(soft)
    Jin = np.vstack(jrows) if jac else None
    if jac:
        return eq, g_all, soft_mask, Jeq, Jin
    return eq, g_all, soft_mask


def _rate_rows(v, cols, prev, step, lay: _Layout, add, jac):
    m = len(v)
    diff = v[1:] - v[:-1]
    for sgn in (1.0, -1.0):
        J = None
        if jac:
            J = np.zeros((m - 1, lay.size))
            r = np.arange(m - 1)
            J[r, cols[1:]] = sgn
            J[r, cols[:-1]] = -sgn
        add(sgn * diff - step, False, J)
    if prev is not None:
        for sgn in (1.0, -1.0):
            J = None
            if jac:
                J = np.zeros((1, lay.size))
                J[0, cols[0]] = sgn
            add(sgn * (v[0] - prev) - step, False, J)


# ------------------------------------------------------------------ cost

def _cost_matrices(lay: _Layout, cfg: OcpConfig):
    """Quadratic cost ``0.5 z'Pz + q'z + c0`` of the discretized objective."""
    P = np.zeros((lay.size, lay.size))
    q = np.zeros(lay.size)
    c0 = 0.0
    h = cfg.dt
    tgt = (cfg.target, cfg.target_rate)

    def add_sq(cols, w, ref):
        nonlocal c0
        cols = np.atleast_1d(cols)
        w = np.broadcast_to(w, cols.shape)
        P[cols, cols] += 2.0 * w
        q[cols] += -2.0 * w * ref
        c0 += float(np.sum(w * ref * ref))

    N = lay.N
    for i, cols in enumerate((lay.th, lay.om)):
        add_sq(cols[:N], h * cfg.Q[i], tgt[i])
        add_sq(cols[N], cfg.Qf[i], tgt[i])
    add_sq(lay.u, h * cfg.R, cfg.target_input)
    if lay.dynamic:
        add_sq(lay.al, h * cfg.M, cfg.gains.alpha_min)
    return P, q, c0


def _cost(z, P, q, c0):
    return float(0.5 * z @ P @ z + q @ z + c0)


# ------------------------------------------------------------ scaling

def _scales(lay: _Layout, cfg: OcpConfig) -> np.ndarray:
    s = np.ones(lay.size)
    s[lay.th] = 1.0
    s[lay.om] = 5.0
    s[lay.u] = 0.5
    if lay.dynamic:
        s[lay.ph] = 0.5
        s[lay.rd] = 0.05
        s[lay.al] = 20.0
    return s


# ------------------------------------------------------------ rollout

def rollout(x0, u: np.ndarray, alpha: np.ndarray | None, cfg: OcpConfig) -> np.ndarray:
    """Integrate the implicit trapezoid scheme from ``x0`` under held ``u`` (and ``alpha``).

    Returns the knot states, ``(N+1) x 2`` for the fixed tube or ``(N+1) x 4``
    for the dynamic tube.  The regional drive is evaluated at each knot angle.
    Each step solves the mechanical pair first, then the tube pair, by Newton.
    """
    p = cfg.nominal
    I, L, G = p.inertia, p.lever_arm, p.gravity_torque
    ch = cfg.model.drag_nominal
    hh = 0.5 * cfg.dt
    dynamic = alpha is not None
    nx = 4 if dynamic else 2
    N = len(u)
    X = np.zeros((N + 1, nx))
    X[0] = np.asarray(x0, float)[:nx]
    th, om = float(X[0, 0]), float(X[0, 1])
    if dynamic:
        lam, eta = cfg.gains.lam, cfg.gains.eta
        c = cfg.model.drag_error / I
        const = cfg.model.disturbance + eta
        ph, rd = float(X[0, 2]), float(X[0, 3])
        reg = cfg.model.region_bound(th)

    def accel(t, w, uk):
        return (L * uk - ch * abs(w) * w - G * math.sin(t)) / I

    for k in range(N):
        uk = float(u[k])
        fa = accel(th, om, uk)
        # mechanical pair
        t1, w1 = th + 2 * hh * om, om + 2 * hh * fa
        for _ in range(30):
            r0 = t1 - th - hh * (om + w1)
            r1 = w1 - om - hh * (fa + accel(t1, w1, uk))
            j10 = hh * G * math.cos(t1) / I
            j11 = 1.0 + hh * 2.0 * ch * abs(w1) / I
            # [[1, -hh], [j10, j11]] [dt, dw] = -[r0, r1]
            det = j11 + hh * j10
            dt_ = (-r0 * j11 - hh * r1) / det
            dw = (-r1 + j10 * r0) / det
            t1 += dt_
            w1 += dw
            if abs(dt_) + abs(dw) <= 1e-13 * (1.0 + abs(t1) + abs(w1)):
                break
        if dynamic:
            ak = float(alpha[k])
            v = abs(om) + ph + lam * rd
            ga = -ak * ph + c * v * v + reg + const
            ha = -lam * rd + ph
            reg1 = cfg.model.region_bound(t1)
            p1, q1 = ph + 2 * hh * ga, rd + 2 * hh * ha
            for _ in range(30):
                v1 = abs(w1) + p1 + lam * q1
                r0 = p1 - ph - hh * (ga - ak * p1 + c * v1 * v1 + reg1 + const)
                r1 = q1 - rd - hh * (ha - lam * q1 + p1)
                a00 = 1.0 - hh * (-ak + 2.0 * c * v1)
                a01 = -hh * 2.0 * c * v1 * lam
                a10 = -hh
                a11 = 1.0 + hh * lam
                det = a00 * a11 - a01 * a10
                dp = (-r0 * a11 + a01 * r1) / det
                dq = (-r1 * a00 + a10 * r0) / det
                p1 += dp
                q1 += dq
                if abs(dp) + abs(dq) <= 1e-13 * (1.0 + abs(p1) + abs(q1)):
                    break
            ph, rd, reg = p1, q1, reg1
            X[k + 1, 2], X[k + 1, 3] = ph, rd
        th, om = t1, w1
        X[k + 1, 0], X[k + 1, 1] = th, om
    return X


# ------------------------------------------------------------ tubes

def steady_tube(cfg: OcpConfig, alpha: float, theta: float = 0.0, theta_dot: float = 0.0) -> tuple[float, float]:
    """Equilibrium ``(Phi, Omega)`` of the tube filters at fixed ``alpha`` and reference state."""
    lam = cfg.gains.lam
    c = cfg.model.drag_error / cfg.nominal.inertia
    b = cfg.model.region_bound(theta) + cfg.model.disturbance + cfg.gains.eta
    w = abs(theta_dot)
    # alpha Phi = c (w + 2 Phi)^2 + b, using Omega = Phi / lam
    qa, qb, qc = 4.0 * c, 4.0 * c * w - alpha, c * w * w + b
    if qa == 0.0:
        phi = -qc / qb
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            raise InfeasibleTightening("no steady boundary layer at this bandwidth")
        phi = (-qb - math.sqrt(disc)) / (2.0 * qa)
    return phi, phi / lam


def tmpc_fixed_tube(cfg: OcpConfig, delta_bar: float, radius: float | None = None,
                    speed_cap: float | None = None, alpha_floor: float = 0.0) -> FixedTube:
    """Constant tube for a given worst-case model error ``delta_bar`` (rad/s^2).

    ``alpha_floor`` raises a bandwidth below it; the layer and the radius
    then shrink to that bandwidth's steady state.  The closed-form value is
    used when the floor is zero.
    """
    g = cfg.gains
    om = cfg.omega_max.min_value if radius is None else radius
    if not om > 0:
        raise ValueError("tube radius must be positive")
    drive = delta_bar + cfg.model.disturbance + g.eta
    phi = g.lam * om
    alpha = drive / phi
    if alpha > g.alpha_max:
        raise InfeasibleTightening(
            f"tube too tight for bandwidth limit: alpha={alpha:.6g} > alpha_max={g.alpha_max}", value=alpha)
    if alpha < alpha_floor:
        alpha = alpha_floor
        phi = drive / alpha
        om = phi / g.lam
    e = speed_error_bound(phi, om, g.lam)
    speed = cfg.theta_dot_max - e
    if speed <= 0:
        raise InfeasibleTightening("fixed tube leaves no speed authority")
    if speed_cap is not None:
        speed = min(speed, speed_cap)
    reserve = ancillary_input_bound(om, phi, alpha, e, cfg.theta_dot_max, cfg.nominal, g.lam,
                                    cfg.model.drag_nominal)
    ubound = cfg.u_max - reserve
    if ubound <= 0:
        raise InfeasibleTightening("fixed tube leaves no input authority")
    return FixedTube(radius=om, phi=phi, alpha=alpha, delta_bar=delta_bar, speed_bound=speed, input_bound=ubound)


def tmpc_design(cfg: OcpConfig) -> FixedTube:
    """Fastest fixed tube whose worst-case drive fits the bandwidth and input limits.

    The tube radius is the tightest cap anywhere, the anticipated model error
    covers the regional bound plus the drag bound up to the planned speed
    limit (plus the tube's own speed error), and the remaining input must
    still be able to hold the arm against gravity.
    """
    g = cfg.gains
    om = cfg.omega_max.min_value
    e = speed_error_bound(g.lam * om, om, g.lam)
    region = cfg.model.regions.max_region_level if cfg.model.regions is not None else 0.0
    c = cfg.model.drag_error / cfg.nominal.inertia
    hold = cfg.nominal.gravity_torque / cfg.nominal.lever_arm

    def tube(v):
        return tmpc_fixed_tube(cfg, region + c * (v + e) ** 2, om, speed_cap=v, alpha_floor=g.alpha_min)

    def ok(v):
        try:
            return tube(v).input_bound >= hold
        except InfeasibleTightening:
            return False

    hi = cfg.theta_dot_max - e
    if hi <= 0 or not ok(0.0):
        raise InfeasibleTightening("no fixed tube satisfies the bandwidth and input limits")
    if ok(hi):
        best = tube(hi)
        # a floored bandwidth thins the tube, which frees speed margin
        v = cfg.theta_dot_max - speed_error_bound(best.phi, best.radius, g.lam)
        if v > hi and ok(v):
            best = tube(v)
        return best
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return tube(lo)


# ------------------------------------------------------------ plans

def hold_plan(theta: float, cfg: OcpConfig, t0: float = 0.0, dynamic: bool = True,
              tube: FixedTube | None = None) -> PlannedTrajectory:
    """Constant equilibrium plan at ``theta`` used before the first solve."""
    N = cfg.horizon
    u = cfg.hover_input(theta)
    if dynamic:
        alpha = cfg.gains.alpha_min
        phi, rad = steady_tube(cfg, alpha, theta)
    else:
        tube = tube or tmpc_design(cfg)
        alpha, phi, rad = tube.alpha, tube.phi, tube.radius
    ones = np.ones(N + 1)
    plan = PlannedTrajectory(
        t0=t0, dt=cfg.dt, theta=theta * ones, theta_dot=0.0 * ones, phi=phi * ones, radius=rad * ones,
        u=u * np.ones(N), alpha=alpha * np.ones(N), speed_bound=np.zeros(N + 1), input_bound=np.zeros(N),
        model=cfg.model, status=PlanStatus.HOLD, fixed_tube=None if dynamic else tube)
    _fill_bounds(plan, cfg)
    return plan


def _fill_bounds(plan: PlannedTrajectory, cfg: OcpConfig) -> None:
    if plan.fixed_tube is not None:
        plan.speed_bound[:] = plan.fixed_tube.speed_bound
        plan.input_bound[:] = plan.fixed_tube.input_bound
        return
    lam = cfg.gains.lam
    plan.speed_bound[:] = cfg.theta_dot_max - (plan.phi + lam * plan.radius)
    ends = []
    for end in (0, 1):
        kk = np.arange(plan.horizon) + end
        val, *_ = _input_reserve(plan.radius[kk], plan.phi[kk], plan.alpha, cfg)
        ends.append(cfg.u_max - val)
    plan.input_bound[:] = np.minimum(*ends)


def _warm_controls(prev: PlannedTrajectory, t0: float, cfg: OcpConfig):
    N, h = cfg.horizon, cfg.dt
    u = np.empty(N)
    a = np.empty(N)
    for k in range(N):
        u[k], a[k] = prev.control_at(t0 + (k + 0.5) * h)
    return u, a


def _pack(lay: _Layout, X, u, alpha) -> np.ndarray:
    z = np.zeros(lay.size)
    z[lay.th], z[lay.om] = X[:, 0], X[:, 1]
    if lay.dynamic:
        z[lay.ph], z[lay.rd] = X[:, 2], X[:, 3]
        z[lay.al] = alpha
    z[lay.u] = u
    return z


def build_subproblem(z_bar: np.ndarray, lay: _Layout, cfg: OcpConfig, ctx: _Context, trust: float,
                     cost=None, margin=None) -> tuple[convex.QuadraticProgram, np.ndarray]:
    """Trust-region QP in scaled deviations ``y`` with ``z = z_bar + S y``.

    The last entry of ``y`` is the elastic slack itself (not a deviation).
    Soft rows are tightened by ``margin`` (scalar or per row; default: the
    configured backoff) to absorb linearization error.  Returns the QP and
    the scale vector ``S``.
    """
    qp, S, _ = _assemble(z_bar, lay, cfg, ctx, trust, cost, margin)
    return qp, S


def _assemble(z_bar, lay: _Layout, cfg: OcpConfig, ctx: _Context, trust: float, cost, margin):
    P, q, _ = cost if cost is not None else _cost_matrices(lay, cfg)
    S = _scales(lay, cfg)
    S[lay.slack] = 1.0
    eq, g, soft, Jeq, Jin = constraint_jacobians(z_bar, lay, cfg, ctx)
    st = cfg.scp
    nv = lay.size
    Ps = S[:, None] * P * S[None, :]
    qs = S * (P @ z_bar + q)
    qs[lay.slack] = st.slack_penalty
    Ps[lay.slack, :] = 0.0
    Ps[:, lay.slack] = 0.0
    Ps = 0.5 * (Ps + Ps.T)
    Aeq = Jeq * S[None, :]
    Aeq[:, lay.slack] = 0.0
    Gin = Jin * S[None, :]
    Gin[:, lay.slack] = 0.0
    lin = (g, Gin.copy())
    Gin[:, lay.slack] = np.where(soft, -1.0, 0.0)
    m = st.backoff if margin is None else margin
    hin = -g - np.where(soft, m, 0.0)
    free = np.ones(nv, bool)
    free[lay.slack] = False
    eye = np.eye(nv)[free]
    G = np.vstack([Gin, eye, -eye, -np.eye(nv)[[lay.slack]]])
    h = np.concatenate([hin, np.full(2 * free.sum(), trust), [0.0]])
    return convex.QuadraticProgram(Ps, qs, Aeq, -eq, G, h, check_psd=False), S, lin


@dataclass(frozen=True)
class ScpStep:
    """One SCP candidate: its true violation and cost, and whether it was accepted."""

    iteration: int
    trust: float
    step: float
    violation: float
    cost: float
    accepted: bool


# violations below this are numerical noise and are not counted
VIOLATION_FLOOR = 5e-6


def raw_violation(z, lay, cfg, ctx) -> float:
    """Largest violation of the nonlinear constraints at ``z``."""
    eq, g, _ = constraint_values(z, lay, cfg, ctx)
    return float(max(np.max(np.abs(eq)), np.max(g, initial=0.0), 0.0))


def _violation(z, lay, cfg, ctx) -> float:
    return max(raw_violation(z, lay, cfg, ctx) - VIOLATION_FLOOR, 0.0)


def _solve(x0, cfg: OcpConfig, prev: PlannedTrajectory | None, t0: float, dynamic: bool,
           tube: FixedTube | None, trace: list | None = None) -> PlannedTrajectory:
    N = cfg.horizon
    lay = _Layout(N, dynamic)
    st = cfg.scp
    if prev is not None:
        u, a = _warm_controls(prev, t0, cfg)
        u_prev, a_prev = prev.control_at(t0)
        a_prev = a_prev if dynamic else None
    else:
        u = np.full(N, cfg.hover_input(x0[0]))
        a = np.full(N, cfg.gains.alpha_min)
        u_prev = a_prev = None
    if not dynamic:
        a = None
    if dynamic:
        a = np.clip(a, cfg.gains.alpha_min, cfg.gains.alpha_max)
    X = rollout(x0, u, a, cfg)
    z = _pack(lay, X, u, a)
    cost_terms = _cost_matrices(lay, cfg)
    ctx = _context(z[lay.th], cfg, x0[:lay.nx], u_prev, a_prev, tube)
    viol = _violation(z, lay, cfg, ctx)
    J = _cost(z, *cost_terms)
    trust = st.trust_init
    shift = None  # second-order correction of the soft rows at the current point
    corrected = 0
    status = PlanStatus.NO_CONVERGENCE
    it = 0
    for it in range(1, st.max_iter + 1):
        qp, S, (g_bar, G_lin) = _assemble(z, lay, cfg, ctx, trust, cost_terms, shift)
        res = convex.solve_qp(qp)
        if res.status is not convex.Status.OPTIMAL:
            trust *= st.shrink
            shift, corrected = None, 0
            if trust < st.trust_min:
                break
            continue
        y = res.x
        step = float(np.max(np.abs(y[:-1])))
        cand = z + S * y
        u_new = cand[lay.u]
        a_new = None
        if dynamic:
            a_new = np.clip(cand[lay.al], cfg.gains.alpha_min, cfg.gains.alpha_max)
        Xn = rollout(x0, u_new, a_new, cfg)
        zn = _pack(lay, Xn, u_new, a_new)
        ctx_n = _context(zn[lay.th], cfg, x0[:lay.nx], u_prev, a_prev, tube)
        viol_n = _violation(zn, lay, cfg, ctx_n)
        J_n = _cost(zn, *cost_terms)
        accept = viol_n <= viol and (viol_n < viol or J_n <= J + 1e-9 * (1.0 + abs(J)))
        if trace is not None:
            trace.append(ScpStep(it, trust, step, raw_violation(zn, lay, cfg, ctx_n), J_n, accept))
        if accept:
            z, ctx, viol, J = zn, ctx_n, viol_n, J_n
            trust = min(trust * st.grow, st.trust_max)
            shift, corrected = None, 0
        elif corrected < st.max_corrections and J_n < J:
            # retry at the same point with rows shifted by their linearization error
            _, g_n, _ = constraint_values(zn, lay, cfg, ctx_n)
            err = np.maximum(g_n - (g_bar + G_lin @ y), 0.0)
            shift = (st.backoff if shift is None else shift) + err
            corrected += 1
        else:
            trust *= st.shrink
            shift, corrected = None, 0
        stalled = accept and -res.objective <= st.cost_tol * (1.0 + abs(J))
        if (step < st.step_tol or stalled) and viol + VIOLATION_FLOOR < st.viol_tol:
            status = PlanStatus.CONVERGED
            break
        if trust < st.trust_min:
            break
    viol = raw_violation(z, lay, cfg, ctx)
    if viol > st.viol_tol:
        status = PlanStatus.INFEASIBLE
    X = lay.states(z)
    ones = np.ones(N + 1)
    plan = PlannedTrajectory(
        t0=t0, dt=cfg.dt, theta=X[:, 0].copy(), theta_dot=X[:, 1].copy(),
        phi=X[:, 2].copy() if dynamic else tube.phi * ones,
        radius=X[:, 3].copy() if dynamic else tube.radius * ones,
        u=z[lay.u].copy(), alpha=z[lay.al].copy() if dynamic else tube.alpha * np.ones(N),
        speed_bound=np.zeros(N + 1), input_bound=np.zeros(N), model=cfg.model, status=status,
        iterations=it, trust_radius=trust, violation=viol, cost=J, fixed_tube=tube)
    _fill_bounds(plan, cfg)
    return plan


def solve_dtmpc(x0, cfg: OcpConfig, prev: PlannedTrajectory | None = None, t0: float = 0.0,
                trace: list | None = None) -> PlannedTrajectory:
    """Dynamic-tube plan from ``x0 = (theta, theta_dot, Phi, Omega)``.

    ``prev`` supplies the warm start and the input and bandwidth values the
    new plan must connect to at ``t0`` under the rate limits.  If ``trace``
    is a list, one ``ScpStep`` per candidate is appended to it.
    """
    x0 = np.asarray(x0, float)
    if x0.shape != (4,):
        raise ValueError("dynamic-tube initial state is (theta, theta_dot, Phi, Omega)")
    if not x0[2] > 0 or x0[3] < 0:
        raise ValueError("initial tube must have Phi > 0 and Omega >= 0")
    return _solve(x0, cfg, prev, t0, True, None, trace)


def solve_tmpc(x0, cfg: OcpConfig, prev: PlannedTrajectory | None = None, t0: float = 0.0,
               tube: FixedTube | None = None, trace: list | None = None) -> PlannedTrajectory:
    """Fixed-tube plan from ``x0 = (theta, theta_dot)``."""
    x0 = np.asarray(x0, float)[:2]
    tube = tube or tmpc_design(cfg)
    return _solve(x0, cfg, prev, t0, False, tube, trace)


def plan_initial_state(prev: PlannedTrajectory, t0: float) -> np.ndarray:
    """Point on ``prev`` where the next plan starts (the handoff state)."""
    r = prev.reference(t0)
    return np.array([r.theta, r.theta_dot, r.phi, r.radius])
