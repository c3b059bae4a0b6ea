"""Dense convex QP and LP solvers with KKT certificates.

The QP solver eliminates equality constraints with a null-space basis and runs
a Mehrotra predictor-corrector interior-point method on the reduced problem,
followed by an active-set polish step.  The LP solver is a two-phase tableau
simplex (Bland's rule), so optimal LP solutions are vertices.

Both return a :class:`SolveResult`; failures are reported through ``status``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-7
MAX_ITER = 200


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max-iterations"


def _as_matrix(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    return a


def _as_vector(v, n: int) -> np.ndarray:
    if v is None:
        return np.zeros(n)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass
class QuadraticProgram:
    """``min 1/2 x'Px + q'x  s.t.  Ax = b, Gx <= h``."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    check_psd: bool = True

    def __post_init__(self):
        self.q = _as_vector(self.q, 0)
        n = self.q.size
        self.P = np.asarray(self.P, dtype=float).reshape(n, n)
        self.A = _as_matrix(self.A, n)
        self.b = _as_vector(self.b, self.A.shape[0])
        self.G = _as_matrix(self.G, n)
        self.h = _as_vector(self.h, self.G.shape[0])
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if self.b.size != self.A.shape[0] or self.h.size != self.G.shape[0]:
            raise ValueError("right-hand sides do not match constraint rows")
        scale = max(1.0, float(np.max(np.abs(self.P)))) if n else 1.0
        if np.max(np.abs(self.P - self.P.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("cost matrix is not symmetric")
        if self.check_psd and n:
            try:
                np.linalg.cholesky(self.P + 1e-12 * scale * np.eye(n))
            except np.linalg.LinAlgError:
                if np.linalg.eigvalsh(self.P)[0] < -1e-9 * scale:
                    raise ValueError("cost matrix is not positive semidefinite") from None

    @property
    def n(self) -> int:
        return self.q.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class LinearProgram:
    """``min c'x  s.t.  Gx <= h, lb <= x <= ub`` (bounds may be infinite)."""

    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = _as_vector(self.c, 0)
        n = self.c.size
        self.G = _as_matrix(self.G, n)
        self.h = _as_vector(self.h, self.G.shape[0])
        self.lb = np.full(n, -np.inf) if self.lb is None else _as_vector(self.lb, n).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else _as_vector(self.ub, n).copy()
        if self.G.shape[1] != n or self.h.size != self.G.shape[0]:
            raise ValueError("inconsistent LP dimensions")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds must have one entry per variable")

    @property
    def n(self) -> int:
        return self.c.size

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    objective: float
    iterations: int
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class KKTResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def kkt_residuals(problem: QuadraticProgram | LinearProgram, res: SolveResult) -> KKTResiduals:
    """Scaled KKT residuals of ``res`` for ``problem``.

    Each residual is divided by ``1 + `` the magnitude of the terms that make it
    up, so the numbers are comparable across problem scalings.
    """
    x = res.x
    if isinstance(problem, QuadraticProgram):
        grad = problem.P @ x + problem.q
        A, b = problem.A, problem.b
        lo = hi = np.zeros(problem.n)
        lb = np.full(problem.n, -np.inf)
        ub = np.full(problem.n, np.inf)
    else:
        grad = problem.c.copy()
        A, b = np.zeros((0, problem.n)), np.zeros(0)
        lo = res.lower_duals if res.lower_duals.size else np.zeros(problem.n)
        hi = res.upper_duals if res.upper_duals.size else np.zeros(problem.n)
        lb, ub = problem.lb, problem.ub
    G, h = problem.G, problem.h
    lam = res.ineq_duals if res.ineq_duals.size else np.zeros(G.shape[0])
    nu = res.eq_duals if res.eq_duals.size else np.zeros(A.shape[0])

    terms = [grad, G.T @ lam, A.T @ nu, lo, hi]
    stat = grad + G.T @ lam + A.T @ nu - lo + hi
    stat_scale = 1.0 + max(float(np.max(np.abs(t), initial=0.0)) for t in terms)

    slack = h - G @ x
    viol = [np.maximum(-slack, 0.0), np.abs(A @ x - b)]
    with np.errstate(invalid="ignore"):
        viol.append(np.maximum(np.where(np.isfinite(lb), lb - x, 0.0), 0.0))
        viol.append(np.maximum(np.where(np.isfinite(ub), x - ub, 0.0), 0.0))
    primal_scale = 1.0 + max(float(np.max(np.abs(h), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    primal = max(float(np.max(v, initial=0.0)) for v in viol) / primal_scale

    dual = float(max(np.max(-lam, initial=0.0), np.max(-lo, initial=0.0), np.max(-hi, initial=0.0), 0.0))
    comp_terms = [np.abs(lam * slack)]
    for mult, gap, bound in ((lo, x - lb, lb), (hi, ub - x, ub)):
        fin = np.isfinite(bound)
        comp_terms.append(np.abs(mult[fin] * gap[fin]))
        if np.any(mult[~fin] != 0):  # a multiplier on an absent bound
            comp_terms.append(np.array([np.inf]))
    comp = max(float(np.max(t, initial=0.0)) for t in comp_terms) / stat_scale
    return KKTResiduals(float(np.max(np.abs(stat), initial=0.0)) / stat_scale, primal, dual, comp)


# --------------------------------------------------------------------------- QP


def _nullspace(A: np.ndarray, b: np.ndarray):
    """Particular solution and null-space basis of ``Ax = b`` (None if inconsistent)."""
    m, n = A.shape
    if m == 0:
        return np.zeros(n), np.eye(n)
    Q, R = np.linalg.qr(A.T, mode="complete")
    d = np.abs(np.diag(R[:m, :m]))
    if d.size and d.min() > 1e-10 * max(d.max(), 1.0):
        R1 = R[:m, :m]
        x_p = Q[:, :m] @ sla.solve_triangular(R1, b, trans="T")
        Z = Q[:, m:]
    else:
        U, S, Vt = np.linalg.svd(A)
        r = int(np.sum(S > 1e-10 * max(S.max(initial=0.0), 1.0)))
        x_p = Vt[:r].T @ ((U[:, :r].T @ b) / S[:r])
        Z = Vt[r:].T
    if np.max(np.abs(A @ x_p - b), initial=0.0) > 1e-9 * (1.0 + np.max(np.abs(b), initial=0.0)):
        return None, None
    return x_p, Z


def _solve_psd(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return sla.cho_solve(sla.cho_factor(K, check_finite=False), rhs, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        return np.linalg.lstsq(K, rhs, rcond=None)[0]


def _ipm(H, c, G, h, max_iter, tol=1e-10):
    """Mehrotra predictor-corrector for ``min 1/2 z'Hz + c'z  s.t. Gz <= h``.

    Returns (status, z, lam, iterations).
    """
    n, m = c.size, h.size
    reg = 1e-13 * max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if m == 0:
        K = H + reg * np.eye(n)
        z = np.linalg.lstsq(K, -c, rcond=None)[0]
        if np.max(np.abs(H @ z + c), initial=0.0) > 1e-8 * (1 + np.max(np.abs(c), initial=0.0)):
            return Status.UNBOUNDED, z, np.zeros(0), 1
        return Status.OPTIMAL, z, np.zeros(0), 1

    # initial point (least squares on the perturbed KKT system)
    K0 = H + G.T @ G + reg * np.eye(n)
    z = _solve_psd(K0, -c + G.T @ h)
    s = h - G @ z
    # Mehrotra's starting heuristic with a least-squares dual estimate
    lam = -G @ _solve_psd(G.T @ G + reg * np.eye(n), H @ z + c)
    s = s + max(0.0, -1.5 * s.min())
    lam = lam + max(0.0, -1.5 * lam.min())
    s = np.maximum(s, 1e-8)
    lam = np.maximum(lam, 1e-8)
    sl = float(s @ lam)
    s = s + 0.5 * sl / lam.sum()
    lam = lam + 0.5 * sl / s.sum()
    cn = 1.0 + np.max(np.abs(c), initial=0.0)
    hn = 1.0 + np.max(np.abs(h), initial=0.0)

    best = (np.inf, z, lam)
    stall = 0
    for it in range(1, max_iter + 1):
        rd = H @ z + c + G.T @ lam
        rp = G @ z + s - h
        mu = float(s @ lam) / m
        merit = max(np.max(np.abs(rp)) / hn, np.max(np.abs(rd)) / cn, mu / (1.0 + abs(float(c @ z))))
        if merit <= tol:
            return Status.OPTIMAL, z, lam, it
        if merit < 0.5 * best[0]:
            best, stall = (merit, z, lam), 0
        else:
            stall += 1
        # the Newton system degrades near the solution; settle for the best
        # iterate once progress stops (the active-set polish follows)
        if stall >= 5 and best[0] <= 1e-7:
            return Status.OPTIMAL, best[1], best[2], it

        lam_norm = np.max(lam)
        if lam_norm > 1e9 * cn:
            lh = lam / lam_norm
            if float(h @ lh) < -1e-7 and np.max(np.abs(G.T @ lh)) < 1e-8 * max(1.0, -float(h @ lh)) * 1e3:
                return Status.INFEASIBLE, z, lam, it
        z_norm = np.max(np.abs(z))
        if z_norm > 1e9 * hn:
            dz_ = z / z_norm
            cd = float(c @ dz_)
            if cd < 0 and np.max(np.abs(H @ dz_)) < 1e-6 * -cd and np.max(G @ dz_) < 1e-6 * -cd:
                return Status.UNBOUNDED, z, lam, it

        w = lam / s
        K = H + (G.T * w) @ G
        K[np.diag_indices_from(K)] += reg
        try:
            factor = sla.cho_factor(K, check_finite=False)
            solve = lambda r: sla.cho_solve(factor, r, check_finite=False)  # noqa: E731
        except (np.linalg.LinAlgError, sla.LinAlgError):
            K[np.diag_indices_from(K)] += 1e-9 * max(1.0, float(np.max(np.abs(np.diag(K)))))
            Kinv = np.linalg.pinv(K)
            solve = lambda r: Kinv @ r  # noqa: E731

        def direction(rc):
            dz = solve(-rd - G.T @ (w * rp - rc / s))
            dlam = w * (G @ dz + rp) - rc / s
            ds = -(rc + s * dlam) / lam
            return dz, ds, dlam

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        dz, ds, dlam = direction(s * lam)
        a_aff = min(max_step(s, ds), max_step(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, ds, dlam = direction(s * lam + ds * dlam - sigma * mu)
        a = 0.99 * min(max_step(s, ds), max_step(lam, dlam))
        z = z + a * dz
        s = np.maximum(s + a * ds, 1e-300)
        lam = np.maximum(lam + a * dlam, 1e-300)
    if best[0] <= 1e-7:
        return Status.OPTIMAL, best[1], best[2], max_iter
    return Status.MAX_ITERATIONS, z, lam, max_iter


def _polish(H, c, G, h, z, lam):
    """Re-solve the equality-constrained KKT system on the detected active set."""
    s = h - G @ z
    active = np.flatnonzero(lam > s)
    n, k = c.size, active.size
    Ga = G[active]
    KKT = np.zeros((n + k, n + k))
    KKT[:n, :n] = H
    KKT[:n, n:] = Ga.T
    KKT[n:, :n] = Ga
    rhs = np.concatenate([-c, h[active]])
    delta = 1e-10
    reg = KKT.copy()
    reg[:n, :n] += delta * np.eye(n)
    reg[n:, n:] -= delta * np.eye(k)
    try:
        lu = sla.lu_factor(reg, check_finite=False)
    except (ValueError, sla.LinAlgError):
        return None
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    for _ in range(5):  # iterative refinement against the unregularized system
        sol = sol + sla.lu_solve(lu, rhs - KKT @ sol, check_finite=False)
    if not np.all(np.isfinite(sol)):
        return None
    lam_p = np.zeros_like(lam)
    lam_p[active] = sol[n:]
    return sol[:n], lam_p


def _reduced_residual(H, c, G, h, z, lam):
    rd = np.max(np.abs(H @ z + c + G.T @ lam), initial=0.0) / (1 + np.max(np.abs(c), initial=0.0))
    slack = h - G @ z
    rp = np.max(np.maximum(-slack, 0), initial=0.0) / (1 + np.max(np.abs(h), initial=0.0))
    comp = np.max(np.abs(lam * slack), initial=0.0)
    return max(rd, rp, comp, np.max(np.maximum(-lam, 0), initial=0.0))


def solve_qp(qp: QuadraticProgram, max_iter: int = MAX_ITER, tol: float = 1e-10) -> SolveResult:
    """Solve a convex QP; the status field carries failures.

    ``tol`` is the interior-point stopping tolerance; the active-set polish
    that follows usually recovers full accuracy from a looser one.
    """
    n = qp.n
    x_p, Z = _nullspace(qp.A, qp.b)
    if x_p is None:
        return SolveResult(Status.INFEASIBLE, np.full(n, np.nan), np.nan, 0)

    H = Z.T @ qp.P @ Z
    H = 0.5 * (H + H.T)
    c = Z.T @ (qp.P @ x_p + qp.q)
    G = qp.G @ Z
    h = qp.h - qp.G @ x_p

    # row equilibration; rows that vanish in the null space are constant checks
    norms = np.linalg.norm(G, axis=1)
    keep = norms > 1e-12 * max(1.0, float(norms.max(initial=0.0)))
    if np.any(h[~keep] < -1e-9 * (1.0 + np.abs(qp.h[~keep]))):
        return SolveResult(Status.INFEASIBLE, np.full(n, np.nan), np.nan, 0)
    Gs = G[keep] / norms[keep, None]
    hs = h[keep] / norms[keep]

    status, z, lam_s, iters = _ipm(H, c, Gs, hs, max_iter, tol)
    if status is not Status.OPTIMAL:
        x = x_p + Z @ z
        return SolveResult(status, x, qp.objective(x) if np.all(np.isfinite(x)) else np.nan, iters)

    polished = _polish(H, c, Gs, hs, z, lam_s) if hs.size else None
    if polished is not None:
        zp, lp = polished
        if _reduced_residual(H, c, Gs, hs, zp, lp) < _reduced_residual(H, c, Gs, hs, z, lam_s):
            z, lam_s = zp, lp

    lam = np.zeros(qp.G.shape[0])
    lam[keep] = np.maximum(lam_s, 0.0) / norms[keep]
    x = x_p + Z @ z
    nu = np.zeros(qp.A.shape[0])
    if nu.size:
        r = qp.P @ x + qp.q + qp.G.T @ lam
        nu = _solve_psd(qp.A @ qp.A.T, -(qp.A @ r))
    return SolveResult(Status.OPTIMAL, x, qp.objective(x), iters, eq_duals=nu, ineq_duals=lam)


# --------------------------------------------------------------------------- LP


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])


def _simplex_phase(T, basis, cost_row, allowed, max_iter, tol=1e-10):
    """Run Bland-rule simplex on tableau ``T`` (rhs in the last column).

    ``cost_row`` indexes the objective row; ``allowed`` masks entering columns.
    Returns (status, iterations).
    """
    m = len(basis)
    for it in range(max_iter):
        rc = T[cost_row, :-1]
        cand = np.flatnonzero((rc < -tol) & allowed)
        if cand.size == 0:
            return Status.OPTIMAL, it
        col = int(cand[0])
        colv = T[:m, col]
        pos = colv > tol
        if not np.any(pos):
            return Status.UNBOUNDED, it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
    return Status.MAX_ITERATIONS, max_iter


def solve_lp(lp: LinearProgram, max_iter: int = MAX_ITER) -> SolveResult:
    """Solve an LP with the two-phase simplex method."""
    n = lp.n
    lb, ub = lp.lb, lp.ub
    if np.any(lb > ub):
        return SolveResult(Status.INFEASIBLE, np.full(n, np.nan), np.nan, 0)

    # x = shift + T y with y >= 0
    cols, shift = [], np.zeros(n)
    kinds = []  # per original variable: list of (column, sign)
    extra_rows, extra_rhs = [], []
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            kinds.append([(len(cols), 1.0)])
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_rows.append(len(cols) - 1)
                extra_rhs.append(ub[j] - lb[j])
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            kinds.append([(len(cols), -1.0)])
            cols.append((j, -1.0))
        else:
            kinds.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
            cols.extend([(j, 1.0), (j, -1.0)])
    ny = len(cols)
    Tmap = np.zeros((n, ny))
    for k, (j, sgn) in enumerate(cols):
        Tmap[j, k] = sgn

    Ay = lp.G @ Tmap
    by = lp.h - lp.G @ shift
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        E[np.arange(len(extra_rows)), extra_rows] = 1.0
        Ay = np.vstack([Ay, E])
        by = np.concatenate([by, extra_rhs])
    m = Ay.shape[0]
    cy = Tmap.T @ lp.c

    sign = np.where(by < 0, -1.0, 1.0)
    n_art = int(np.sum(sign < 0))
    ncol = ny + m + n_art
    T = np.zeros((m + 2, ncol + 1))
    T[:m, :ny] = Ay * sign[:, None]
    T[:m, ny:ny + m] = np.diag(sign)
    T[:m, -1] = by * sign
    basis = []
    art_rows = np.flatnonzero(sign < 0)
    for i in range(m):
        basis.append(ny + i)
    for k, i in enumerate(art_rows):
        T[i, ny + m + k] = 1.0
        basis[i] = ny + m + k
    T[m, :ny] = cy
    # phase-one objective: sum of artificials, expressed in non-basic terms
    T[m + 1, ny + m:ny + m + n_art] = 1.0
    for i in art_rows:
        T[m + 1] -= T[i]

    total = 0
    allowed = np.ones(ncol, dtype=bool)
    if n_art:
        status, it = _simplex_phase(T, basis, m + 1, allowed, max_iter)
        total += it
        if status is Status.MAX_ITERATIONS:
            return SolveResult(status, np.full(n, np.nan), np.nan, total)
        if -T[m + 1, -1] > 1e-9 * (1.0 + np.max(np.abs(by), initial=0.0)):
            return SolveResult(Status.INFEASIBLE, np.full(n, np.nan), np.nan, total)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= ny + m:
                nz = np.flatnonzero(np.abs(T[i, :ny + m]) > 1e-9)
                if nz.size:
                    _pivot(T, i, int(nz[0]))
                    basis[i] = int(nz[0])
        allowed[ny + m:] = False

    status, it = _simplex_phase(T, basis, m, allowed, max_iter - total)
    total += it
    if status is not Status.OPTIMAL:
        return SolveResult(status, np.full(n, np.nan), np.nan, total)

    y = np.zeros(ncol)
    for i, bi in enumerate(basis):
        y[bi] = T[i, -1]
    x = shift + Tmap @ y[:ny]

    # reduced costs of the slack columns are the row multipliers
    rc = T[m, :ncol]
    row_mult = np.maximum(rc[ny:ny + m], 0.0)
    lam = row_mult[:lp.G.shape[0]]
    upper = np.zeros(n)
    lower = np.zeros(n)
    for r, k in enumerate(extra_rows):
        upper[cols[k][0]] += row_mult[lp.G.shape[0] + r]
    for j, entries in enumerate(kinds):
        for k, sgn in entries:
            if sgn > 0 and np.isfinite(lb[j]):
                lower[j] += max(rc[k], 0.0)
            elif sgn < 0 and not np.isfinite(lb[j]) and np.isfinite(ub[j]):
                upper[j] += max(rc[k], 0.0)
    return SolveResult(Status.OPTIMAL, x, lp.objective(x), total,
                       ineq_duals=lam, lower_duals=lower, upper_duals=upper)
