"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np


def qp_dual_fista(P, q, G, h, A=None, b=None, iters=200_000, tol=1e-12):
    """Optimal value of a strictly convex QP via accelerated projected gradient on its dual.

    The dual of ``min 1/2 x'Px + q'x  s.t.  Gx <= h, Ax = b`` is a concave
    quadratic in ``(lam >= 0, nu)``; projection onto the nonnegative orthant is
    exact, so FISTA with adaptive restart converges to the optimal value.
    """
    Pinv = np.linalg.inv(P)
    if A is None:
        A, b = np.zeros((0, len(q))), np.zeros(0)
    M = np.vstack([G, A])
    r = np.concatenate([h, b])
    mi = G.shape[0]
    Hd = M @ Pinv @ M.T
    L = np.linalg.eigvalsh(Hd).max()
    gd = M @ Pinv @ q + r

    def proj(y):
        y = y.copy()
        y[:mi] = np.maximum(y[:mi], 0.0)
        return y

    def dual(y):
        w = q + M.T @ y
        return -0.5 * w @ Pinv @ w - r @ y

    y = np.zeros(len(r))
    v = y.copy()
    t = 1.0
    prev = dual(y)
    for k in range(iters):
        grad = -(Hd @ v + gd)  # gradient of the dual (to be maximized)
        y_new = proj(v + grad / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if (y_new - y) @ (v - y_new) > 0:  # gradient restart
            t_new, v = 1.0, y_new.copy()
        else:
            v = y_new + (t - 1) / t_new * (y_new - y)
        y, t = y_new, t_new
        if k % 200 == 0:
            cur = dual(y)
            if abs(cur - prev) <= tol * (1 + abs(cur)):
                break
            prev = cur
    return dual(y)


def lp_vertex_enumeration(c, G, h, lb, ub):
    """Optimal value of a bounded LP by checking every basic solution."""
    n = len(c)
    rows = np.vstack([G, np.eye(n), -np.eye(n)])
    rhs = np.concatenate([h, ub, -lb])
    best = np.inf
    combos = np.array(list(itertools.combinations(range(len(rhs)), n)))
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        mats = rows[chunk]
        vecs = rhs[chunk]
        ok = np.abs(np.linalg.det(mats)) > 1e-10
        if not np.any(ok):
            continue
        xs = np.linalg.solve(mats[ok], vecs[ok][..., None])[..., 0]
        feas = np.all(xs @ rows.T <= rhs + 1e-9 * (1 + np.abs(rhs)), axis=1)
        if np.any(feas):
            best = min(best, float(np.min(xs[feas] @ c)))
    return best
