import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtmpc.convex import LinearProgram, QuadraticProgram, Status, kkt_residuals, solve_lp, solve_qp
from oracles.convex_oracles import lp_vertex_enumeration, qp_dual_fista


def random_qp(rng, n, m, p_eq=0, strict=True):
    B = rng.normal(size=(n, n))
    P = B @ B.T + (0.5 if strict else 0.0) * np.eye(n)
    q = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)
    h = G @ x0 + rng.uniform(0.1, 1.0, m)
    A = b = None
    if p_eq:
        A = rng.normal(size=(p_eq, n))
        b = A @ x0
    return QuadraticProgram(P, q, A, b, G, h)


def random_lp(rng, n, m):
    c = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    lb = -rng.uniform(0.5, 2.0, n)
    ub = rng.uniform(0.5, 2.0, n)
    x0 = rng.uniform(lb * 0.5, ub * 0.5)
    h = G @ x0 + rng.uniform(0.0, 1.0, m)
    return LinearProgram(c, G, h, lb, ub)


def test_active_constraint_example():
    res = solve_qp(QuadraticProgram(np.array([[2.0]]), np.zeros(1), G=np.array([[-1.0]]), h=np.array([-1.0])))
    assert res.status is Status.OPTIMAL
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    assert res.objective == pytest.approx(1.0, abs=1e-9)


def test_unconstrained_matches_linear_solve():
    rng = np.random.default_rng(1)
    B = rng.normal(size=(6, 6))
    H = B @ B.T + np.eye(6)
    c = rng.normal(size=6)
    res = solve_qp(QuadraticProgram(H, c))
    np.testing.assert_allclose(res.x, -np.linalg.solve(H, c), atol=1e-10)


@pytest.mark.parametrize("seed", range(50))
def test_qp_matches_projected_gradient_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    m = int(rng.integers(1, 41))
    p = int(rng.integers(0, min(3, n)))
    qp = random_qp(rng, n, m, p)
    res = solve_qp(qp)
    assert res.status is Status.OPTIMAL
    ref = qp_dual_fista(qp.P, qp.q, qp.G, qp.h, qp.A if p else None, qp.b if p else None)
    assert res.objective == pytest.approx(ref, rel=1e-5, abs=1e-7)
    assert kkt_residuals(qp, res).max() <= 1e-7


@pytest.mark.parametrize("seed", range(40))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 31 if n <= 3 else 9))
    lp = random_lp(rng, n, m)
    res = solve_lp(lp)
    assert res.status is Status.OPTIMAL
    ref = lp_vertex_enumeration(lp.c, lp.G, lp.h, lp.lb, lp.ub)
    assert res.objective == pytest.approx(ref, abs=1e-8 * (1 + abs(ref)))
    assert kkt_residuals(lp, res).max() <= 1e-7


def test_box_lp_examples():
    lo = solve_lp(LinearProgram(np.array([1.0]), np.zeros((0, 1)), np.zeros(0), np.array([0.0]), np.array([2.0])))
    hi = solve_lp(LinearProgram(np.array([-1.0]), np.zeros((0, 1)), np.zeros(0), np.array([0.0]), np.array([2.0])))
    assert lo.x[0] == pytest.approx(0.0) and hi.x[0] == pytest.approx(2.0)


def test_infeasible_and_unbounded_status():
    G = np.array([[1.0], [-1.0]])
    qp = QuadraticProgram(np.eye(1), np.zeros(1), G=G, h=np.array([-1.0, -1.0]))
    assert solve_qp(qp).status is Status.INFEASIBLE
    qp_unb = QuadraticProgram(np.zeros((1, 1)), np.array([-1.0]), G=np.array([[-1.0]]), h=np.array([0.0]))
    assert solve_qp(qp_unb).status is Status.UNBOUNDED
    lp_inf = LinearProgram(np.array([1.0]), G, np.array([-1.0, -1.0]), np.array([-5.0]), np.array([5.0]))
    assert solve_lp(lp_inf).status is Status.INFEASIBLE
    lp_unb = LinearProgram(np.array([-1.0]), np.zeros((0, 1)), np.zeros(0), np.array([0.0]), np.array([np.inf]))
    assert solve_lp(lp_unb).status is Status.UNBOUNDED


def test_rejects_inconsistent_or_indefinite_input():
    with pytest.raises(ValueError):
        QuadraticProgram(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticProgram(-np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(2), np.zeros(3))


@given(seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
def test_scaling_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    qp = random_qp(rng, 8, 12, 1)
    a = solve_qp(qp)
    b = solve_qp(QuadraticProgram(scale * qp.P, scale * qp.q, qp.A, qp.b, qp.G, qp.h))
    np.testing.assert_allclose(a.x, b.x, atol=1e-8)


@given(seed=st.integers(0, 10_000))
def test_kkt_certificate_on_degenerate_qps(seed):
    # rank-deficient cost with equalities still yields a certified optimum
    rng = np.random.default_rng(seed)
    n = 10
    B = rng.normal(size=(n, 3))
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.ones(2 * n)
    A = rng.normal(size=(2, n))
    qp = QuadraticProgram(B @ B.T, rng.normal(size=n), A, np.zeros(2), G, h)
    res = solve_qp(qp)
    assert res.status is Status.OPTIMAL
    assert kkt_residuals(qp, res).max() <= 1e-7


def test_deterministic():
    rng = np.random.default_rng(5)
    qp = random_qp(rng, 10, 20, 2)
    a, b = solve_qp(qp), solve_qp(qp)
    assert np.array_equal(a.x, b.x)
