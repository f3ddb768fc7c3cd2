import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optbranch import socp
from optbranch.socp import ConicProblem, ProblemFormatError, SolverSettings, solve

from socp_instances import infeasible, known_optimum, unbounded


def _in_cone(u, dims, tol=1e-9):
    l = dims["l"]
    if l and u[:l].min() < -tol:
        return False
    off = l
    for d in dims["q"]:
        if u[off] - np.linalg.norm(u[off + 1 : off + d]) < -tol:
            return False
        off += d
    return True


def test_orthant_bound():
    r = solve(ConicProblem(c=[1.0], G=[[-1.0]], h=[0.0], dims={"l": 1}))
    assert r.status == socp.OPTIMAL
    assert abs(r.x[0]) < 1e-7


def test_cone_norm():
    # min t with (t, 3, 4) in the cone
    r = solve(ConicProblem(c=[1, 0, 0], G=-np.eye(3), h=np.zeros(3), dims={"q": [3]}, A=[[0, 1, 0], [0, 0, 1]], b=[3, 4]))
    assert r.status == socp.OPTIMAL
    assert r.x[0] == pytest.approx(5.0, abs=1e-7)


def test_rotated_cone_via_standard():
    # min t s.t. t * 1 >= x^2 with x = 2, written as (t+1, 2x, t-1) in Q3
    G = -np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 0.0]])
    h = np.array([1.0, 0.0, -1.0])
    r = solve(ConicProblem(c=[1.0, 0.0], G=G, h=h, dims={"q": [3]}, A=[[0.0, 1.0]], b=[2.0]))
    assert r.x[0] == pytest.approx(4.0, abs=1e-7)


@pytest.mark.parametrize("seed", range(100))
def test_known_optimum(seed):
    prob, value = known_optimum(np.random.default_rng(seed))
    r = solve(prob)
    assert r.status == socp.OPTIMAL
    assert abs(r.primal_objective - value) <= 1e-6 * max(1.0, abs(value))
    assert _in_cone(r.s, prob.dims) and _in_cone(r.z, prob.dims)


@pytest.mark.parametrize("seed", range(10))
def test_infeasible_certificate(seed):
    prob = infeasible(np.random.default_rng(seed))
    r = solve(prob)
    assert r.status == socp.INFEASIBLE
    y, z = r.y, r.z
    assert prob.b @ y + prob.h @ z == pytest.approx(-1.0, abs=1e-8)
    assert np.abs(prob.G.T @ z + prob.A.T @ y).max() < 1e-7
    assert _in_cone(z, prob.dims)


@pytest.mark.parametrize("seed", range(10))
def test_unbounded_certificate(seed):
    prob = unbounded(np.random.default_rng(seed))
    r = solve(prob)
    assert r.status == socp.UNBOUNDED
    x, s = r.x, r.s
    assert prob.c @ x == pytest.approx(-1.0, abs=1e-8)
    assert np.abs(prob.G @ x + s).max() < 1e-7
    assert _in_cone(s, prob.dims)


def test_matches_reference_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(123)
    for _ in range(10):
        prob, _ = known_optimum(rng)
        xv = cp.Variable(prob.n)
        slack = prob.h - prob.G @ xv
        l = prob.dims["l"]
        cons = [slack[:l] >= 0] if l else []
        off = l
        for d in prob.dims["q"]:
            cons.append(cp.SOC(slack[off], slack[off + 1 : off + d]))
            off += d
        if prob.A.shape[0]:
            cons.append(prob.A @ xv == prob.b)
        ref = cp.Problem(cp.Minimize(prob.c @ xv), cons)
        ref.solve(solver="CLARABEL")
        assert solve(prob).primal_objective == pytest.approx(ref.value, abs=1e-6 * max(1.0, abs(ref.value)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_duality_gap_closes(seed):
    prob, _ = known_optimum(np.random.default_rng(seed))
    r = solve(prob)
    assert r.status == socp.OPTIMAL
    assert abs(r.primal_objective - r.dual_objective) <= 1e-6 * max(1.0, abs(r.primal_objective))


def test_format_errors():
    with pytest.raises(ProblemFormatError):
        ConicProblem(c=[1.0], G=[[1.0], [1.0]], h=[0.0], dims={"l": 1})
    with pytest.raises(ProblemFormatError):
        ConicProblem(c=[1.0], G=[[1.0]], h=[0.0], dims={"q": [1]})
    with pytest.raises(ValueError):
        SolverSettings(tol_gap=0.0)


def test_json_round_trip():
    prob, value = known_optimum(np.random.default_rng(7))
    back = ConicProblem.from_json(prob.to_json())
    assert np.array_equal(back.G, prob.G) and back.dims == prob.dims
    assert solve(back).primal_objective == pytest.approx(value, abs=1e-6)


def test_iteration_limit_reported():
    prob, _ = known_optimum(np.random.default_rng(3))
    r = solve(prob, SolverSettings(max_iterations=1))
    assert r.status in (socp.MAX_ITER, socp.NUMERICAL_FAILURE)
