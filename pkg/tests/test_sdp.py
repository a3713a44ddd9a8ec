import numpy as np
import pytest

from lure_cert import sdp
from lure_cert.errors import DimensionMismatch, MissingVariable, SolverError
from lure_cert.lmi import LinearConstraint, LmiProblem, PsdConstraint, Variable


def test_svec_isometry(rng):
    for n in range(1, 6):
        X, Y = rng.normal(size=(2, n, n))
        X, Y = X + X.T, Y + Y.T
        assert sdp.svec(X) @ sdp.svec(Y) == pytest.approx(np.trace(X @ Y))
        np.testing.assert_allclose(sdp.smat(sdp.svec(X)), X)


def lyapunov_problem(A):
    n = A.shape[0]
    P = Variable("P", (n, n), symmetric=True)
    return LmiProblem(
        (P,),
        (PsdConstraint("decrease", n, lambda v: A.T @ v["P"] @ A - v["P"] + np.eye(n)),
         PsdConstraint("positivity", n, lambda v: np.eye(n) - v["P"])),
        (),
    )


def test_empty_problem_feasible():
    sol = sdp.solve_problem(LmiProblem((), (), ()))
    assert sol.status == sdp.FEASIBLE and sol.values == {}


def test_pack_unpack_roundtrip(rng):
    p = lyapunov_problem(np.diag([0.5, 0.2]))
    cp = sdp.to_conic(p)
    X = rng.normal(size=(2, 2))
    vals = {"P": X + X.T}
    np.testing.assert_allclose(cp.unpack(cp.pack(vals))["P"], vals["P"])


@pytest.mark.parametrize("solver", ["clarabel", "cvxopt"])
def test_lyapunov(solver):
    stable = sdp.solve_problem(lyapunov_problem(np.array([[0.5, 1.0], [0.0, 0.3]])),
                               sdp.SolverSettings(solver=solver))
    assert stable.feasible
    P = stable.values["P"]
    assert np.all(np.linalg.eigvalsh(P) >= 1 - 1e-7)
    unstable = sdp.solve_problem(lyapunov_problem(np.array([[1.1, 0.0], [0.0, 0.3]])),
                                 sdp.SolverSettings(solver=solver))
    assert unstable.status == sdp.INFEASIBLE


def test_contradictory_linear():
    x = Variable("x", (1,))
    p = LmiProblem((x,), (), (
        LinearConstraint("lo", 1, lambda v: 1 - v["x"]),
        LinearConstraint("hi", 1, lambda v: v["x"] - 0.0),
    ))
    assert sdp.solve_problem(p).status == sdp.INFEASIBLE


def test_equality_constraint():
    x = Variable("x", (2,))
    p = LmiProblem((x,), (), (
        LinearConstraint("eq", 1, lambda v: np.atleast_1d(v["x"].sum() - 3), equality=True),
        LinearConstraint("nonneg", 2, lambda v: -v["x"]),
    ))
    sol = sdp.solve_problem(p)
    assert sol.feasible and sol.values["x"].sum() == pytest.approx(3)


def test_residual_errors():
    p = lyapunov_problem(np.eye(2) * 0.5)
    with pytest.raises(MissingVariable):
        sdp.residuals(p, {})
    with pytest.raises(DimensionMismatch):
        sdp.residuals(p, {"P": np.eye(3)})
    rep = sdp.residuals(p, {"P": 0.5 * np.eye(2)})
    assert rep.by_label() == pytest.approx({"decrease": 0.625, "positivity": 0.5})
    assert rep.worst_label == "decrease" and not rep.passes(0.6)
    assert sdp.residuals(p, {"P": 2 * np.eye(2)}).passes(0.0)


def test_bad_shape_and_solver():
    x = Variable("x", (2,))
    bad = LmiProblem((x,), (), (LinearConstraint("c", 3, lambda v: v["x"]),))
    with pytest.raises(DimensionMismatch):
        sdp.to_conic(bad)
    with pytest.raises(SolverError):
        sdp.solve_problem(lyapunov_problem(np.eye(1) * 0.5), sdp.SolverSettings(solver="nope"))


def test_value_scale():
    assert sdp.value_scale({}) == 1.0
    assert sdp.value_scale({"a": np.array([-3.0, 1.0])}) == 4.0
