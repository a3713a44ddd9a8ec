import numpy as np
import pytest

from lure_cert import lti
from lure_cert.errors import DimensionMismatch
from lure_cert.lifting import build_lifted, f_matrices, simulate_lifted, transform_lifted

from conftest import random_stable_tf


def plant_sim(ss, x0, u):
    x = np.array(x0, dtype=float)
    ys = []
    for ut in u:
        ys.append((ss.C @ x).item() + ss.D * ut)
        x = ss.A @ x + ss.B[:, 0] * ut
    return np.array(ys)


def test_ell_zero():
    ss = lti.ss_from_matrices([[0.5, 0.1], [0.0, 0.3]], [1, 2], [3, 4], 0.7)
    ls = build_lifted(ss, 0)
    np.testing.assert_array_equal(ls.bA, ss.A)
    np.testing.assert_array_equal(ls.bB, ss.B)
    np.testing.assert_array_equal(ls.bC, np.vstack([ss.C, np.zeros((1, 2))]))
    np.testing.assert_array_equal(ls.bD, [[0.7], [1.0]])
    assert ls.F.shape == (0, 1) and ls.Fplus.shape == (0, 1)


def test_f_matrices():
    F, Fp = f_matrices(1)
    np.testing.assert_array_equal(F, [[1, 0]])
    np.testing.assert_array_equal(Fp, [[0, 1]])
    F, Fp = f_matrices(2)
    np.testing.assert_array_equal(F, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(Fp, [[0, 1, 0], [0, 0, 1]])


@pytest.mark.parametrize("ell", [0, 1, 2, 4])
def test_index_shift(ell, rng):
    F, Fp = f_matrices(ell)
    f = rng.normal(size=30)
    for t in range(ell, 29):
        np.testing.assert_array_equal(F @ f[t + 1 - ell:t + 2], Fp @ f[t - ell:t + 1])


def test_example6_dimension():
    G6 = lti.tf_from_coeffs([2, 0.92], [1, -0.5, 0])
    ls = build_lifted(lti.loop_shift(G6, 0.91), 2)
    assert ls.N == 4 and ls.bC.shape == (6, 4) and ls.bD.shape == (6, 1)


@pytest.mark.parametrize("ell", [1, 3, 5])
def test_delay_consistency(ell, rng):
    ss = lti.tf_to_ss(random_stable_tf(rng, 3))
    ss = lti.ss_from_matrices(ss.A, ss.B, ss.C, 0.4)
    x0 = rng.normal(size=ss.n)
    u = rng.normal(size=20)
    y = plant_sim(ss, x0, u)
    ls = build_lifted(ss, ell)
    # x_{t-ell} at t = ell is x0 and the history holds u_0..u_{ell-1}
    xi0 = np.concatenate([x0, u[:ell]])
    _, out = simulate_lifted(ls, xi0, u[ell:])
    for i, t in enumerate(range(ell, 20)):
        np.testing.assert_allclose(out[i, :ell + 1], y[t - ell:t + 1], atol=1e-12)
        np.testing.assert_allclose(out[i, ell + 1:], u[t - ell:t + 1], atol=1e-12)


def test_transfer_function_identity(rng):
    G = random_stable_tf(rng, 3)
    ss = lti.tf_to_ss(G)
    ell = 3
    ls = build_lifted(ss, ell)
    for z in np.exp(2j * np.pi * (np.arange(32) + 0.25) / 32):
        H = ls.bC @ np.linalg.solve(z * np.eye(ls.N) - ls.bA, ls.bB) + ls.bD
        g = lti.eval(G, z)
        # oldest-first: row k is delayed by ell - k
        delays = z ** -(ell - np.arange(ell + 1))
        np.testing.assert_allclose(H[:ell + 1, 0], delays * g, atol=1e-9)
        np.testing.assert_allclose(H[ell + 1:, 0], delays, atol=1e-9)


def test_simulate_zero_and_dimension():
    ss = lti.ss_from_matrices([[0.5]], [1], [1])
    ls = build_lifted(ss, 2)
    st, out = simulate_lifted(ls, np.zeros(3), np.zeros(5))
    assert not st.any() and not out.any()
    with pytest.raises(DimensionMismatch):
        simulate_lifted(ls, np.zeros(2), np.zeros(5))


def test_transform_preserves_outputs(rng):
    ss = lti.tf_to_ss(random_stable_tf(rng, 3))
    ls = build_lifted(ss, 2)
    T = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    lt = transform_lifted(ls, T)
    xi = rng.normal(size=ls.N)
    S = np.eye(ls.N)
    S[:3, :3] = T
    u = rng.normal(size=6)
    _, o1 = simulate_lifted(ls, xi, u)
    _, o2 = simulate_lifted(lt, np.linalg.solve(S, xi), u)
    np.testing.assert_allclose(o1, o2, atol=1e-10)
