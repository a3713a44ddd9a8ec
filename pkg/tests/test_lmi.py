import numpy as np
import pytest

from lure_cert import lmi, lti
from lure_cert.errors import DimensionMismatch, InvalidRate
from lure_cert.lifting import build_lifted
from lure_cert.sdp import residuals

G6 = lti.tf_from_coeffs([2, 0.92], [1, -0.5, 0])


def random_values(p, rng):
    vals = {}
    for v in p.variables:
        X = rng.normal(size=v.shape)
        vals[v.name] = 0.5 * (X + X.T) if v.symmetric else X
    return vals


def all_exprs(p):
    return [c.expr for c in p.psd] + [c.expr for c in p.linear]


@pytest.fixture
def ls6():
    return build_lifted(lti.loop_shift(G6, 0.91), 2)


@pytest.mark.parametrize("which", ["theorem1", "rate", "zf"])
def test_affine_and_symmetric(which, ls6, rng):
    p = {
        "theorem1": lambda: lmi.assemble_theorem1(ls6),
        "rate": lambda: lmi.assemble_rate(ls6, 0.9),
        "zf": lambda: lmi.assemble_zf(ls6, 1, 2),
    }[which]()
    a, b = random_values(p, rng), random_values(p, rng)
    t = 0.3
    mix = {k: t * a[k] + (1 - t) * b[k] for k in a}
    for expr in all_exprs(p):
        np.testing.assert_allclose(np.asarray(expr(mix)),
                                   t * np.asarray(expr(a)) + (1 - t) * np.asarray(expr(b)), atol=1e-10)
    for c in p.psd:
        E = c.expr(a)
        assert E.shape == (c.side, c.side)
        np.testing.assert_allclose(E, E.T, atol=1e-12)


def test_theorem1_shapes(ls6):
    p = lmi.assemble_theorem1(ls6)
    names = {v.name: v.shape for v in p.variables}
    assert names == {"P": (4, 4), "p": (2,), "M1": (3, 3), "m1": (3,), "M2": (3, 3), "m2": (3,)}
    sides = {c.label: c.side for c in p.psd}
    assert sides == {"decrease": 5, "positivity": 5}
    assert "p" not in {v.name for v in lmi.assemble_theorem1(ls6, fix_p_zero=True).variables}


def test_ell_zero_shapes():
    ls = build_lifted(lti.loop_shift(G6, 0.5), 0)
    p = lmi.assemble_theorem1(ls)
    names = {v.name: v.shape for v in p.variables}
    assert names["P"] == (2, 2) and names["M1"] == (1, 1) and "p" not in names
    assert not any(c.label.endswith("off_diagonal") for c in p.linear)


def test_rate_one_matches_theorem1(ls6, rng):
    p1, pr = lmi.assemble_theorem1(ls6), lmi.assemble_rate(ls6, 1.0)
    v = random_values(p1, rng)
    for a, b in zip(all_exprs(p1), all_exprs(pr)):
        np.testing.assert_allclose(a(v), b(v))


@pytest.mark.parametrize("rho", [0.0, -0.5, 1.5])
def test_invalid_rate(rho, ls6):
    with pytest.raises(InvalidRate):
        lmi.assemble_rate(ls6, rho)


def test_ex6_printed_point(ex6_plant, ex6_printed_cert):
    ls = build_lifted(lti.loop_shift(ex6_plant, ex6_printed_cert.alpha), 2)
    rep = residuals(lmi.assemble_theorem1(ls), ex6_printed_cert.values()).by_label()
    assert rep["M1:row_sums"] <= 1e-12 and rep["M1:off_diagonal"] <= 1e-12
    assert rep["M2:col_sums_plus_m"] <= 2e-3


def test_zf_pairing_orientation():
    # pi_1 pairs u_t with y_{t-1}; pi_{-1} pairs u_{t-1} with y_t
    N = lmi.zf_pairing_matrix({1: 1.0}, 1)
    np.testing.assert_array_equal(N, [[0, 0], [1, 0]])
    N = lmi.zf_pairing_matrix({-1: 1.0}, 1)
    np.testing.assert_array_equal(N, [[0, 1], [0, 0]])
    N = lmi.zf_pairing_matrix({0: 2.0}, 2)
    assert N[2, 2] == 2.0 and np.count_nonzero(N) == 1


def test_zf_dimension(ls6):
    with pytest.raises(DimensionMismatch):
        lmi.assemble_zf(ls6, 1, 1)
    p = lmi.assemble_zf(ls6, 1, 2)
    assert p.metadata["taps"] == [-2, -1, 0, 1]


def test_weight_dimension(ls6):
    with pytest.raises(DimensionMismatch):
        lmi.assemble_theorem1(ls6, weight=np.eye(3))


def performance_plant():
    ss = lti.ss_from_matrices([[0.5, 0.2], [0.0, 0.3]], [1, 0.5], [1, -1])
    return lmi.PerformancePlant(ss, Bw=np.array([[1.0], [0.0]]), Cz=np.array([[0.0, 1.0]]),
                                Dzu=0.0, Dzw=0.0)


def test_performance_shapes():
    pp = performance_plant()
    lp = lmi.lift_performance(pp.loop_shift(0.5), 2)
    assert lp.N == 2 + 2 * 2
    p = lmi.assemble_l2(lp, 1.0)
    assert {c.label for c in p.psd} >= {"decrease", "positivity"}
    p = lmi.assemble_h2(lp, 1.0, 1.0)
    assert any(c.label == "trace" for c in p.linear)
    with pytest.raises(ValueError):
        lmi.assemble_h2(lmi.lift_performance(
            lmi.PerformancePlant(pp.ss, pp.Bw, pp.Cz, Dzu=0.0, Dzw=np.ones((1, 1))), 1), 1.0, 1.0)
