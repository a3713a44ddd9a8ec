"""Acceptance criteria 1-8; each test prints one PASS/FAIL line."""
import math

import numpy as np
import pytest

from lure_cert import benchmarks, certify, cones, lti
from lure_cert.lmi import PerformancePlant
from lure_cert.pwl import PwlNonlinearity

from conftest import DATA, lifting_result, report, zf_result

ZF_CASES = (1, 3, 5)


def test_criterion_1_lifting_table():
    rows, ok = [], True
    for k, c in benchmarks.CASES.items():
        a, cert = lifting_result(k)
        good = abs(a - c.alpha) <= c.tol and cert.ell == c.ell
        ok &= good
        rows.append(f"Ex{k}={a:.4f}")
    assert report(1, ok, "lifting alpha*: " + " ".join(rows))


def test_criterion_2_zf_table():
    rows, ok = [], True
    for k in ZF_CASES:
        c = benchmarks.CASES[k]
        a, cert = zf_result(k)
        good = abs(a - c.alpha) <= c.tol and (cert.n_b, cert.n_f) == c.nb_nf
        ok &= good
        rows.append(f"Ex{k}{c.nb_nf}={a:.4f}")
    assert report(2, ok, "zf alpha*: " + " ".join(rows))


def test_criterion_3_printed_certificate(ex6_plant, ex6_printed_cert):
    rep = certify.validate_certificate(ex6_plant, ex6_printed_cert, tol=5e-2, cone_tol=2e-3,
                                       trajectories=100, raise_on_fail=False)
    cone_worst = max(max(v.values()) for v in rep.cone.values())
    detail = (f"worst residual {rep.residual_worst:.3g} ({rep.residual_label}), cone {cone_worst:.2g}, "
              f"trajectory increase {rep.max_increase:.2g}")
    assert report(3, rep.passed, detail)


def _trajectory_stats(G, cert, seed):
    """Worst V increase, worst lower gap, worst plain zf increase over 100 x 10 x 200."""
    rep = certify.validate_certificate(G, cert, tol=math.inf, cone_tol=math.inf, trajectories=100,
                                       initial_states=10, T=200, traj_tol=math.inf, seed=seed)
    return rep


def test_criterion_4_soundness():
    ok, rows = True, []
    for k, c in benchmarks.CASES.items():
        rep = _trajectory_stats(c.tf, lifting_result(k)[1], seed=k)
        good = rep.max_increase <= 1e-8 and rep.min_lower_gap >= -1e-8
        ok &= good
        rows.append(f"L{k}:{rep.max_increase:.1e}/{rep.min_lower_gap:.1e}")
    for k in ZF_CASES:
        rep = _trajectory_stats(benchmarks.CASES[k].tf, zf_result(k)[1], seed=100 + k)
        good = rep.zf_plain_increase <= 1e-8
        ok &= good
        rows.append(f"Z{k}:{rep.zf_plain_increase:.1e}(bounded {rep.max_increase:.1e})")
    assert report(4, ok, "max dV / min(V-|xi|^2) or zf increase: " + " ".join(rows))


def test_criterion_5_cone_duality():
    rng = np.random.default_rng(2024)
    worst_pair = math.inf
    for i in range(10_000):
        L = int(rng.integers(1, 6))
        mult = cones.DualConeWitness.random(rng, L).multiplier()
        d = cones.sample_interpolable(L - 1, float(rng.uniform(0.1, 10)), int(rng.integers(2 ** 32)),
                                      scale=float(rng.uniform(0.1, 10)))
        worst_pair = min(worst_pair, cones.quad_linear_value(mult, d))
    witness_ok = all(
        cones.in_dual_cone(cones.DualConeWitness.random(rng, int(rng.integers(1, 8))).multiplier(), 1e-12)
        for _ in range(1000)
    )
    worst_dh = math.inf
    for _ in range(40_000):
        L = int(rng.integers(1, 6))
        M = -rng.exponential(size=(L, L)) * (rng.random((L, L)) < 0.7)
        np.fill_diagonal(M, 0.0)
        # diagonal large enough for nonnegative row and column sums
        np.fill_diagonal(M, np.maximum(-M.sum(axis=0), -M.sum(axis=1)) + rng.exponential(size=L) * 0.1)
        assert cones.is_doubly_hyperdominant(M, tol=1e-12)
        phi = PwlNonlinearity.random(rng, float(rng.uniform(0.1, 10)))
        y = rng.normal(scale=3, size=L)
        worst_dh = min(worst_dh, float(phi(y) @ M @ y))
    ok = worst_pair >= -1e-9 and witness_ok and worst_dh >= -1e-9
    assert report(5, ok, f"min pair {worst_pair:.2e}, witnesses {'ok' if witness_ok else 'bad'}, "
                         f"min hyperdominant form {worst_dh:.2e}")


def test_criterion_6_boundary():
    ok, rows = True, []
    for k, c in benchmarks.CASES.items():
        below = certify.certify_alpha(c.tf, c.alpha - 2e-3, c.ell).feasible
        above = certify.certify_alpha(c.tf, c.alpha + 2e-3, c.ell).feasible
        ok &= below and not above
        rows.append(f"Ex{k}:{'F' if below else 'I'}/{'F' if above else 'I'}")
    assert report(6, ok, "feasible(alpha*-2e-3)/feasible(alpha*+2e-3): " + " ".join(rows))


def test_criterion_7_p_zero(ex6_plant):
    a = benchmarks.CASES[6].alpha
    G = benchmarks.CASES[6].tf
    at2 = certify.certify_alpha(G, a, 2, fix_p_zero=True).feasible
    at3 = certify.certify_alpha(G, a, 3, fix_p_zero=True).feasible
    assert report(7, (not at2) and at3, f"p=0 at alpha={a}: ell=2 {'feasible' if at2 else 'infeasible'}, "
                                        f"ell=3 {'feasible' if at3 else 'infeasible'}")


def _random_performance_plant(rng):
    A = rng.normal(size=(2, 2))
    A *= 0.8 / max(abs(np.linalg.eigvals(A)))
    ss = lti.ss_from_matrices(A, rng.normal(size=2), rng.normal(size=2))
    return PerformancePlant(ss, rng.normal(size=(2, 1)), rng.normal(size=(1, 2)), Dzu=0.0, Dzw=0.0)


def test_criterion_8_extensions():
    rng = np.random.default_rng(3)
    ok, rows = True, []
    for i in range(3):
        pp = _random_performance_plant(rng)
        hinf = certify.hinf_norm_grid(pp.ss, pp.Bw, pp.Cz, pp.Dzw)
        h2 = certify.h2_norm_lyap(pp.ss, pp.Bw, pp.Cz)
        g = certify.l2_gain(pp, 1.0, 1, nonlinearity=False, tol=1e-5, state_weight=1e-6)
        s = certify.h2_bound(pp, 1.0, 1, nonlinearity=False, tol=1e-5)
        e1, e2 = abs(g - hinf) / hinf, abs(s - h2) / h2
        ok &= e1 <= 0.02 and e2 <= 0.02
        rows.append(f"P{i}: l2 {g:.4f}/{hinf:.4f} h2 {s:.4f}/{h2:.4f}")
    rho, _ = certify.minimize_rate(benchmarks.CASES[1].tf, 6.0, 1)
    ok &= rho < 1
    rows.append(f"rho*(Ex1, 6)={rho:.4f}")
    assert report(8, ok, "; ".join(rows))
