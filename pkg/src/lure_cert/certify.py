"""Feasibility drivers, bisection, certificates and their validation.

Sign conventions: the original loop is ``y = G u``, ``u = -phi(y)`` with
``phi`` slope-restricted in ``(0, alpha)``. After the loop shift the system
``H = -(1 + alpha G)`` (same state) is in positive feedback with the monotone
map ``u~ = psi(y~)`` where ``y~ = phi(y) - alpha y`` and ``u~ = -phi(y) = u``.
Its potential is ``f~ = alpha Phi(y) - phi(y)^2 / 2`` with ``Phi`` the
potential of ``phi``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import cones, lti
from .errors import (
    FingerprintMismatch,
    IllPosedLoop,
    NoFeasiblePoint,
    UnstablePlant,
    ValidationFailed,
)
from .lifting import LiftedSystem, build_lifted, transform_lifted
from .lmi import (
    PerformancePlant,
    assemble_h2,
    assemble_l2,
    assemble_rate,
    assemble_theorem1,
    assemble_zf,
    lift_performance,
    zf_margin,
    zf_pairing_matrix,
)
from .pwl import PwlNonlinearity
from .sdp import FEASIBLE, SolverSettings, residuals, solve_problem

log = logging.getLogger(__name__)

STACKING = "oldest-first"
RESIDUAL_TOL = 1e-7


# -- certificate -------------------------------------------------------------

def _mat_to_json(X) -> dict:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return {"rows": X.shape[0], "cols": X.shape[1], "data": X.ravel().tolist()}


def _mat_from_json(d) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["rows"], d["cols"])


@dataclass(frozen=True)
class Certificate:
    """Lyapunov certificate ``V = xi' P xi + p' F f`` (or ``xi' P xi`` for ``zf``)."""

    method: str
    alpha: float
    ell: int
    fingerprint: str
    P: np.ndarray
    p: Optional[np.ndarray] = None
    M1: Optional[np.ndarray] = None
    m1: Optional[np.ndarray] = None
    M2: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    taps: Optional[dict] = None
    n_b: Optional[int] = None
    n_f: Optional[int] = None
    rho: float = 1.0
    fix_p_zero: bool = False
    stacking: str = STACKING
    residual_summary: dict = field(default_factory=dict)

    feasible = True

    def values(self) -> dict:
        """Variable assignment for the LMI this certificate claims to satisfy."""
        if self.method == "zf":
            idx = sorted(self.taps)
            return {"P": self.P, "pi": np.array([self.taps[k] for k in idx])}
        out = {"P": self.P, "M1": self.M1, "m1": self.m1, "M2": self.M2, "m2": self.m2}
        if self.ell > 0 and not self.fix_p_zero:
            out["p"] = self.p
        return out

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "alpha": self.alpha,
            "ell": self.ell,
            "fingerprint": self.fingerprint,
            "stacking": self.stacking,
            "rho": self.rho,
            "fix_p_zero": self.fix_p_zero,
            "P": _mat_to_json(self.P),
            "residual_summary": self.residual_summary,
        }
        if self.method == "zf":
            d["n_b"], d["n_f"] = self.n_b, self.n_f
            d["taps"] = {str(k): v for k, v in sorted(self.taps.items())}
        else:
            d["p"] = np.asarray(self.p, dtype=float).tolist()
            for k in ("M1", "M2"):
                d[k] = _mat_to_json(getattr(self, k))
            for k in ("m1", "m2"):
                d[k] = np.asarray(getattr(self, k), dtype=float).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        stacking = d.get("stacking", STACKING)
        if stacking != STACKING:
            raise ValueError(f"unsupported stacking {stacking!r}")
        kw = dict(
            method=d["method"], alpha=float(d["alpha"]), ell=int(d["ell"]),
            fingerprint=d["fingerprint"], P=_mat_from_json(d["P"]),
            rho=float(d.get("rho", 1.0)), fix_p_zero=bool(d.get("fix_p_zero", False)),
            stacking=stacking, residual_summary=d.get("residual_summary", {}),
        )
        if d["method"] == "zf":
            kw["taps"] = {int(k): float(v) for k, v in d["taps"].items()}
            kw["n_b"], kw["n_f"] = int(d["n_b"]), int(d["n_f"])
        else:
            kw["p"] = np.asarray(d["p"], dtype=float)
            kw["M1"], kw["M2"] = _mat_from_json(d["M1"]), _mat_from_json(d["M2"])
            kw["m1"], kw["m2"] = np.asarray(d["m1"], dtype=float), np.asarray(d["m2"], dtype=float)
        return cls(**kw)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Certificate":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Infeasible:
    alpha: float
    status: str
    detail: str = ""

    feasible = False


# -- feasibility -------------------------------------------------------------

def balancing_transform(ss: lti.StateSpace) -> np.ndarray:
    """Balanced-realization transform ``x = T x_b``.

    Only used to condition the LMI; falls back to the identity when the
    Gramians are not positive definite.
    """
    n = ss.n
    if n == 0 or not lti.is_schur(ss):
        return np.eye(n)
    try:
        Wc = sla.solve_discrete_lyapunov(ss.A, ss.B @ ss.B.T)
        Wo = sla.solve_discrete_lyapunov(ss.A.T, ss.C.T @ ss.C)
        Lc = np.linalg.cholesky(0.5 * (Wc + Wc.T))
        U, S, _ = np.linalg.svd(Lc.T @ Wo @ Lc)
        T = Lc @ U @ np.diag(S ** -0.25)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return np.eye(n)
    if not np.all(np.isfinite(T)) or np.linalg.cond(T) > 1e12:
        return np.eye(n)
    return T


def _lift_map(T: np.ndarray, N: int) -> np.ndarray:
    S = np.eye(N)
    S[:T.shape[0], :T.shape[0]] = T
    return S


def _assemble(ls: LiftedSystem, method: str, rho: float, fix_p_zero: bool, n_b, n_f,
              weight=None, eps=None):
    if method == "zf":
        return assemble_zf(ls, n_b, n_f, eps=eps, weight=weight)
    if method != "lifting":
        raise ValueError(f"unknown method {method!r}")
    if rho == 1.0:
        return assemble_theorem1(ls, fix_p_zero=fix_p_zero, weight=weight)
    return assemble_rate(ls, rho, fix_p_zero=fix_p_zero, weight=weight)


def _zf_orders(ell, n_b, n_f):
    if n_b is None and n_f is None:
        return ell, ell
    n_b = 0 if n_b is None else int(n_b)
    n_f = 0 if n_f is None else int(n_f)
    return n_b, n_f


def certify_alpha(
    G: lti.System,
    alpha: float,
    ell: int,
    method: str = "lifting",
    n_b: Optional[int] = None,
    n_f: Optional[int] = None,
    fix_p_zero: bool = False,
    rho: float = 1.0,
    settings: Optional[SolverSettings] = None,
    balance: bool = True,
):
    """Test the sector ``(0, alpha)``; returns a :class:`Certificate` or :class:`Infeasible`.

    The LMI is solved in balanced plant coordinates ``xi = S xi_b`` (with the
    identity weights replaced by ``S'S`` so the two problems are equivalent)
    and the solution is mapped back to the canonical realization, where the
    residuals are re-checked.
    """
    ss = lti.realize(G)
    if not lti.is_schur(ss):
        raise UnstablePlant("plant realization is not Schur stable")
    if method == "zf":
        n_b, n_f = _zf_orders(ell, n_b, n_f)
        ell = max(n_b, n_f)
    H = lti.loop_shift(ss, alpha)
    ls = build_lifted(H, ell)
    T = balancing_transform(ss) if balance else np.eye(ss.n)
    S = _lift_map(T, ls.N)
    problem_b = _assemble(transform_lifted(ls, T), method, rho, fix_p_zero, n_b, n_f,
                          weight=S.T @ S, eps=zf_margin(ls))
    sol = solve_problem(problem_b, settings)
    if sol.status != FEASIBLE:
        return Infeasible(alpha, sol.status, str(sol.diagnostics.get("raw_status", "")))

    Si = np.linalg.inv(S)
    values = dict(sol.values)
    values["P"] = Si.T @ values["P"] @ Si
    values["P"] = 0.5 * (values["P"] + values["P"].T)
    problem = _assemble(ls, method, rho, fix_p_zero, n_b, n_f)
    report = residuals(problem, values)
    if not report.passes(RESIDUAL_TOL):
        return Infeasible(alpha, "Inaccurate", f"canonical re-check: {report.worst_label}={report.worst:.3g}")
    summary = {"worst": report.worst, "worst_label": report.worst_label, "margin": sol.margin,
               "by_label": report.by_label()}
    common = dict(alpha=float(alpha), ell=int(ell), fingerprint=lti.fingerprint(G), P=values["P"],
                  rho=float(rho), residual_summary=summary)
    if method == "zf":
        taps = dict(zip(problem.metadata["taps"], map(float, values["pi"])))
        return Certificate(method="zf", taps=taps, n_b=n_b, n_f=n_f, **common)
    p = values.get("p", np.zeros(ell))
    return Certificate(method="lifting", p=np.asarray(p, dtype=float), M1=values["M1"],
                       m1=values["m1"], M2=values["M2"], m2=values["m2"],
                       fix_p_zero=fix_p_zero, **common)


def maximize_alpha(
    G: lti.System,
    ell: int,
    lo: float = 1e-3,
    hi: float = 1.0,
    tol: float = 1e-4,
    method: str = "lifting",
    **kw,
):
    """Bisection for the largest certifiable sector bound.

    ``hi`` is doubled while feasible (capped at ``2**16 * lo``). Returns
    ``(alpha_star, certificate)`` with the certificate at ``alpha_star``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cert = certify_alpha(G, lo, ell, method, **kw)
    if not cert.feasible:
        raise NoFeasiblePoint(f"alpha={lo} is not certifiable")
    cap = 2.0 ** 16 * lo
    hi = max(hi, lo)
    while True:
        res = certify_alpha(G, hi, ell, method, **kw)
        if not res.feasible:
            break
        lo, cert = hi, res
        if hi >= cap:
            return lo, cert
        hi = min(2.0 * hi, cap)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = certify_alpha(G, mid, ell, method, **kw)
        if res.feasible:
            lo, cert = mid, res
        else:
            hi = mid
    return lo, cert


def minimize_rate(G: lti.System, alpha: float, ell: int, tol: float = 1e-4, **kw):
    """Smallest ``rho`` in ``(0, 1]`` for which the rate LMI is feasible."""
    cert = certify_alpha(G, alpha, ell, rho=1.0, **kw)
    if not cert.feasible:
        raise NoFeasiblePoint(f"alpha={alpha} is not certifiable at rho=1")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = certify_alpha(G, alpha, ell, rho=mid, **kw)
        if res.feasible:
            hi, cert = mid, res
        else:
            lo = mid
    return hi, cert


# -- simulation --------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    x: np.ndarray  # (T+1, n)
    y: np.ndarray  # (T,)
    u: np.ndarray  # (T,)


def _solve_loop(c: float, D: float, phi: PwlNonlinearity) -> float:
    """Root of ``r(y) = y - c + D phi(y)``."""
    if 1.0 + D * phi.max_slope <= 0.0:
        raise IllPosedLoop(f"1 + D*slope <= 0 for D={D}")
    r = lambda y: y - c + D * float(phi(y))
    a, b = c - 1.0, c + 1.0
    while r(a) > 0:
        a = c - 2.0 * (c - a)
    while r(b) < 0:
        b = c + 2.0 * (b - c)
    return brentq(r, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def simulate_closed_loop(G: lti.System, phi: PwlNonlinearity, x0, T: int) -> Trajectory:
    """Negative-feedback loop ``y = C x + D u``, ``u = -phi(y)``."""
    ss = lti.realize(G)
    x = np.zeros((T + 1, ss.n))
    x[0] = np.asarray(x0, dtype=float).ravel()
    y = np.zeros(T)
    u = np.zeros(T)
    C = ss.C[0]
    B = ss.B[:, 0]
    for t in range(T):
        c = float(C @ x[t])
        y[t] = c if ss.D == 0 else _solve_loop(c, ss.D, phi)
        u[t] = -float(phi(y[t]))
        x[t + 1] = ss.A @ x[t] + B * u[t]
    return Trajectory(x, y, u)


@dataclass(frozen=True)
class LiftedTrace:
    t: np.ndarray
    V: np.ndarray
    xi_norm2: np.ndarray
    xi: np.ndarray
    y_tilde: np.ndarray
    u_tilde: np.ndarray
    f_tilde: np.ndarray


def transformed_signals(phi: PwlNonlinearity, alpha: float, y: np.ndarray):
    """``(y~, u~, f~)`` of the loop-shifted monotone nonlinearity along ``y``."""
    ph = phi(y)
    return ph - alpha * y, -ph, alpha * phi.potential(y) - 0.5 * ph * ph


def lifted_trace(cert: Certificate, G: lti.System, alpha: float, phi: PwlNonlinearity, x0,
                 T: int) -> LiftedTrace:
    """``V_t`` and ``||xi_t||^2`` for ``t = ell..T`` along a loop trajectory."""
    ell = cert.ell
    tr = simulate_closed_loop(G, phi, x0, T + 1)
    yt, ut, ft = transformed_signals(phi, alpha, tr.y)
    ts = np.arange(ell, T + 1)
    xis = np.array([np.concatenate([tr.x[t - ell], ut[t - ell:t]]) for t in ts])
    quad = np.einsum("ti,ij,tj->t", xis, cert.P, xis)
    if cert.method == "lifting" and ell > 0:
        lin = np.array([cert.p @ ft[t - ell:t] for t in ts])
    else:
        lin = np.zeros(len(ts))
    return LiftedTrace(ts, quad + lin, np.sum(xis * xis, axis=1), xis, yt, ut, ft)


def fdi_check(taps: dict, H: lti.System, grid_size: int = 4096) -> bool:
    """``Re{Pi(e^{jw}) H(e^{jw})} < 0`` on a uniform grid, ``Pi(z) = sum_k pi_k z^{-k}``."""
    w = 2 * np.pi * np.arange(grid_size) / grid_size
    z = np.exp(1j * w)
    Pi = sum(v * z ** (-k) for k, v in taps.items())
    Hz = lti.freqresp(H, z)
    return bool(np.all(np.real(Pi * Hz) < 0))


# -- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    passed: bool
    residual_worst: float
    residual_label: Optional[str]
    cone: dict
    trajectories: int
    max_increase: float = -math.inf
    min_lower_gap: float = math.inf
    zf_plain_increase: float = -math.inf
    failures: list = field(default_factory=list)


def _cert_problem(G, cert: Certificate):
    H = lti.loop_shift(lti.realize(G), cert.alpha)
    ls = build_lifted(H, cert.ell)
    if cert.method == "zf":
        return assemble_zf(ls, cert.n_b, cert.n_f)
    if cert.rho != 1.0:
        return assemble_rate(ls, cert.rho, fix_p_zero=cert.fix_p_zero)
    return assemble_theorem1(ls, fix_p_zero=cert.fix_p_zero)


def random_nonlinearity(rng: np.random.Generator, alpha: float, scale: float = 1.0) -> PwlNonlinearity:
    return PwlNonlinearity.random(rng, alpha, scale=scale)


def validate_certificate(
    G: lti.System,
    cert: Certificate,
    tol: float = 1e-6,
    trajectories: int = 100,
    initial_states: int = 10,
    T: int = 200,
    traj_tol: float = 1e-8,
    cone_tol: Optional[float] = None,
    seed: int = 0,
    raise_on_fail: bool = True,
) -> ValidationReport:
    """Residual, dual-cone and trajectory checks of a certificate against ``G``.

    Trajectory checks run ``trajectories`` random nonlinearities in the
    sector times ``initial_states`` random initial states over ``T`` steps,
    starting at ``t = ell``. For ``zf`` certificates the check is the
    telescoped bound ``xi_T' P xi_T <= xi_ell' P xi_ell + B`` where ``B >= 0``
    is the tap Toeplitz form over the first ``ell`` samples (pairs that the
    per-step dissipation sums starting at ``t = ell`` never see). The bound
    without ``B`` is reported as ``zf_plain_increase``.
    """
    if lti.fingerprint(G) != cert.fingerprint:
        raise FingerprintMismatch("certificate was issued for a different plant")
    cone_tol = tol if cone_tol is None else cone_tol
    problem = _cert_problem(G, cert)
    rep = residuals(problem, cert.values())
    failures = []
    if rep.worst > tol:
        failures.append((rep.worst_label, rep.worst))
    cone_info = {}
    if cert.method == "lifting":
        for k in ("1", "2"):
            mult = cones.Multiplier(getattr(cert, "M" + k), getattr(cert, "m" + k))
            viol = cones.cone_violations(mult)
            cone_info["M" + k] = viol
            for lab, v in viol.items():
                if v > cone_tol:
                    failures.append((f"M{k}:{lab}", v))
    report = ValidationReport(False, rep.worst, rep.worst_label, cone_info, trajectories)

    rng = np.random.default_rng(seed)
    n = lti.realize(G).n
    for _ in range(trajectories):
        phi = random_nonlinearity(rng, cert.alpha)
        for _ in range(initial_states):
            x0 = rng.normal(size=n)
            lt = lifted_trace(cert, G, cert.alpha, phi, x0, T)
            if cert.method == "zf":
                quad = np.einsum("ti,ij,tj->t", lt.xi, cert.P, lt.xi)
                plain = float(np.max(quad[1:] - quad[0], initial=-math.inf))
                report.zf_plain_increase = max(report.zf_plain_increase, plain)
                inc = plain - zf_boundary_term(cert.taps, lt.u_tilde, lt.y_tilde, cert.ell)
                gap = float(np.min(quad))
            else:
                inc = float(np.max(np.diff(lt.V), initial=-math.inf))
                gap = float(np.min(lt.V - lt.xi_norm2))
            report.max_increase = max(report.max_increase, inc)
            report.min_lower_gap = min(report.min_lower_gap, gap)
    if trajectories and report.max_increase > traj_tol:
        failures.append(("trajectory_decrease", report.max_increase))
    if trajectories and cert.method == "lifting" and report.min_lower_gap < -traj_tol:
        failures.append(("trajectory_lower_bound", -report.min_lower_gap))
    report.failures = failures
    report.passed = not failures
    if failures and raise_on_fail:
        lab, val = failures[0]
        raise ValidationFailed(lab, val)
    return report


# -- performance -------------------------------------------------------------

def _bisect_gamma(feasible, lo: float, hi: float, tol: float):
    """Smallest ``gamma`` with ``feasible(gamma)``; relative tolerance ``tol``."""
    while not feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise NoFeasiblePoint("no feasible gamma below 1e12")
    while hi - lo > tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def l2_gain(pp: PerformancePlant, alpha: float, ell: int, nonlinearity: bool = True,
            lo: float = 0.0, hi: float = 1.0, tol: float = 1e-4, state_weight: float = 1.0,
            settings: Optional[SolverSettings] = None) -> float:
    """Smallest certified robust l2 gain from ``w`` to ``z``.

    ``state_weight`` is the coefficient of ``||xi||^2`` in ``V >= ||xi||^2``;
    any positive value proves the gain, and small values remove the bias that
    ``P >= I`` puts on the storage function.
    """
    shifted = pp.loop_shift(alpha) if nonlinearity else pp
    lp = lift_performance(shifted, ell)
    return _bisect_gamma(
        lambda g: solve_problem(assemble_l2(lp, g, nonlinearity, state_weight), settings).feasible,
        lo, hi, tol,
    )


def h2_bound(pp: PerformancePlant, alpha: float, ell: int, Sigma=1.0, nonlinearity: bool = True,
             lo: float = 0.0, hi: float = 1.0, tol: float = 1e-4,
             settings: Optional[SolverSettings] = None) -> float:
    """Smallest certified robust H2 bound; ``0`` when the noise covariance vanishes."""
    shifted = pp.loop_shift(alpha) if nonlinearity else pp
    lp = lift_performance(shifted, ell)
    if not np.any(np.asarray(Sigma)) or not np.any(shifted.Cz) and not np.any(shifted.Dzu):
        if solve_problem(assemble_h2(lp, Sigma, 0.0, nonlinearity), settings).feasible:
            return 0.0
    return _bisect_gamma(
        lambda g: solve_problem(assemble_h2(lp, Sigma, g, nonlinearity), settings).feasible, lo, hi, tol
    )


def hinf_norm_grid(ss: lti.StateSpace, Bw, Cz, Dzw, grid_size: int = 4096) -> float:
    """Frequency-grid estimate of the H-infinity norm of ``(A, Bw, Cz, Dzw)``."""
    A = ss.A
    Bw = np.atleast_2d(Bw).reshape(ss.n, -1)
    Cz = np.atleast_2d(Cz).reshape(-1, ss.n)
    Dzw = np.atleast_2d(Dzw).reshape(Cz.shape[0], Bw.shape[1])
    best = 0.0
    for w in np.linspace(0, np.pi, grid_size):
        z = np.exp(1j * w)
        Hz = Cz @ np.linalg.solve(z * np.eye(ss.n) - A, Bw) + Dzw
        best = max(best, float(np.linalg.norm(Hz, 2)))
    return best


def h2_norm_lyap(ss: lti.StateSpace, Bw, Cz, Sigma=1.0) -> float:
    """H2 norm of ``(A, Bw, Cz, 0)`` under noise covariance ``Sigma``."""
    Bw = np.atleast_2d(Bw).reshape(ss.n, -1)
    Cz = np.atleast_2d(Cz).reshape(-1, ss.n)
    Sigma = np.atleast_2d(Sigma)
    if Sigma.shape == (1, 1):
        Sigma = Sigma[0, 0] * np.eye(Bw.shape[1])
    Wo = sla.solve_discrete_lyapunov(ss.A.T, Cz.T @ Cz)
    return float(np.sqrt(max(np.trace(Bw @ Sigma @ Bw.T @ Wo), 0.0)))


def zf_boundary_term(taps: dict, u, y, ell: int) -> float:
    """Toeplitz tap form on the first ``ell`` samples of ``(u, y)``; nonnegative for monotone data."""
    if ell == 0:
        return 0.0
    return float(np.asarray(u[:ell]) @ zf_toeplitz(taps, ell) @ np.asarray(y[:ell]))


def zf_toeplitz(taps: dict, size: int) -> np.ndarray:
    """``size x size`` Toeplitz matrix ``T[i, j] = pi_{i-j}`` of the tap sequence."""
    Tm = np.zeros((size, size))
    for k, v in taps.items():
        Tm += v * np.eye(size, k=-k)
    return Tm


__all__ = [
    "Certificate", "Infeasible", "certify_alpha", "maximize_alpha", "minimize_rate",
    "simulate_closed_loop", "lifted_trace", "fdi_check", "validate_certificate",
    "balancing_transform", "transformed_signals", "l2_gain", "h2_bound", "hinf_norm_grid",
    "h2_norm_lyap", "zf_toeplitz", "zf_boundary_term", "zf_pairing_matrix", "ValidationReport", "LiftedTrace",
]
