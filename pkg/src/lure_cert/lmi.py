"""Assembly of the LMI feasibility problems.

An :class:`LmiProblem` holds named decision variables and a list of
constraints given as affine callables of the variable values:
``PsdConstraint`` requires ``expr(values) <= 0`` in the semidefinite order,
``LinearConstraint`` requires ``expr(values) <= 0`` elementwise (or ``== 0``).
Solvers extract coefficients by probing (the expressions are affine), and
residual checks simply re-evaluate the callables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import cones
from .errors import DimensionMismatch, InvalidRate
from .lifting import LiftedSystem, f_matrices, history_dynamics, input_selector
from .lti import StateSpace


@dataclass(frozen=True)
class Variable:
    name: str
    shape: tuple
    symmetric: bool = False

    @property
    def size(self) -> int:
        if self.symmetric:
            n = self.shape[0]
            return n * (n + 1) // 2
        return int(np.prod(self.shape, dtype=int))


@dataclass(frozen=True)
class PsdConstraint:
    label: str
    side: int
    expr: Callable[[dict], np.ndarray]


@dataclass(frozen=True)
class LinearConstraint:
    label: str
    size: int
    expr: Callable[[dict], np.ndarray]
    equality: bool = False


@dataclass(frozen=True)
class LmiProblem:
    variables: tuple
    psd: tuple
    linear: tuple
    metadata: dict = field(default_factory=dict)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def zero_values(self) -> dict:
        return {v.name: np.zeros(v.shape) for v in self.variables}


class _Builder:
    def __init__(self):
        self.variables = []
        self.psd = []
        self.linear = []

    def var(self, name, shape, symmetric=False):
        self.variables.append(Variable(name, tuple(shape), symmetric))
        return name

    def psd_leq0(self, label, side, expr):
        self.psd.append(PsdConstraint(label, side, expr))

    def leq0(self, label, size, expr):
        if size:
            self.linear.append(LinearConstraint(label, size, expr))

    def eq0(self, label, size, expr):
        if size:
            self.linear.append(LinearConstraint(label, size, expr, equality=True))

    def build(self, **metadata) -> LmiProblem:
        return LmiProblem(tuple(self.variables), tuple(self.psd), tuple(self.linear), metadata)


def _sym(X):
    return 0.5 * (X + X.T)


def _pairing(CD: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``1/2 CD^T [[0, M^T], [M, 0]] CD`` for outputs stacked (y-block, u-block)."""
    L = M.shape[0]
    Y, U = CD[:L], CD[L:2 * L]
    return _sym(U.T @ M @ Y)


def _pad(P: np.ndarray, k: int) -> np.ndarray:
    """Embed ``P`` in the top-left corner of a matrix with ``k`` extra rows/cols."""
    n = P.shape[0]
    out = np.zeros((n + k, n + k))
    out[:n, :n] = P
    return out


def _add_cone(b: _Builder, M: str, m: str, ell: int):
    for lab, fn in cones.dual_cone_constraints(ell):
        size = len(fn(np.zeros((ell + 1, ell + 1)), np.zeros(ell + 1)))
        b.leq0(f"{M}:{lab}", size, lambda v, fn=fn: fn(v[M], v[m]))


def _weight(weight, N: int) -> np.ndarray:
    if weight is None:
        return np.eye(N)
    W = np.asarray(weight, dtype=float)
    if W.shape != (N, N):
        raise DimensionMismatch(f"weight must be {N}x{N}")
    return _sym(W)


def _lifting_problem(ls: LiftedSystem, rho: float = 1.0, fix_p_zero: bool = False,
                     weight=None) -> LmiProblem:
    ell, N, L = ls.ell, ls.N, ls.ell + 1
    AB, CD = ls.AB, ls.CD
    F, Fp = ls.F, ls.Fplus
    r2 = rho * rho
    E = _pad(_weight(weight, N), 1)

    b = _Builder()
    b.var("P", (N, N), symmetric=True)
    with_p = ell > 0 and not fix_p_zero
    if with_p:
        b.var("p", (ell,))
    for k in (1, 2):
        b.var(f"M{k}", (L, L))
        b.var(f"m{k}", (L,))

    def p_of(v):
        return v["p"] if with_p else np.zeros(ell)

    b.psd_leq0(
        "decrease", N + 1,
        lambda v: _sym(AB.T @ v["P"] @ AB) - r2 * _pad(v["P"], 1) + _pairing(CD, v["M1"]),
    )
    b.leq0("decrease_linear", L, lambda v: (Fp - r2 * F).T @ p_of(v) + v["m1"])
    b.psd_leq0(
        "positivity", N + 1,
        lambda v: E - _pad(v["P"], 1) + _pairing(CD, v["M2"]),
    )
    b.leq0("positivity_linear", L, lambda v: -F.T @ p_of(v) + v["m2"])
    _add_cone(b, "M1", "m1", ell)
    _add_cone(b, "M2", "m2", ell)
    return b.build(kind="lifting", ell=ell, rho=rho, fix_p_zero=fix_p_zero)


def assemble_theorem1(ls: LiftedSystem, fix_p_zero: bool = False, weight=None) -> LmiProblem:
    """Lyapunov function ``xi^T P xi + p^T F f`` with two dual-cone multipliers.

    Constraints (all ``<= 0``)::

        [A'PA - P, A'PB; B'PA, B'PB] + 1/2 [C D]' [[0, M1'], [M1, 0]] [C D]
        (Fplus - F)' p + m1
        [I - P, 0; 0, 0] + 1/2 [C D]' [[0, M2'], [M2, 0]] [C D]
        -F' p + m2

    plus dual-cone membership of ``(M1, m1)`` and ``(M2, m2)``. ``weight``
    replaces the identity in the third block; it is used when the lifted
    system is expressed in other coordinates ``xi = S xi'`` (``weight = S'S``).
    """
    return _lifting_problem(ls, 1.0, fix_p_zero, weight)


def assemble_rate(ls: LiftedSystem, rho: float, fix_p_zero: bool = False, weight=None) -> LmiProblem:
    """Exponential-rate variant: ``V_{t+1} - rho^2 V_t + sigma_1 <= 0``.

    The linear part uses ``(Fplus - rho^2 F)' p`` so that the whole of ``V``
    contracts at the same rate.
    """
    if not (0.0 < rho <= 1.0):
        raise InvalidRate(f"rho={rho} not in (0, 1]")
    return _lifting_problem(ls, rho, fix_p_zero, weight)


def zf_pairing_matrix(taps: dict, ell: int) -> np.ndarray:
    """Matrix ``N`` with ``u_stack^T N y_stack = sum_k pi_k u_t y_{t-k} + sum_k pi_{-k} u_{t-k} y_t``.

    ``taps`` maps tap index ``k`` (negative = anticausal) to its value. Row
    and column ``ell`` correspond to time ``t`` (oldest-first stacking).
    """
    N = np.zeros((ell + 1, ell + 1))
    for k, val in taps.items():
        if k >= 0:
            N[ell, ell - k] += val
        else:
            N[ell + k, ell] += val
    return N


def zf_margin(ls: LiftedSystem) -> float:
    return 1e-7 * (1.0 + np.linalg.norm(ls.bA, 2))


def assemble_zf(ls: LiftedSystem, n_b: int, n_f: int, eps: Optional[float] = None,
                weight=None) -> LmiProblem:
    """Zames-Falb FIR baseline.

    Taps ``pi_k`` for ``k = -n_f..n_b`` with ``Pi(z) = sum_k pi_k z^{-k}``.
    The ``n_b`` causal taps (``k > 0``) pair ``u_t`` with past outputs
    ``y_{t-k}``; the ``n_f`` anticausal taps pair past inputs ``u_{t-k}`` with
    ``y_t``. With this labelling the benchmark tap counts (e.g. one causal tap
    for the first example) reproduce the reference margins. The strictness
    margins are ``eps * weight`` (identity by default).
    """
    if ls.ell != max(n_b, n_f):
        raise DimensionMismatch(f"lifting dimension {ls.ell} != max(n_b, n_f)")
    eps = zf_margin(ls) if eps is None else eps
    ell, N = ls.ell, ls.N
    AB, CD = ls.AB, ls.CD
    idx = list(range(-n_f, n_b + 1))

    b = _Builder()
    b.var("P", (N, N), symmetric=True)
    b.var("pi", (len(idx),))

    W = _weight(weight, N)
    W1 = _pad(W, 1)
    W1[N, N] = 1.0

    def Nmat(v):
        return zf_pairing_matrix(dict(zip(idx, v["pi"])), ell)

    b.psd_leq0("P_positive", N, lambda v: eps * W - v["P"])
    b.psd_leq0(
        "dissipation", N + 1,
        lambda v: _sym(AB.T @ v["P"] @ AB) - _pad(v["P"], 1) + _pairing(CD, Nmat(v))
        + eps * W1,
    )
    nonzero = [i for i, k in enumerate(idx) if k != 0]
    if nonzero:
        b.leq0("taps_offcenter", len(nonzero), lambda v: v["pi"][nonzero])
    b.leq0("taps_sum", 1, lambda v: -np.atleast_1d(np.sum(v["pi"])))
    return b.build(kind="zf", ell=ell, n_b=n_b, n_f=n_f, eps=eps, taps=idx)


# -- performance extensions --------------------------------------------------

@dataclass(frozen=True)
class PerformancePlant:
    """Plant with a disturbance input ``w`` and a performance output ``z``.

    ``x+ = A x + B u + Bw w``, ``y = C x + D u``, ``z = Cz x + Dzu u + Dzw w``.
    """

    ss: StateSpace
    Bw: np.ndarray
    Cz: np.ndarray
    Dzu: np.ndarray
    Dzw: np.ndarray

    def __post_init__(self):
        n = self.ss.n
        Bw = np.asarray(self.Bw, dtype=float).reshape(n, -1)
        q = Bw.shape[1]
        Cz = np.asarray(self.Cz, dtype=float).reshape(-1, n)
        r = Cz.shape[0]
        object.__setattr__(self, "Bw", Bw)
        object.__setattr__(self, "Cz", Cz)
        object.__setattr__(self, "Dzu", np.asarray(self.Dzu, dtype=float).reshape(r, 1))
        object.__setattr__(self, "Dzw", np.asarray(self.Dzw, dtype=float).reshape(r, q))

    @property
    def q(self) -> int:
        return self.Bw.shape[1]

    @property
    def r(self) -> int:
        return self.Cz.shape[0]

    def loop_shift(self, alpha: float) -> "PerformancePlant":
        """Shift the nonlinearity channel; the state, ``w`` and ``z`` are untouched."""
        ss = self.ss
        shifted = StateSpace(A=ss.A, B=ss.B, C=-alpha * ss.C, D=-1.0 - alpha * ss.D)
        return PerformancePlant(shifted, self.Bw, self.Cz, self.Dzu, self.Dzw)


@dataclass(frozen=True)
class LiftedPerformance:
    """Lifted performance plant acting on ``(xi_t, u_t, w_t)``.

    The lifted state carries the input history of both ``u`` and ``w``,
    interleaved per time step: ``(x_{t-l}, (u, w)_{t-l}, ..., (u, w)_{t-1})``.
    """

    bA: np.ndarray
    bB: np.ndarray
    bBw: np.ndarray
    CD: np.ndarray  # (y, u) stacks as a map of (xi, u_t, w_t)
    Z: np.ndarray  # z_t as a map of (xi, u_t, w_t)
    F: np.ndarray
    Fplus: np.ndarray
    ell: int
    n: int
    q: int

    @property
    def N(self) -> int:
        return self.bA.shape[0]


def lift_performance(pp: PerformancePlant, ell: int) -> LiftedPerformance:
    ss = pp.ss
    n, q = ss.n, pp.q
    m = 1 + q
    Bv = np.hstack([ss.B, pp.Bw])
    bA, bBv, X = history_dynamics(ss.A, Bv, ell)
    Dv = np.concatenate([[ss.D], np.zeros(q)])
    rows_y, rows_u = [], []
    for k in range(ell, -1, -1):
        v_rows = np.vstack([input_selector(n, m, ell, k, c) for c in range(m)])
        rows_y.append((ss.C @ X[k])[0] + Dv @ v_rows)
        rows_u.append(v_rows[0])
    CD = np.vstack(rows_y + rows_u)
    v0 = np.vstack([input_selector(n, m, ell, 0, c) for c in range(m)])
    Z = pp.Cz @ X[0] + np.hstack([pp.Dzu, pp.Dzw]) @ v0
    F, Fp = f_matrices(ell)
    return LiftedPerformance(
        bA=bA, bB=bBv[:, :1], bBw=bBv[:, 1:], CD=CD, Z=Z, F=F, Fplus=Fp, ell=ell, n=n, q=q
    )


def _performance_common(b, lp: LiftedPerformance, nonlinearity: bool):
    ell, L = lp.ell, lp.ell + 1
    b.var("P", (lp.N, lp.N), symmetric=True)
    if nonlinearity:
        if ell > 0:
            b.var("p", (ell,))
        for k in (1, 2):
            b.var(f"M{k}", (L, L))
            b.var(f"m{k}", (L,))
        _add_cone(b, "M1", "m1", ell)
        _add_cone(b, "M2", "m2", ell)

    def mult(v, k):
        if not nonlinearity:
            return np.zeros((L, L)), np.zeros(L)
        return v[f"M{k}"], v[f"m{k}"]

    def p_of(v):
        return v["p"] if (nonlinearity and ell > 0) else np.zeros(ell)

    return mult, p_of


def assemble_l2(lp: LiftedPerformance, gamma: float, nonlinearity: bool = True,
                state_weight: float = 1.0) -> LmiProblem:
    """Robust l2 gain ``gamma`` from ``w`` to ``z``.

    Block layout: variables ordered ``(xi_t, u_t, w_t)``; the dissipation
    block adds ``||z_t||^2 - gamma^2 ||w_t||^2``. With ``nonlinearity=False``
    the ``u`` direction is removed (``u = 0``) and the multipliers vanish.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    N, q = lp.N, lp.q
    keep = np.arange(N + 1 + q) if nonlinearity else np.concatenate([np.arange(N), N + 1 + np.arange(q)])
    ABW = np.hstack([lp.bA, lp.bB, lp.bBw])
    k = len(keep)
    Wg = np.zeros((N + 1 + q, N + 1 + q))
    Wg[N + 1:, N + 1:] = gamma ** 2 * np.eye(q)
    E = _pad(state_weight * np.eye(N), 1)

    b = _Builder()
    mult, p_of = _performance_common(b, lp, nonlinearity)
    F, Fp = lp.F, lp.Fplus
    S = ABW[:, keep]
    Zk = lp.Z[:, keep]
    Wk = Wg[np.ix_(keep, keep)]
    CDk = lp.CD[:, keep]
    CDxu = lp.CD[:, :N + 1]

    def Pk(v):
        return _pad(v["P"], k - N)

    b.psd_leq0(
        "decrease", k,
        lambda v: _sym(S.T @ v["P"] @ S) - Pk(v) + _pairing(CDk, mult(v, 1)[0]) + Zk.T @ Zk - Wk,
    )
    if nonlinearity:
        b.leq0("decrease_linear", lp.ell + 1, lambda v: (Fp - F).T @ p_of(v) + mult(v, 1)[1])
        b.psd_leq0(
            "positivity", N + 1,
            lambda v: E - _pad(v["P"], 1) + _pairing(CDxu, mult(v, 2)[0]),
        )
        b.leq0("positivity_linear", lp.ell + 1, lambda v: -F.T @ p_of(v) + mult(v, 2)[1])
    else:
        b.psd_leq0("positivity", N, lambda v: state_weight * np.eye(N) - v["P"])
    return b.build(kind="l2", ell=lp.ell, gamma=gamma, nonlinearity=nonlinearity)


def assemble_h2(lp: LiftedPerformance, Sigma, gamma: float, nonlinearity: bool = True) -> LmiProblem:
    """Robust H2 performance under i.i.d. noise with covariance ``Sigma``.

    The dissipation block acts on ``(xi_t, u_t)`` (noise enters only through
    the trace term) and includes ``||z_t||^2``; positivity is ``V >= 0``
    without the ``||xi||^2`` term; finally ``trace(P Bw Sigma Bw') <= gamma^2``.
    """
    N, q = lp.N, lp.q
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape == (1, 1) and q > 1:
        Sigma = Sigma[0, 0] * np.eye(q)
    if Sigma.shape != (q, q):
        raise DimensionMismatch("Sigma must be q x q")
    if np.min(np.linalg.eigvalsh(_sym(Sigma))) < -1e-12:
        raise ValueError("Sigma must be positive semidefinite")
    Zxu = lp.Z[:, :N + 1]
    Zw = lp.Z[:, N + 1:]
    if np.any(Zw != 0) and np.any(Sigma):
        raise ValueError("H2 performance requires Dzw = 0")
    keep = np.arange(N + 1) if nonlinearity else np.arange(N)
    AB = np.hstack([lp.bA, lp.bB])[:, keep]
    Zk = Zxu[:, keep]
    k = len(keep)
    BSB = lp.bBw @ Sigma @ lp.bBw.T

    b = _Builder()
    mult, p_of = _performance_common(b, lp, nonlinearity)
    F, Fp = lp.F, lp.Fplus

    b.psd_leq0(
        "decrease", k,
        lambda v: _sym(AB.T @ v["P"] @ AB) - _pad(v["P"], k - N)
        + _pairing(lp.CD[:, keep], mult(v, 1)[0]) + Zk.T @ Zk,
    )
    if nonlinearity:
        b.leq0("decrease_linear", lp.ell + 1, lambda v: (Fp - F).T @ p_of(v) + mult(v, 1)[1])
        b.psd_leq0(
            "positivity", N + 1,
            lambda v: -_pad(v["P"], 1) + _pairing(lp.CD[:, :N + 1], mult(v, 2)[0]),
        )
        b.leq0("positivity_linear", lp.ell + 1, lambda v: -F.T @ p_of(v) + mult(v, 2)[1])
    else:
        b.psd_leq0("positivity", N, lambda v: -v["P"])
    b.leq0("trace", 1, lambda v: np.atleast_1d(np.sum(v["P"] * BSB) - gamma ** 2))
    return b.build(kind="h2", ell=lp.ell, gamma=gamma, nonlinearity=nonlinearity)
