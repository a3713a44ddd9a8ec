"""Conic translation of :class:`LmiProblem` and a thin solver adapter.

Feasibility is decided by a phase-I program: minimise a common margin ``t``
subject to ``g(x) <= t`` for every inequality (semidefinite or elementwise)
and ``t >= -1``. The solver's answer is never trusted on its own; a point is
reported Feasible only when the solver converged and an independent
re-evaluation of the original constraints passes the residual tolerance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, MissingVariable, SolverError, TimeLimit
from .lmi import LmiProblem

log = logging.getLogger(__name__)

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
INACCURATE = "Inaccurate"
SOLVER_ERROR = "SolverError"

SQRT2 = math.sqrt(2.0)


def svec(X: np.ndarray) -> np.ndarray:
    """Scaled upper-triangular column-major vectorisation (``<X, Y> = svec(X) . svec(Y)``)."""
    n = X.shape[0]
    iu = np.triu_indices(n)
    # column-major order over the upper triangle: sort by (col, row)
    order = np.lexsort((iu[0], iu[1]))
    r, c = iu[0][order], iu[1][order]
    w = np.where(r == c, 1.0, SQRT2)
    return w * X[r, c]


def smat(v: np.ndarray) -> np.ndarray:
    n = int(round((math.sqrt(8 * len(v) + 1) - 1) / 2))
    iu = np.triu_indices(n)
    order = np.lexsort((iu[0], iu[1]))
    r, c = iu[0][order], iu[1][order]
    X = np.zeros((n, n))
    X[r, c] = np.where(r == c, v, v / SQRT2)
    X[c, r] = X[r, c]
    return X


def _sym_positions(n: int):
    iu = np.triu_indices(n)
    order = np.lexsort((iu[0], iu[1]))
    return iu[0][order], iu[1][order]


@dataclass(frozen=True)
class ConicProgram:
    """``min t  s.t.  A [x; t] + s = b``, ``s`` in the product of ``cones``.

    ``cones`` is a list of ``(kind, size)`` with kind ``"zero"``, ``"nonneg"``
    or ``"psd"`` (size = side length). The last column of ``A`` is ``t``.
    """

    problem: LmiProblem
    offsets: dict
    n_x: int
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    row_labels: list = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return self.n_x + 1

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for v in self.problem.variables:
            lo, hi = self.offsets[v.name]
            chunk = np.asarray(x[lo:hi], dtype=float)
            if v.symmetric:
                r, c = _sym_positions(v.shape[0])
                X = np.zeros(v.shape)
                X[r, c] = chunk
                X[c, r] = chunk
                out[v.name] = X
            else:
                out[v.name] = chunk.reshape(v.shape)
        return out

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.n_x)
        for v in self.problem.variables:
            lo, hi = self.offsets[v.name]
            val = np.asarray(values[v.name], dtype=float)
            if v.symmetric:
                r, c = _sym_positions(v.shape[0])
                x[lo:hi] = 0.5 * (val[r, c] + val[c, r])
            else:
                x[lo:hi] = val.ravel()
        return x

    def constraint_values(self, x: np.ndarray) -> list:
        """Reconstruct each constraint expression from the conic data at ``[x; t=0]``."""
        z = np.concatenate([x, [0.0]])
        s = self.b - self.A @ z
        out, pos = [], 0
        for (kind, size), label in zip(self.cones, self.row_labels):
            if kind == "psd":
                k = size * (size + 1) // 2
                out.append((label, -smat(s[pos:pos + k])))
            else:
                k = size
                out.append((label, -s[pos:pos + k]))
            pos += k
        return out


def to_conic(p: LmiProblem) -> ConicProgram:
    offsets, n_x = {}, 0
    for v in p.variables:
        offsets[v.name] = (n_x, n_x + v.size)
        n_x += v.size

    def values_at(k: Optional[int]):
        vals = {}
        for v in p.variables:
            lo, hi = offsets[v.name]
            if v.symmetric:
                X = np.zeros(v.shape)
                if k is not None and lo <= k < hi:
                    r, c = _sym_positions(v.shape[0])
                    X[r[k - lo], c[k - lo]] = X[c[k - lo], r[k - lo]] = 1.0
                vals[v.name] = X
            else:
                a = np.zeros(v.size)
                if k is not None and lo <= k < hi:
                    a[k - lo] = 1.0
                vals[v.name] = a.reshape(v.shape)
        return vals

    base = values_at(None)
    units = [values_at(k) for k in range(n_x)]

    blocks_A, blocks_b, cones, labels = [], [], [], []

    def add(kind, size, label, expr, vec, margin):
        e0 = np.asarray(expr(base), dtype=float)
        cols = [vec(np.asarray(expr(u), dtype=float) - e0) for u in units]
        b0 = -vec(e0)
        A = np.column_stack(cols + [margin]) if cols else margin.reshape(-1, 1)
        blocks_A.append(A)
        blocks_b.append(b0)
        cones.append((kind, size))
        labels.append(label)

    for c in p.psd:
        side = c.side
        e0 = np.asarray(c.expr(base))
        if e0.shape != (side, side):
            raise DimensionMismatch(f"{c.label}: expected {side}x{side}, got {e0.shape}")
        # expr(x) - t I <= 0  <=>  -expr(x) + t I in PSD
        add("psd", side, c.label, c.expr, svec, -svec(np.eye(side)))
    for c in p.linear:
        e0 = np.atleast_1d(np.asarray(c.expr(base)))
        if e0.shape != (c.size,):
            raise DimensionMismatch(f"{c.label}: expected length {c.size}, got {e0.shape}")
        expr = lambda v, f=c.expr: np.atleast_1d(np.asarray(f(v), dtype=float))
        if c.equality:
            add("zero", c.size, c.label, expr, lambda a: a, np.zeros(c.size))
        else:
            add("nonneg", c.size, c.label, expr, lambda a: a, -np.ones(c.size))
    # t >= -1
    tb = np.zeros((1, n_x + 1))
    tb[0, -1] = -1.0
    blocks_A.append(tb)
    blocks_b.append(np.ones(1))
    cones.append(("nonneg", 1))
    labels.append("margin_bound")

    A = sp.csc_matrix(np.vstack(blocks_A))
    A.eliminate_zeros()
    return ConicProgram(p, offsets, n_x, A, np.concatenate(blocks_b), cones, labels)


# -- residuals ---------------------------------------------------------------

@dataclass(frozen=True)
class ResidualReport:
    """Per-constraint residuals; positive values are violations."""

    entries: tuple  # (label, kind, value)

    @property
    def worst(self) -> float:
        return max((e[2] for e in self.entries), default=-np.inf)

    @property
    def worst_label(self) -> Optional[str]:
        if not self.entries:
            return None
        return max(self.entries, key=lambda e: e[2])[0]

    def by_label(self) -> dict:
        return {lab: val for lab, _, val in self.entries}

    def passes(self, tol: float) -> bool:
        return self.worst <= tol


def residuals(p: LmiProblem, values: dict) -> ResidualReport:
    for v in p.variables:
        if v.name not in values:
            raise MissingVariable(v.name)
        if np.shape(values[v.name]) != v.shape:
            raise DimensionMismatch(f"{v.name}: expected shape {v.shape}")
    entries = []
    for c in p.psd:
        E = np.asarray(c.expr(values), dtype=float)
        lam = float(np.max(np.linalg.eigvalsh(0.5 * (E + E.T))))
        entries.append((c.label, "psd", lam))
    for c in p.linear:
        g = np.atleast_1d(np.asarray(c.expr(values), dtype=float))
        val = float(np.max(np.abs(g))) if c.equality else float(np.max(g))
        entries.append((c.label, "eq" if c.equality else "ineq", val))
    return ResidualReport(tuple(entries))


def value_scale(values: dict) -> float:
    """``1 + max |entry|`` over all variables, used to make tolerances relative."""
    return 1.0 + max((float(np.max(np.abs(v))) for v in values.values() if np.size(v)), default=0.0)


# -- solving -----------------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 50000
    time_limit: Optional[float] = None
    solver: str = "clarabel"
    verbose: bool = False


@dataclass(frozen=True)
class Solution:
    status: str
    values: dict
    margin: float
    report: Optional[ResidualReport]
    diagnostics: dict

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


def _clarabel(cp: ConicProgram, s: SolverSettings):
    import clarabel

    cones = []
    for kind, size in cp.cones:
        if kind == "zero":
            cones.append(clarabel.ZeroConeT(size))
        elif kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(size))
        else:
            cones.append(clarabel.PSDTriangleConeT(size))
    st = clarabel.DefaultSettings()
    st.verbose = s.verbose
    st.max_iter = int(s.max_iter)
    st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = s.tol
    if s.time_limit is not None:
        st.time_limit = float(s.time_limit)
    q = np.zeros(cp.n_vars)
    q[-1] = 1.0
    P = sp.csc_matrix((cp.n_vars, cp.n_vars))
    try:
        sol = clarabel.DefaultSolver(P, q, cp.A, cp.b, cones, st).solve()
    except Exception as exc:  # adapter boundary
        raise SolverError(f"clarabel failed: {exc}") from exc
    status = str(sol.status)
    if status == "MaxTime":
        raise TimeLimit(f"time limit {s.time_limit}s reached")
    mapped = {
        "Solved": "solved",
        "AlmostSolved": "inaccurate",
        "MaxIterations": "inaccurate",
        "InsufficientProgress": "inaccurate",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
    }.get(status, "error")
    diag = {"solver": "clarabel", "raw_status": status, "iterations": int(sol.iterations),
            "solve_time": float(sol.solve_time), "r_prim": float(sol.r_prim),
            "r_dual": float(sol.r_dual)}
    return mapped, np.asarray(sol.x, dtype=float), diag


def _cvxopt(cp: ConicProgram, s: SolverSettings):
    import cvxopt
    from cvxopt import solvers

    # cvxopt stores PSD slacks as full column-major matrices; rows are reordered
    # so that the zero cone becomes an explicit equality block.
    G_rows, h_rows, A_rows, b_rows = [], [], [], []
    dims = {"l": 0, "q": [], "s": []}
    Ad = cp.A.toarray()
    pos = 0
    lin, psd = [], []
    for kind, size in cp.cones:
        k = size * (size + 1) // 2 if kind == "psd" else size
        rows = slice(pos, pos + k)
        pos += k
        if kind == "zero":
            A_rows.append(Ad[rows])
            b_rows.append(cp.b[rows])
        elif kind == "nonneg":
            lin.append((Ad[rows], cp.b[rows]))
        else:
            psd.append((size, Ad[rows], cp.b[rows]))
    for G, h in lin:
        G_rows.append(G)
        h_rows.append(h)
        dims["l"] += len(h)
    for size, G, h in psd:
        r, c = _sym_positions(size)
        w = np.where(r == c, 1.0, 1.0 / SQRT2)
        full_G = np.zeros((size * size, G.shape[1]))
        full_h = np.zeros(size * size)
        for idx, (i, j) in enumerate(zip(r, c)):
            for a, bb in ((i, j), (j, i)):
                full_G[a + bb * size] = w[idx] * G[idx]
                full_h[a + bb * size] = w[idx] * h[idx]
        G_rows.append(full_G)
        h_rows.append(full_h)
        dims["s"].append(size)
    c = np.zeros(cp.n_vars)
    c[-1] = 1.0
    args = [cvxopt.matrix(c), cvxopt.matrix(np.vstack(G_rows)), cvxopt.matrix(np.concatenate(h_rows)), dims]
    if A_rows:
        args += [cvxopt.matrix(np.vstack(A_rows)), cvxopt.matrix(np.concatenate(b_rows))]
    opts = {"show_progress": s.verbose, "maxiters": int(min(s.max_iter, 500)),
            "abstol": s.tol, "reltol": s.tol, "feastol": s.tol}
    try:
        sol = solvers.conelp(*args, options=opts)
    except (ValueError, ArithmeticError) as exc:
        raise SolverError(f"cvxopt failed: {exc}") from exc
    status = sol["status"]
    mapped = {"optimal": "solved", "unknown": "inaccurate",
              "primal infeasible": "infeasible"}.get(status, "error")
    x = np.zeros(cp.n_vars) if sol["x"] is None else np.asarray(sol["x"]).ravel()
    diag = {"solver": "cvxopt", "raw_status": status, "iterations": int(sol.get("iterations", 0)),
            "r_prim": float(sol.get("primal infeasibility") or 0.0),
            "r_dual": float(sol.get("dual infeasibility") or 0.0)}
    return mapped, x, diag


ADAPTERS = {"clarabel": _clarabel, "cvxopt": _cvxopt}


def solve(cp: ConicProgram, settings: Optional[SolverSettings] = None) -> Solution:
    """Run the phase-I program and classify the outcome.

    Residuals of the original constraints are compared against
    ``settings.tol * value_scale(values)`` so that the acceptance threshold
    follows the magnitude of the returned point.
    """
    settings = settings or SolverSettings()
    try:
        adapter = ADAPTERS[settings.solver]
    except KeyError:
        raise SolverError(f"unknown solver {settings.solver!r}") from None
    mapped, z, diag = adapter(cp, settings)
    values = cp.unpack(z[:cp.n_x])
    margin = float(z[-1])
    if mapped == "error":
        return Solution(SOLVER_ERROR, values, margin, None, diag)
    if mapped == "infeasible":
        return Solution(INFEASIBLE, values, margin, None, diag)
    report = residuals(cp.problem, values)
    ok = report.passes(settings.tol * value_scale(values))
    diag["worst_residual"] = report.worst
    diag["worst_label"] = report.worst_label
    if mapped == "inaccurate":
        log.warning("solver returned %s (margin %.3g); treated as inaccurate", diag["raw_status"], margin)
        return Solution(INACCURATE, values, margin, report, diag)
    return Solution(FEASIBLE if ok else INFEASIBLE, values, margin, report, diag)


def solve_problem(p: LmiProblem, settings: Optional[SolverSettings] = None) -> Solution:
    return solve(to_conic(p), settings)
