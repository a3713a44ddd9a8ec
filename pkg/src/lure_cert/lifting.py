"""Lifted realization of the plant with a window of past inputs and outputs.

Stacking convention: OLDEST-FIRST everywhere. The lifted state is

    xi_t = (x_{t-l}, u_{t-l}, ..., u_{t-1})

and the lifted outputs are ``(y_{t-l}, ..., y_t, u_{t-l}, ..., u_t)``. A
newest-first stacking is related to this one by the exchange matrix applied
to each output half; with oldest-first stacking the function-value shift is
``F = [I | 0]`` and ``Fplus = [0 | I]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .lti import StateSpace


@dataclass(frozen=True)
class LiftedSystem:
    bA: np.ndarray
    bB: np.ndarray
    bC: np.ndarray
    bD: np.ndarray
    F: np.ndarray
    Fplus: np.ndarray
    ell: int
    n: int

    @property
    def N(self) -> int:
        """Lifted state dimension ``n + ell``."""
        return self.bA.shape[0]

    @property
    def CD(self) -> np.ndarray:
        """``[bC bD]``, the output map acting on ``(xi_t, u_t)``."""
        return np.hstack([self.bC, self.bD])

    @property
    def AB(self) -> np.ndarray:
        return np.hstack([self.bA, self.bB])


def f_matrices(ell: int):
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    F = np.hstack([np.eye(ell), np.zeros((ell, 1))])
    Fplus = np.hstack([np.zeros((ell, 1)), np.eye(ell)])
    return F, Fplus


def history_dynamics(A: np.ndarray, B: np.ndarray, ell: int):
    """State update of the input-history lift for an ``m``-input plant.

    Returns ``(bA, bB, X)`` where ``X[k]`` (``k = 0..ell``) is the ``n x (N+m)``
    map from ``(xi_t, v_t)`` to ``x_{t-k}``. The input history is stored
    oldest-first, one ``m``-block per time step.
    """
    n, m = B.shape
    N = n + m * ell
    bA = np.zeros((N, N))
    bB = np.zeros((N, m))
    bA[:n, :n] = A
    if ell == 0:
        bB[:n] = B
    else:
        bA[:n, n:n + m] = B
        # history shift: slot j+1 moves into slot j
        bA[n:N - m, n + m:N] = np.eye(m * (ell - 1))
        bB[N - m:, :] = np.eye(m)

    X = [None] * (ell + 1)
    cur = np.zeros((n, N + m))
    cur[:, :n] = np.eye(n)
    X[ell] = cur.copy()
    for j in range(ell):
        # x_{t-ell+j+1} = A x_{t-ell+j} + B v_{t-ell+j}
        nxt = A @ cur
        nxt[:, n + m * j:n + m * (j + 1)] += B
        cur = nxt
        X[ell - j - 1] = cur.copy()
    return bA, bB, X


def input_selector(n: int, m: int, ell: int, k: int, col: int = 0) -> np.ndarray:
    """Row map from ``(xi_t, v_t)`` to component ``col`` of ``v_{t-k}``."""
    N = n + m * ell
    row = np.zeros(N + m)
    if k == 0:
        row[N + col] = 1.0
    else:
        row[n + m * (ell - k) + col] = 1.0
    return row


def build_lifted(ss: StateSpace, ell: int) -> LiftedSystem:
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    n = ss.n
    bA, bB, X = history_dynamics(ss.A, ss.B, ell)
    N = bA.shape[0]
    rows_y, rows_u = [], []
    for k in range(ell, -1, -1):
        u_row = input_selector(n, 1, ell, k)
        rows_y.append((ss.C @ X[k])[0] + ss.D * u_row)
        rows_u.append(u_row)
    CD = np.vstack(rows_y + rows_u)
    F, Fplus = f_matrices(ell)
    return LiftedSystem(
        bA=bA, bB=bB, bC=CD[:, :N], bD=CD[:, N:], F=F, Fplus=Fplus, ell=ell, n=n
    )


def transform_lifted(ls: LiftedSystem, T: np.ndarray) -> LiftedSystem:
    """Apply the plant-state change ``x = T x'`` to a lifted system."""
    n, N = ls.n, ls.N
    S = np.eye(N)
    S[:n, :n] = T
    Si = np.linalg.inv(S)
    return LiftedSystem(
        bA=Si @ ls.bA @ S, bB=Si @ ls.bB, bC=ls.bC @ S, bD=ls.bD,
        F=ls.F, Fplus=ls.Fplus, ell=ls.ell, n=n,
    )


def simulate_lifted(ls: LiftedSystem, xi0, u):
    xi0 = np.asarray(xi0, dtype=float).ravel()
    if xi0.shape != (ls.N,):
        raise DimensionMismatch(f"xi0 has length {xi0.size}, expected {ls.N}")
    u = np.asarray(u, dtype=float).ravel()
    states = np.zeros((u.size + 1, ls.N))
    outputs = np.zeros((u.size, ls.bC.shape[0]))
    states[0] = xi0
    for t, ut in enumerate(u):
        outputs[t] = ls.bC @ states[t] + ls.bD[:, 0] * ut
        states[t + 1] = ls.bA @ states[t] + ls.bB[:, 0] * ut
    return states, outputs
