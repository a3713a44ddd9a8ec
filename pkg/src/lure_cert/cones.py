"""Interpolation conditions for convex functions through the origin and their dual cone.

Orientation: a multiplier ``(M, m)`` is paired with data as

    u^T M y + m^T f

which is what the block ``1/2 [C D]^T [[0, M^T], [M, 0]] [C D]`` produces
when applied to the stacked (y-block, u-block) outputs. In this orientation
the dual cone is

    M @ 1 >= 0  (row sums),  M.T @ 1 + m >= 0,  M_ij <= 0 for i != j.

All vectors are stacked oldest-first; the cone is invariant under a common
permutation of indices, so the stacking order does not affect membership.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .pwl import PwlNonlinearity


@dataclass(frozen=True)
class Multiplier:
    M: np.ndarray
    m: np.ndarray


@dataclass(frozen=True)
class InterpData:
    y: np.ndarray
    u: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        if not (len(self.y) == len(self.u) == len(self.f)):
            raise DimensionMismatch("y, u, f must have equal lengths")


@dataclass(frozen=True)
class DualConeWitness:
    """Nonnegative coefficients of the interpolation inequalities."""

    Lambda: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray

    def multiplier_yu(self) -> Multiplier:
        """``(M, m)`` pairing with ``y^T M u``: ``M^T 1 = gamma`` and ``M 1 + m = delta``."""
        L = self.Lambda
        one = np.ones(len(self.gamma))
        M = np.diag(L.T @ one) - L + np.diag(self.gamma)
        m = (L - L.T) @ one - self.gamma + self.delta
        return Multiplier(M, m)

    def multiplier(self) -> Multiplier:
        """Same inequality expressed in the ``u^T M y`` orientation."""
        pm = self.multiplier_yu()
        return Multiplier(pm.M.T.copy(), pm.m)

    @classmethod
    def random(cls, rng: np.random.Generator, size: int, density: float = 0.7):
        L = rng.exponential(size=(size, size)) * (rng.random((size, size)) < density)
        np.fill_diagonal(L, 0.0)
        g = rng.exponential(size=size) * (rng.random(size) < density)
        d = rng.exponential(size=size) * (rng.random(size) < density)
        return cls(L, g, d)


def check_interpolable(d: InterpData, tol: float = 1e-12) -> bool:
    y, u, f = (np.asarray(a, dtype=float) for a in (d.y, d.u, d.f))
    # f_i >= f_j + u_j (y_i - y_j) for all i, j
    lower = f[None, :] + u[None, :] * (y[:, None] - y[None, :])
    if np.any(f[:, None] < lower - tol):
        return False
    if np.any(u * y < f - tol):
        return False
    return bool(np.all(f >= -tol))


def is_doubly_hyperdominant(M, tol: float = 0.0) -> bool:
    M = np.asarray(M, dtype=float)
    off = M[~np.eye(M.shape[0], dtype=bool)]
    return bool(
        np.all(off <= tol) and np.all(M.sum(axis=0) >= -tol) and np.all(M.sum(axis=1) >= -tol)
    )


def cone_violations(mult: Multiplier) -> dict:
    """Signed violations (positive = violated) of each cone condition family."""
    M = np.asarray(mult.M, dtype=float)
    m = np.asarray(mult.m, dtype=float)
    off = M[~np.eye(M.shape[0], dtype=bool)]
    return {
        "row_sums": float(np.max(-M.sum(axis=1), initial=-np.inf)),
        "col_sums_plus_m": float(np.max(-(M.sum(axis=0) + m), initial=-np.inf)),
        "off_diagonal": float(np.max(off, initial=-np.inf)),
    }


def in_dual_cone(mult: Multiplier, tol: float = 1e-8) -> bool:
    M = np.asarray(mult.M)
    if M.shape != (len(mult.m), len(mult.m)):
        raise DimensionMismatch("M must be square with the length of m")
    return all(v <= tol for v in cone_violations(mult).values())


def dual_cone_constraints(ell: int):
    """Linear maps ``g(M, m) <= 0`` describing the dual cone for ``ell + 1`` points.

    Returns a list of ``(label, fn)`` where ``fn(M, m)`` is affine and returns
    a vector that must be elementwise nonpositive.
    """
    L = ell + 1
    off = ~np.eye(L, dtype=bool)
    cons = [
        ("row_sums", lambda M, m: -(M @ np.ones(L))),
        ("col_sums_plus_m", lambda M, m: -(M.T @ np.ones(L) + m)),
    ]
    if L > 1:
        cons.append(("off_diagonal", lambda M, m: M[off]))
    return cons


def quad_linear_value(mult: Multiplier, d: InterpData) -> float:
    M = np.asarray(mult.M, dtype=float)
    n = len(d.y)
    if M.shape != (n, n) or len(mult.m) != n:
        raise DimensionMismatch("multiplier and data sizes differ")
    return float(np.asarray(d.u) @ M @ np.asarray(d.y) + np.asarray(mult.m) @ np.asarray(d.f))


def interp_from_function(phi: PwlNonlinearity, y) -> InterpData:
    y = np.asarray(y, dtype=float)
    return InterpData(y=y, u=phi(y), f=phi.potential(y))


def sample_interpolable(ell: int, slope_max: float, rng_seed: int, scale: float = 1.0) -> InterpData:
    """Exact samples of a random convex function with piecewise-linear gradient."""
    if slope_max <= 0:
        raise ValueError("slope_max must be positive")
    rng = np.random.default_rng(rng_seed)
    phi = PwlNonlinearity.random(rng, slope_max, scale=scale)
    y = rng.normal(scale=2.0 * scale, size=ell + 1)
    return interp_from_function(phi, y)
