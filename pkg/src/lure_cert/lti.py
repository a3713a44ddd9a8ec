"""SISO discrete-time LTI systems.

Transfer functions store coefficients in descending powers of ``z``. The
state-space realization used everywhere is the controllable canonical form,
so certificates (which depend on the realization) are reproducible.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    DimensionMismatch,
    ImproperTransferFunction,
    SingularAtZ,
    ZeroDenominator,
)

POLE_TOL = 1e-12


@dataclass(frozen=True)
class TransferFunction:
    num: np.ndarray
    den: np.ndarray

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def __repr__(self):
        return f"TransferFunction(num={self.num.tolist()}, den={self.den.tolist()})"


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, 1) or self.C.shape != (1, n):
            raise DimensionMismatch(
                f"inconsistent realization: A{self.A.shape} B{self.B.shape} C{self.C.shape}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]


System = Union[TransferFunction, StateSpace]


def _trim_leading_zeros(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


def tf_from_coeffs(num, den) -> TransferFunction:
    """Build a proper transfer function, normalised to a monic denominator."""
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    if den.size == 0 or not np.any(den):
        raise ZeroDenominator("denominator is identically zero")
    den = _trim_leading_zeros(den)
    num = _trim_leading_zeros(num) if num.size else np.zeros(1)
    if np.any(num) and len(num) > len(den):
        raise ImproperTransferFunction(
            f"deg(num)={len(num) - 1} exceeds deg(den)={len(den) - 1}"
        )
    lead = den[0]
    return TransferFunction(num=num / lead, den=den / lead)


def ss_from_matrices(A, B, C, D=0.0) -> StateSpace:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        A = np.zeros((0, 0))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, 1)
    C = np.asarray(C, dtype=float).reshape(1, n)
    return StateSpace(A=A, B=B, C=C, D=float(np.asarray(D, dtype=float).reshape(())))


def tf_to_ss(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization.

    ``A`` has the negated denominator coefficients in its first row and ones on
    the subdiagonal, ``B = e_1`` and ``D`` is the direct feedthrough.
    """
    den = tf.den
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
    D = num[0]
    c = num[1:] - D * den[1:]
    A = np.zeros((n, n))
    if n:
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    if n:
        B[0, 0] = 1.0
    return StateSpace(A=A, B=B, C=c.reshape(1, n), D=float(D))


def realize(sys: System) -> StateSpace:
    """Return the state-space realization a certificate refers to."""
    if isinstance(sys, StateSpace):
        return sys
    return tf_to_ss(sys)


def _check_pole(poles, z):
    if len(poles) and np.min(np.abs(np.asarray(poles) - z)) <= POLE_TOL * max(abs(z), 1.0):
        raise SingularAtZ(f"z={z} is a pole")


def eval(sys: System, z: complex) -> complex:  # noqa: A001 - mirrors the operation name
    """Evaluate the transfer function at ``z``."""
    z = complex(z)
    if isinstance(sys, TransferFunction):
        _check_pole(np.roots(sys.den), z)
        return complex(np.polyval(sys.num, z) / np.polyval(sys.den, z))
    if sys.n == 0:
        return complex(sys.D)
    _check_pole(np.linalg.eigvals(sys.A), z)
    x = np.linalg.solve(z * np.eye(sys.n) - sys.A, sys.B.astype(complex))
    return complex((sys.C @ x).item() + sys.D)


def freqresp(sys: System, z) -> np.ndarray:
    """Vectorised evaluation on an array of points."""
    return np.array([eval(sys, zi) for zi in np.ravel(z)])


def spectral_radius(A: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def is_schur(ss: System, tol: float = 0.0) -> bool:
    ss = realize(ss)
    return spectral_radius(ss.A) < 1.0 - tol


def loop_shift(G: System, alpha: float) -> StateSpace:
    """Realization of ``-(1 + alpha*G)``.

    A slope-restricted nonlinearity in ``(0, alpha)`` in negative feedback
    with ``G`` is equivalent to ``-(1 + alpha*G)`` in positive feedback with a
    monotone nonlinearity. The state (and hence ``A``, ``B``) is shared with
    the realization of ``G``.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ss = realize(G)
    return StateSpace(A=ss.A, B=ss.B, C=-alpha * ss.C, D=-1.0 - alpha * ss.D)


# -- plant files -------------------------------------------------------------

def plant_from_dict(d: dict) -> System:
    if "ss" in d:
        s = d["ss"]
        return ss_from_matrices(s["A"], s["B"], s["C"], s.get("D", 0.0))
    if "num" in d and "den" in d:
        return tf_from_coeffs(d["num"], d["den"])
    raise ValueError("plant needs either 'num'/'den' or 'ss'")


def plant_to_dict(sys: System) -> dict:
    if isinstance(sys, TransferFunction):
        return {"num": sys.num.tolist(), "den": sys.den.tolist()}
    return {"ss": {"A": sys.A.tolist(), "B": sys.B[:, 0].tolist(),
                   "C": sys.C[0].tolist(), "D": sys.D}}


def load_plant(path) -> System:
    with open(path) as fh:
        return plant_from_dict(json.load(fh))


def fingerprint(sys: System) -> str:
    """SHA-256 of the canonicalised plant coefficients."""
    payload = json.dumps(plant_to_dict(sys), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
