"""The seven benchmark plants and their reference margins."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .lti import TransferFunction, tf_from_coeffs

_B = [1, -1.95, 0.9, 0.05]
_A = [1, -2.8, 3.5, -2.412, 0.7209]

# (num, den, alpha*, (n_b, n_f), ell); coefficients descending in z
_TABLE = {
    1: ([0.1, 0], [1, -1.8, 0.81], 12.9960, (1, 0), 1),
    2: (_B, _A, 0.8027, (1, 4), 4),
    3: ([-c for c in _B], _A, 0.3054, (0, 1), 1),
    4: ([1, -1.5, 0.5, -0.5, 0.5], [4.4, -8.957, 9.893, -5.671, 2.207, -0.5], 3.8240, (0, 4), 4),
    5: ([-0.5, 0.1], [1, -0.9, 0.79, 0.089], 2.4475, (0, 1), 1),
    6: ([2, 0.92], [1, -0.5, 0], 0.9114, (1, 2), 2),
    7: ([1.341, -1.221, 0.6285, -0.5618, 0.1993],
        [1, -0.935, 0.7697, -1.118, 0.6917, -0.1352], 0.4347, (3, 3), 3),
}


@dataclass(frozen=True)
class BenchmarkCase:
    id: int
    num: tuple
    den: tuple
    alpha: float
    nb_nf: tuple
    ell: int
    tol: float = 1e-3

    @property
    def tf(self) -> TransferFunction:
        return tf_from_coeffs(self.num, self.den)


CASES = {
    k: BenchmarkCase(k, tuple(num), tuple(den), a, nbnf, ell, 5e-3 if k == 7 else 1e-3)
    for k, (num, den, a, nbnf, ell) in _TABLE.items()
}


def coefficient_checksum() -> str:
    """SHA-256 over the raw (un-normalised) coefficients of all cases."""
    payload = json.dumps({str(k): [list(c.num), list(c.den)] for k, c in sorted(CASES.items())},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
