"""Piecewise-linear monotone nonlinearities with exact quadratic potentials."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SATURATION = 1e6


@dataclass(frozen=True)
class PwlNonlinearity:
    """``phi(0) = 0`` with slope ``slopes[i]`` on the i-th interval between breakpoints.

    ``breakpoints`` is sorted and has one fewer entry than ``slopes``. Outside
    ``|y| <= SATURATION`` the slope is zero, so ``phi`` is bounded.
    """

    breakpoints: np.ndarray
    slopes: np.ndarray
    _knots: np.ndarray = field(init=False, repr=False)
    _s: np.ndarray = field(init=False, repr=False)
    _phi_k: np.ndarray = field(init=False, repr=False)
    _pot_k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float).ravel()
        s = np.asarray(self.slopes, dtype=float).ravel()
        if len(s) != len(b) + 1:
            raise ValueError("need len(slopes) == len(breakpoints) + 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(s < 0):
            raise ValueError("slopes must be nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "slopes", s)

        # 0 is always a knot so that every interval lies on one side of it and
        # values are accumulated outward from the origin (no cancellation)
        inner = b[(np.abs(b) < SATURATION) & (b != 0.0)]
        knots = np.unique(np.concatenate([[-SATURATION, 0.0, SATURATION], inner]))
        mids = 0.5 * (knots[:-1] + knots[1:])
        si = s[np.searchsorted(b, mids, side="right")]
        h = np.diff(knots)
        j0 = int(np.searchsorted(knots, 0.0))

        phi = np.zeros(len(knots))
        pot = np.zeros(len(knots))
        for i in range(j0, len(knots) - 1):
            phi[i + 1] = phi[i] + si[i] * h[i]
            pot[i + 1] = pot[i] + phi[i] * h[i] + 0.5 * si[i] * h[i] ** 2
        for i in range(j0 - 1, -1, -1):
            phi[i] = phi[i + 1] - si[i] * h[i]
            pot[i] = pot[i + 1] - phi[i + 1] * h[i] + 0.5 * si[i] * h[i] ** 2
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_s", si)
        object.__setattr__(self, "_phi_k", phi)
        object.__setattr__(self, "_pot_k", pot)

    def _locate(self, y):
        """Anchor knot (the endpoint nearer the origin), offset and slope for each ``y``."""
        y = np.asarray(y, dtype=float)
        k = self._knots
        j = np.clip(np.searchsorted(k, y, side="right") - 1, 0, len(k) - 2)
        inside = (y >= k[0]) & (y <= k[-1])
        seg = np.where(inside, self._s[j], 0.0)
        anchor = np.where(k[j] >= 0.0, j, j + 1)
        anchor = np.where(y < k[0], 0, np.where(y > k[-1], len(k) - 1, anchor))
        return y, anchor, y - k[anchor], seg

    def __call__(self, y):
        y, a, d, seg = self._locate(y)
        return self._phi_k[a] + seg * d

    def potential(self, y):
        """Exact integral of ``phi`` from 0 to ``y``."""
        y, a, d, seg = self._locate(y)
        return self._pot_k[a] + self._phi_k[a] * d + 0.5 * seg * d * d

    def slope(self, y):
        return self._locate(y)[3]

    @property
    def max_slope(self) -> float:
        return float(np.max(self.slopes))

    @classmethod
    def random(cls, rng: np.random.Generator, slope_max: float, n_breaks=None, scale=1.0):
        """Random draw with slopes strictly inside ``(0, slope_max)``."""
        if n_breaks is None:
            n_breaks = int(rng.integers(0, 7))
        b = np.unique(rng.normal(scale=scale, size=n_breaks))
        s = slope_max * rng.uniform(0.02, 0.98, size=len(b) + 1)
        return cls(breakpoints=b, slopes=s)
