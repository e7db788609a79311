"""Radial C∞ cutoff: χ = 1 on |z| ≤ r/2, χ = 0 on |z| ≥ r.

The transition uses the smooth step a/(a+b) with a = S(1−σ), b = S(σ),
S(x) = exp(−1/x), σ = 2|z|/r − 1, so every derivative vanishes at both ends.
"""

from __future__ import annotations

import numpy as np


def _s(x):
    return np.exp(-1.0 / x)


def _step_derivs(sig):
    """step, step', step'' for σ in the open interval (0, 1)."""
    u = 1.0 - sig
    a, b = _s(u), _s(sig)
    da, db = -a / u ** 2, b / sig ** 2
    d2a = a * (1.0 / u ** 4 - 2.0 / u ** 3)
    d2b = b * (1.0 / sig ** 4 - 2.0 / sig ** 3)
    tot = a + b
    num = da * b - a * db
    step = a / tot
    d1 = num / tot ** 2
    d2 = (d2a * b - a * d2b) / tot ** 2 - 2.0 * num * (da + db) / tot ** 3
    return step, d1, d2


class Cutoff:
    def __init__(self, radius: float):
        if radius <= 0:
            raise ValueError("cutoff radius must be positive")
        self.radius = float(radius)

    def radial(self, t):
        """χ(t), χ'(t), χ''(t) for t = |z|."""
        t = np.asarray(t, dtype=float)
        r = self.radius
        sig = 2.0 * t / r - 1.0
        inside = (sig > 0.0) & (sig < 1.0)
        safe = np.where(inside, sig, 0.5)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            st, d1, d2 = _step_derivs(safe)
        chi = np.where(sig <= 0.0, 1.0, np.where(inside, st, 0.0))
        dchi = np.where(inside, d1 * (2.0 / r), 0.0)
        d2chi = np.where(inside, d2 * (2.0 / r) ** 2, 0.0)
        return chi, dchi, d2chi

    def of_square(self, s):
        """G(s), G'(s), G''(s) where χ = G(|z|²); smooth in s, zero-safe at the origin."""
        s = np.asarray(s, dtype=float)
        t = np.sqrt(s)
        chi, d1, d2 = self.radial(t)
        moving = d1 != 0.0
        tt = np.where(moving | (d2 != 0.0), t, 1.0)
        g1 = np.where(moving, d1 / (2.0 * tt), 0.0)
        g2 = np.where(moving | (d2 != 0.0), (tt * d2 - d1) / (4.0 * tt ** 3), 0.0)
        return chi, g1, g2

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.of_square(np.sum(np.abs(z) ** 2, axis=-1))[0]

    def dbar(self, z) -> np.ndarray:
        """∂χ/∂z̄_k = G'(|z|²) z_k, shape (..., n)."""
        z = np.asarray(z, dtype=complex)
        g1 = self.of_square(np.sum(np.abs(z) ** 2, axis=-1))[1]
        return g1[..., None] * z
