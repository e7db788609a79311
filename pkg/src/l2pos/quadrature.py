"""Product quadrature rules on balls and Reinhardt polydiscs in ℂⁿ.

Ball rule: z_j = t u_j e^{iθ_j} with u on the positive orthant of S^{n−1}, so
dV = t^{2n−1} (∏ u_j) dS(u) dt ∏ dθ_j. The radial factor uses composite
Gauss–Legendre on a geometrically graded mesh (resolves e^{−m|z|²} for large m),
the θ_j are trapezoidal (spectral for periodic integrands).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InputError, UnsupportedDimensionError
from .geometry import Domain


@dataclass(frozen=True)
class Rule:
    nodes: np.ndarray      # (N, n) complex
    weights: np.ndarray    # (N,)

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> complex:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def gauss(a: float, b: float, k: int):
    x, w = leggauss(k)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def composite_gauss(breaks, k: int):
    xs, ws = zip(*(gauss(a, b, k) for a, b in zip(breaks[:-1], breaks[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def trapezoid_angles(k: int):
    return 2 * np.pi * np.arange(k) / k, np.full(k, 2 * np.pi / k)


def _orthant(n: int, k: int):
    """Nodes u (K, n) on S^{n−1} ∩ [0,∞)ⁿ with weights (∏ u_j) dS."""
    if n == 1:
        return np.ones((1, 1)), np.ones(1)
    a, wa = gauss(0.0, np.pi / 2, k)
    if n == 2:
        u = np.stack([np.cos(a), np.sin(a)], axis=1)
        return u, wa * np.cos(a) * np.sin(a)
    if n == 3:
        b, wb = gauss(0.0, np.pi / 2, k)
        A, B = np.meshgrid(a, b, indexing="ij")
        WA, WB = np.meshgrid(wa, wb, indexing="ij")
        u = np.stack([np.sin(B) * np.cos(A), np.sin(B) * np.sin(A), np.cos(B)], axis=-1)
        w = WA * WB * np.sin(B) * np.prod(u, axis=-1)
        return u.reshape(-1, 3), w.reshape(-1)
    raise UnsupportedDimensionError(f"ball quadrature supports n <= 3, got {n}")


def radial_breaks(r: float, grading: int = 12, outer_panels: int = 4) -> np.ndarray:
    inner = [0.0] + [0.5 * r * 2.0 ** -j for j in range(grading, -1, -1)]
    outer = list(np.linspace(0.5 * r, r, outer_panels + 1)[1:])
    return np.array(inner + outer)


def ball_rule(n: int, r: float, radial: int = 10, polar: int = 16, angular: int = 16,
              grading: int = 12) -> Rule:
    """Quadrature on the ball |z| < r in ℂⁿ (n ≤ 3), centred at 0.

    ``radial`` Gauss nodes per radial panel, ``polar`` per orthant angle,
    ``angular`` trapezoid nodes per θ_j.
    """
    if r <= 0:
        raise InputError("ball radius must be positive")
    t, wt = composite_gauss(radial_breaks(r, grading), radial)
    wt = wt * t ** (2 * n - 1)
    u, wu = _orthant(n, polar)
    th, wth = trapezoid_angles(angular)
    phases = np.array(list(itertools.product(th, repeat=n)))
    wph = np.prod(np.array(list(itertools.product(wth, repeat=n))), axis=1)
    mod = t[:, None, None] * u[None, :, :]                       # (T, U, n)
    z = mod[:, :, None, :] * np.exp(1j * phases)[None, None]      # (T, U, P, n)
    w = wt[:, None, None] * wu[None, :, None] * wph[None, None, :]
    return Rule(z.reshape(-1, n), w.reshape(-1))


def reinhardt_rule(fiber: Domain, radial: int, angular: int) -> Rule:
    """Tensor rule on a polydisc or product of annuli: Gauss in each |w_j|, trapezoid in arg."""
    if fiber.kind != "polydisc":
        raise InputError("Reinhardt fiber must be a polydisc (optionally with inner radii)")
    if any(abs(c) > 0 for c in fiber.center):
        raise InputError("Reinhardt fiber must be centred at the origin")
    m = fiber.n
    inner = fiber.inner_radii or (0.0,) * m
    axes = []
    for j in range(m):
        rho, wr = gauss(inner[j], fiber.radii[j], radial)
        th, wth = trapezoid_angles(angular)
        w1 = (rho[:, None] * np.exp(1j * th)[None]).reshape(-1)
        ww = (wr[:, None] * rho[:, None] * wth[None]).reshape(-1)
        axes.append((w1, ww))
    nodes = np.array(list(itertools.product(*[a[0] for a in axes])))
    weights = np.prod(np.array(list(itertools.product(*[a[1] for a in axes]))), axis=1)
    return Rule(nodes.reshape(-1, m), weights)
