"""Weights, domains, complex Hessians and pointwise positivity checks.

The base metric is always the Euclidean ω = i∂∂̄|z|², so "eigenvalues with respect
to ω" are ordinary Hermitian eigenvalues of the complex Hessian.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import sympy as sp
from scipy.stats import qmc

from .core import HermitianMatrix, eig_hermitian, q_smallest_sum
from .errors import InputError, MarginError, PreconditionError
from .expressions import parse_weight

DEFAULT_TOL = 1e-9
DEFAULT_FD_STEP = 1e-3
INTERIOR_MARGIN = 0.05


def _as_points(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.shape[-1:] != (dim,):
        raise InputError(f"points must have trailing dimension {dim}, got {z.shape}")
    return z


def halton(dim: int, count: int, skip: int = 0) -> np.ndarray:
    """Unscrambled Halton points in [0, 1)^dim (deterministic)."""
    return qmc.Halton(d=dim, scramble=False).random(count + skip)[skip:]


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """Bounded pseudoconvex domain: polydisc, ball or box in ℂⁿ.

    ``radii`` holds one radius per complex axis for polydiscs, a single radius for
    balls, and half-widths for boxes (n values shared by x_j and y_j, or 2n values
    ordered x_1..x_n, y_1..y_n). Polydiscs may carry ``inner_radii`` to make each
    factor an annulus (Reinhardt fibers).
    """

    kind: str
    center: tuple
    radii: tuple
    inner_radii: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("polydisc", "ball", "box"):
            raise InputError(f"unknown domain kind {self.kind!r}")
        center = tuple(complex(c) for c in np.atleast_1d(np.asarray(self.center, dtype=complex)))
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        n = len(center)
        if n < 1:
            raise InputError("domain dimension must be >= 1")
        expected = {"polydisc": (n,), "ball": (1,), "box": (n, 2 * n)}[self.kind]
        if len(radii) == 1 and self.kind != "ball":
            radii = radii * n
        if len(radii) not in expected:
            raise InputError(f"{self.kind} in C^{n} needs {expected} radii, got {len(radii)}")
        if self.kind == "box" and len(radii) == n:
            radii = radii * 2
        if min(radii) <= 0 or not np.all(np.isfinite(radii)):
            raise InputError("radii must be positive and finite")
        inner = self.inner_radii
        if inner is not None:
            if self.kind != "polydisc":
                raise InputError("inner radii are only meaningful for polydiscs")
            inner = tuple(float(r) for r in np.atleast_1d(inner))
            if len(inner) == 1:
                inner = inner * n
            if len(inner) != n or any(not 0 <= a < b for a, b in zip(inner, radii)):
                raise InputError("inner radii must satisfy 0 <= inner < outer per axis")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "inner_radii", inner)

    @property
    def n(self) -> int:
        return len(self.center)

    @classmethod
    def from_dict(cls, spec: dict) -> "Domain":
        n = spec.get("n")
        center = spec.get("center")
        if center is None:
            if n is None:
                raise InputError("domain needs 'center' or 'n'")
            center = [0.0] * int(n)
        else:
            center = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in center]
        return cls(spec["kind"], tuple(center), tuple(np.atleast_1d(spec["radii"])),
                   spec.get("inner_radii"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "center": [[c.real, c.imag] for c in self.center],
               "radii": list(self.radii)}
        if self.inner_radii is not None:
            out["inner_radii"] = list(self.inner_radii)
        return out

    def distance_to_boundary(self, z) -> np.ndarray:
        """Euclidean distance to the boundary; negative outside."""
        z = _as_points(z, self.n) - np.asarray(self.center)
        if self.kind == "ball":
            return self.radii[0] - np.linalg.norm(z, axis=-1)
        if self.kind == "polydisc":
            rho = np.abs(z)
            d = np.asarray(self.radii) - rho
            if self.inner_radii is not None:
                d = np.minimum(d, rho - np.asarray(self.inner_radii))
            return d.min(axis=-1)
        t = np.concatenate([z.real, z.imag], axis=-1)
        return (np.asarray(self.radii) - np.abs(t)).min(axis=-1)

    def contains(self, z, margin: float = 0.0) -> np.ndarray:
        return self.distance_to_boundary(z) > margin

    def sample(self, count: int, margin: float = INTERIOR_MARGIN) -> np.ndarray:
        """Deterministic Halton sample of the interior, shrunk by ``margin`` (relative)."""
        if count < 1:
            raise InputError("sample count must be >= 1")
        n, c = self.n, np.asarray(self.center)
        s = 1.0 - margin
        if self.kind == "box":
            u = 2.0 * halton(2 * n, count) - 1.0
            t = s * u * np.asarray(self.radii)
            return c + t[:, :n] + 1j * t[:, n:]
        if self.kind == "polydisc":
            u = halton(2 * n, count)
            outer = np.asarray(self.radii)
            inner = np.zeros(n) if self.inner_radii is None else np.asarray(self.inner_radii)
            width = outer - inner
            lo, hi = inner + margin * width * (inner > 0), outer - margin * width
            rho = np.sqrt(lo ** 2 + u[:, :n] * (hi ** 2 - lo ** 2))
            return c + rho * np.exp(2j * np.pi * u[:, n:])
        pts, skip = [], 0
        while sum(len(p) for p in pts) < count:
            batch = 2.0 * halton(2 * n, 4 * count, skip=skip) - 1.0
            skip += 4 * count
            pts.append(batch[np.sum(batch ** 2, axis=1) < 1.0])
        t = s * self.radii[0] * np.concatenate(pts)[:count]
        return c + t[:, :n] + 1j * t[:, n:]


# ---------------------------------------------------------------------------
# weights and Hessians


def _stencil(dim: int):
    """Offsets (in units of h) and the index plan for a central-difference Hessian."""
    offsets = [np.zeros(dim)]
    plan = {}
    for a in range(dim):
        e = np.zeros(dim)
        e[a] = 1.0
        plan[(a, a)] = (len(offsets), len(offsets) + 1)
        offsets += [e, -e]
    for a, b in itertools.combinations(range(dim), 2):
        ea, eb = np.eye(dim)[a], np.eye(dim)[b]
        plan[(a, b)] = tuple(range(len(offsets), len(offsets) + 4))
        offsets += [ea + eb, ea - eb, -ea + eb, -ea - eb]
    return np.array(offsets), plan


def real_to_complex_hessian(r: np.ndarray, n: int) -> np.ndarray:
    """Complex Hessian ∂²/∂z_j∂z̄_k from the real Hessian in (x_1..x_n, y_1..y_n)."""
    xx, yy = r[..., :n, :n], r[..., n:, n:]
    xy, yx = r[..., :n, n:], r[..., n:, :n]
    h = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return 0.5 * (h + np.swapaxes(h.conj(), -1, -2))


def fd_hessian(func: Callable, z: np.ndarray, h: float) -> np.ndarray:
    """Central-difference complex Hessian of ``func`` at points ``z`` (..., n)."""
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1]
    offsets, plan = _stencil(2 * n)
    shift = h * (offsets[:, :n] + 1j * offsets[:, n:])
    vals = np.asarray(func(z[..., None, :] + shift), dtype=float)
    r = np.empty(z.shape[:-1] + (2 * n, 2 * n))
    f0 = vals[..., 0]
    for (a, b), idx in plan.items():
        if a == b:
            r[..., a, a] = (vals[..., idx[0]] - 2.0 * f0 + vals[..., idx[1]]) / h ** 2
        else:
            pp, pm, mp, mm = (vals[..., i] for i in idx)
            r[..., a, b] = r[..., b, a] = (pp - pm - mp + mm) / (4.0 * h ** 2)
    return real_to_complex_hessian(r, n)


def _lambdify_real(expr, xs, ys):
    fn = sp.lambdify(list(xs) + list(ys), expr, modules="numpy")
    dim = len(xs)

    def evaluate(z):
        z = np.asarray(z, dtype=complex)
        args = [z[..., k].real for k in range(dim)] + [z[..., k].imag for k in range(dim)]
        with np.errstate(all="ignore"):
            out = np.asarray(fn(*args), dtype=float)
        return np.broadcast_to(out, z.shape[:-1]).copy()

    return evaluate


class Weight:
    """Smooth real function φ on a domain of ℂⁿ; the line-bundle metric is e^{-φ}.

    ``hessian`` (optional) returns ∂²φ/∂z_j∂z̄_k at points of shape (..., n); without
    it, Hessians come from central differences with step ``fd_step``.
    """

    def __init__(self, evaluator: Callable, n: int, hessian: Callable | None = None,
                 expression: str | None = None, fd_step: float = DEFAULT_FD_STEP):
        if n < 1:
            raise InputError("weight dimension must be >= 1")
        self._eval = evaluator
        self.n = int(n)
        self._hess = hessian
        self.expression = expression
        self.fd_step = fd_step

    @property
    def derivative_mode(self) -> str:
        return "exact" if self._hess is not None else "finite_difference"

    def __repr__(self):
        label = self.expression if self.expression is not None else "<callable>"
        return f"Weight({label!r}, n={self.n}, mode={self.derivative_mode})"

    @classmethod
    def from_expression(cls, text: str, n: int, m: int = 0, exact: bool = True) -> "Weight":
        """Weight from the expression grammar on ℂⁿ (× ℂᵐ fiber when ``m > 0``)."""
        expr, xs, ys = parse_weight(text, n, m)
        dim = n + m
        evaluator = _lambdify_real(expr, xs, ys)
        hess = None
        if exact:
            # ∂²/∂z_j∂z̄_k = ¼[(∂x_j∂x_k + ∂y_j∂y_k) + i(∂x_j∂y_k − ∂y_j∂x_k)]
            entries = {}
            for j in range(dim):
                for k in range(j, dim):
                    re_part = sp.diff(expr, xs[j], xs[k]) + sp.diff(expr, ys[j], ys[k])
                    im_part = sp.diff(expr, xs[j], ys[k]) - sp.diff(expr, ys[j], xs[k])
                    entries[j, k] = (_lambdify_real(re_part / 4, xs, ys),
                                     _lambdify_real(im_part / 4, xs, ys))

            def hess(z):
                z = np.asarray(z, dtype=complex)
                out = np.empty(z.shape[:-1] + (dim, dim), dtype=complex)
                for (j, k), (fr, fi) in entries.items():
                    val = fr(z) + 1j * fi(z)
                    out[..., j, k] = val
                    out[..., k, j] = np.conj(val)
                return out
        return cls(evaluator, dim, hess, expression=text)

    def __call__(self, z) -> np.ndarray:
        z = _as_points(z, self.n)
        out = np.asarray(self._eval(z), dtype=float)
        if not np.all(np.isfinite(out)):
            raise InputError(f"weight {self!r} is not finite at some evaluation point")
        return out

    def hess(self, z) -> np.ndarray:
        """Complex Hessians at points of shape (..., n) -> (..., n, n)."""
        z = _as_points(z, self.n)
        if self._hess is not None:
            out = np.asarray(self._hess(z), dtype=complex)
        else:
            out = fd_hessian(self, z, self.fd_step)
        if not np.all(np.isfinite(out)):
            raise InputError(f"Hessian of {self!r} is not finite at some evaluation point")
        return out

    def spot_check(self, z, h: float = 1e-3, tol: float = 1e-4) -> float:
        """Max discrepancy between the exact Hessian and central differences."""
        if self._hess is None:
            return 0.0
        z = _as_points(z, self.n)
        exact = self.hess(z)
        approx = fd_hessian(self, z, h)
        err = float(np.max(np.abs(exact - approx) / (1.0 + np.abs(exact))))
        if err > tol:
            raise PreconditionError(f"exact Hessian of {self!r} disagrees with finite differences ({err:.2e})")
        return err

    def affine_pullback(self, center, unitary) -> "Weight":
        """The weight w ↦ φ(center + U w) for a unitary U, in the new coordinates."""
        c = np.asarray(center, dtype=complex)
        u = np.asarray(unitary, dtype=complex)

        def evaluator(w):
            return self._eval(c + np.asarray(w) @ u.T)

        hess = None
        if self._hess is not None:
            def hess(w):
                # ∂_{w_j}∂_{w̄_k} = Σ U_aj conj(U_bk) ∂_{z_a}∂_{z̄_b}
                return u.T @ self._hess(c + np.asarray(w) @ u.T) @ u.conj()
        return Weight(evaluator, self.n, hess, expression=self.expression, fd_step=self.fd_step)


def complex_hessian(w: Weight, z, h_step: float | None = None,
                    domain: Domain | None = None) -> HermitianMatrix:
    """∂∂̄φ at one point.

    With ``h_step`` given, central differences are used even for exact weights.
    When ``domain`` is supplied the stencil must keep a margin of ``2*h_step``.
    """
    z = _as_points(z, w.n)
    if z.ndim != 1:
        raise InputError("complex_hessian takes a single point; use Weight.hess for batches")
    step = w.fd_step if h_step is None else h_step
    if domain is not None and float(domain.distance_to_boundary(z)) < 2.0 * step:
        raise MarginError(f"point {z} is within {2 * step:g} of the boundary")
    if h_step is None and w.derivative_mode == "exact":
        return HermitianMatrix(w.hess(z))
    return HermitianMatrix(fd_hessian(w, z, step))


# ---------------------------------------------------------------------------
# bundle curvature


class BundleCurvature:
    """Curvature blocks Θ_{jk̄} (r×r) of a Hermitian bundle over ℂⁿ, pointwise.

    ``evaluator(z)`` returns an array of shape (n, n, r, r); entry ``[j, k]`` is Θ_{jk̄}.
    """

    def __init__(self, evaluator: Callable, n: int, r: int):
        if n < 1 or r < 1:
            raise InputError("need n >= 1 and r >= 1")
        self._eval = evaluator
        self.n, self.r = int(n), int(r)

    @classmethod
    def constant(cls, blocks) -> "BundleCurvature":
        b = np.array(blocks, dtype=complex)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2] != b.shape[3]:
            raise InputError(f"blocks must have shape (n, n, r, r), got {b.shape}")
        return cls(lambda z: b, b.shape[0], b.shape[2])

    @classmethod
    def from_weight(cls, w: Weight) -> "BundleCurvature":
        """Line bundle (r = 1) with metric e^{-φ}: Θ_{jk̄} = ∂²φ/∂z_j∂z̄_k."""
        return cls(lambda z: w.hess(z)[..., None, None], w.n, 1)

    def at(self, z, tol: float = 1e-10) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if z.shape != (self.n,):
            raise InputError(f"point must have shape ({self.n},), got {z.shape}")
        b = np.asarray(self._eval(z), dtype=complex)
        if b.shape != (self.n, self.n, self.r, self.r):
            raise InputError(f"curvature blocks have shape {b.shape}, expected "
                             f"{(self.n, self.n, self.r, self.r)}")
        adj = np.conj(np.transpose(b, (1, 0, 3, 2)))
        if np.max(np.abs(b - adj)) > tol * (1.0 + np.max(np.abs(b))):
            raise InputError("curvature blocks violate Θ_jk̄* = Θ_kj̄")
        return b


# ---------------------------------------------------------------------------
# reports and checks


def _jsonable(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()] if x.dtype.kind == "c" else x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


@dataclass
class PositivityReport:
    criterion: str
    q: int
    c: float
    min_value: float
    witness_point: Any
    witness: Any
    passed: bool
    samples_used: int
    tolerance: float = DEFAULT_TOL
    status: str = "sampled"
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable({
            "criterion": self.criterion, "q": self.q, "c": self.c,
            "min_value": self.min_value, "witness_point": np.asarray(self.witness_point),
            "witness": self.witness if isinstance(self.witness, tuple) else np.asarray(self.witness),
            "pass": self.passed, "samples_used": self.samples_used,
            "tolerance": self.tolerance, "status": self.status, "details": self.details,
        })


def _hessians_on(w: Weight, d: Domain, samples: int):
    if w.n != d.n:
        raise InputError(f"weight lives on C^{w.n} but domain on C^{d.n}")
    pts = d.sample(samples)
    if w.derivative_mode == "exact":
        w.spot_check(pts[: min(4, len(pts))])
    return pts, w.hess(pts)


def check_q_positive(w: Weight, q: int, d: Domain, samples: int = 256,
                     tol: float = DEFAULT_TOL) -> PositivityReport:
    """Sampled check that ∂∂̄φ has at least n−q positive eigenvalues.

    Equivalently the (q+1)-th smallest eigenvalue is positive; ``min_value`` is its
    minimum over the samples and the check passes when it exceeds ``tol``.
    """
    n = w.n
    if not 0 <= q <= n - 1:
        raise InputError(f"q={q} outside [0, {n - 1}]")
    pts, hs = _hessians_on(w, d, samples)
    vals = np.array([eig_hermitian(h).eigenvalues[q] for h in hs])
    k = int(np.argmin(vals))
    return PositivityReport("q_positive", q, 0.0, float(vals[k]), pts[k], (q + 1,),
                            bool(vals[k] > tol), len(pts), tol,
                            details={"eigenvalues_at_witness": eig_hermitian(hs[k]).eigenvalues})


def check_uniform_q_positive(w: Weight, q: int, c: float, d: Domain, samples: int = 256,
                             tol: float = DEFAULT_TOL) -> PositivityReport:
    """Sampled check that every sum of q distinct eigenvalues of ∂∂̄φ is ≥ c.

    ``min_value`` is the smallest q-eigenvalue sum seen; passes when it is ≥ c − tol.
    """
    n = w.n
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    if not np.isfinite(c) or c < 0:
        raise InputError(f"c must be a finite non-negative constant, got {c}")
    pts, hs = _hessians_on(w, d, samples)
    spectra = [eig_hermitian(h) for h in hs]
    vals = np.array([q_smallest_sum(s, q) for s in spectra])
    k = int(np.argmin(vals))
    return PositivityReport("uniform_q_positive", q, float(c), float(vals[k]), pts[k],
                            tuple(range(1, q + 1)), bool(vals[k] >= c - tol), len(pts), tol,
                            details={"eigenvalues_at_witness": spectra[k].eigenvalues})


def rc_trace_check(b: BundleCurvature, c: float, z, tol: float = DEFAULT_TOL) -> PositivityReport:
    """tr_ω(iΘ a, a) ≥ c|a|² for all a, via λ_min(Σ_j Θ_jj̄) ≥ c."""
    if not np.isfinite(c) or c < 0:
        raise InputError(f"c must be a finite non-negative constant, got {c}")
    z = np.asarray(z, dtype=complex)
    blocks = b.at(z)
    trace_op = np.einsum("jjab->ab", blocks)
    spec = eig_hermitian(trace_op)
    value = float(spec.eigenvalues[0]) - c
    return PositivityReport("rc_trace", b.n, float(c), value, z, spec.unitary[:, 0],
                            bool(value >= -tol), 1, tol, status="pointwise",
                            details={"trace_eigenvalues": spec.eigenvalues})


def _unit_vectors(r: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors in ℂʳ (Halton → Gaussian → normalize)."""
    from scipy.special import ndtri
    g = ndtri(halton(2 * r, count, skip=1))
    a = g[:, :r] + 1j * g[:, r:]
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _lambda_max_m(blocks: np.ndarray, a: np.ndarray) -> np.ndarray:
    m = np.einsum("...i,jkil,...l->...jk", a.conj(), blocks, a)
    m = 0.5 * (m + np.swapaxes(m.conj(), -1, -2))
    return np.linalg.eigvalsh(m)[..., -1]


def rc_directional_check(b: BundleCurvature, z, direction_samples: int = 512,
                         refine_iterations: int = 20) -> PositivityReport:
    """Sampled test of RC-positivity at one point.

    For unit a ∈ ℂʳ, M_a[j, k] = ⟨Θ_jk̄ a, a⟩ and RC-positivity asks λ_max(M_a) > 0.
    The minimum over a is searched on a Halton set of directions and then refined by
    coordinate descent around the worst one; the result is a sampled certificate.
    """
    if direction_samples < 1:
        raise InputError("direction_samples must be >= 1")
    z = np.asarray(z, dtype=complex)
    blocks = b.at(z)
    r = b.r
    dirs = _unit_vectors(r, direction_samples)
    vals = _lambda_max_m(blocks, dirs)
    k = int(np.argmin(vals))
    best, best_val = dirs[k], float(vals[k])
    step = 0.25
    for _ in range(refine_iterations):
        improved = False
        for coord in range(2 * r):
            for sgn in (1.0, -1.0):
                trial = best.copy()
                trial[coord % r] += sgn * step * (1.0 if coord < r else 1j)
                trial /= np.linalg.norm(trial)
                val = float(_lambda_max_m(blocks, trial))
                if val < best_val:
                    best, best_val, improved = trial, val, True
        if not improved:
            step *= 0.5
    return PositivityReport("rc_directional", b.n, 0.0, best_val, z, best, bool(best_val > 0.0),
                            direction_samples, 0.0, status="sampled certificate")
