"""Grid ∂̄ on (n, q)-forms (n ≤ 2), minimal weighted L² solutions, estimate ratios.

Grids are cell-centred on a box, axes ordered x_1, y_1, …, x_n, y_n (C order).
∂/∂z̄_j = ½(∂/∂x_j + i ∂/∂y_j) with central differences; values outside the grid
are taken as zero, so the discrete ∂̄ complex closes exactly. A field on an
(n, q)-form grid is an array (points, C(n, q)) with multi-indices in lexicographic
order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sps

from . import exterior
from .core import multi_indices
from .cutoff import Cutoff
from .errors import (DefinitenessError, InconsistencyError, InputError, SolverError,
                     UnsupportedDimensionError)
from .forms import commutator_matrices, form_layout, inverse_quadratic
from .geometry import Domain, Weight

MAX_GRID_POINTS = 2 ** 24
MIN_POINTS_PER_AXIS = 16
MARGIN_CELLS = 4


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid on the box ∏ [lower_a, upper_a] over 2n real axes."""

    n: int
    lower: tuple
    upper: tuple
    points_per_axis: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise UnsupportedDimensionError(f"grids support n in {{1, 2}}, got n={self.n}")
        lo = tuple(float(v) for v in np.broadcast_to(self.lower, (2 * self.n,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.upper, (2 * self.n,)))
        ext = np.subtract(hi, lo)
        if np.any(ext <= 0):
            raise InputError("grid extents must be positive")
        if not np.allclose(ext, ext[0], rtol=1e-12):
            raise InputError("all real axes must share one extent (single spacing h)")
        if self.points_per_axis < MIN_POINTS_PER_AXIS:
            raise InputError(f"points_per_axis must be >= {MIN_POINTS_PER_AXIS}")
        if self.points_per_axis ** (2 * self.n) > MAX_GRID_POINTS:
            raise InputError(f"grid exceeds {MAX_GRID_POINTS} points")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def square(cls, n: int, half_width: float, points_per_axis: int) -> "GridSpec":
        return cls(n, (-half_width,) * (2 * n), (half_width,) * (2 * n), points_per_axis)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / self.points_per_axis

    @property
    def size(self) -> int:
        return self.points_per_axis ** (2 * self.n)

    @property
    def cell_volume(self) -> float:
        return self.h ** (2 * self.n)

    def axis(self, a: int) -> np.ndarray:
        return self.lower[a] + (np.arange(self.points_per_axis) + 0.5) * self.h

    def coords(self) -> np.ndarray:
        """Complex coordinates of every grid point, shape (size, n)."""
        mesh = np.meshgrid(*[self.axis(a) for a in range(2 * self.n)], indexing="ij")
        # real axis order is (x_1, y_1, x_2, y_2)
        flat = [m.reshape(-1) for m in mesh]
        return np.stack([flat[2 * j] + 1j * flat[2 * j + 1] for j in range(self.n)], axis=1)

    def to_dict(self) -> dict:
        return {"n": self.n, "lower": list(self.lower), "upper": list(self.upper),
                "points_per_axis": self.points_per_axis, "h": self.h}


@dataclass
class GridField:
    """Coefficients of an (n, q)-form sampled on a grid: values[point, multi-index]."""

    grid: GridSpec
    q: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        ncomp = comb(self.grid.n, self.q)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != (self.grid.size, ncomp):
            raise InputError(f"field needs shape {(self.grid.size, ncomp)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("field values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, grid: GridSpec, q: int) -> "GridField":
        return cls(grid, q, np.zeros((grid.size, comb(grid.n, q))))

    def flat(self) -> np.ndarray:
        """Component-major vector (component, point)."""
        return self.values.T.reshape(-1)

    @classmethod
    def from_flat(cls, grid: GridSpec, q: int, flat) -> "GridField":
        ncomp = comb(grid.n, q)
        return cls(grid, q, np.asarray(flat).reshape(ncomp, grid.size).T)

    def support_margin_ok(self, cells: int = MARGIN_CELLS, mask=None) -> bool:
        """True if the field vanishes within ``cells`` grid cells of the boundary."""
        band = boundary_band(self.grid, cells, mask)
        return not np.any(np.abs(self.values[band]) > 0.0)

    def to_csv(self, stream=None) -> str:
        """One row per grid point: x_1, y_1, …, then re/im per coefficient."""
        buf = stream if stream is not None else io.StringIO()
        n = self.grid.n
        idx = multi_indices(n, self.q)
        head = [f"{c}{j}" for j in range(1, n + 1) for c in ("x", "y")]
        for i in idx:
            tag = "".join(map(str, i)) or "0"
            head += [f"re_{tag}", f"im_{tag}"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        z = self.grid.coords()
        for p in range(self.grid.size):
            row = [f"{v:.17g}" for j in range(n) for v in (z[p, j].real, z[p, j].imag)]
            for k in range(len(idx)):
                row += [f"{self.values[p, k].real:.17g}", f"{self.values[p, k].imag:.17g}"]
            w.writerow(row)
        return buf.getvalue() if stream is None else ""

    @classmethod
    def from_csv(cls, grid: GridSpec, q: int, text: str) -> "GridField":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        ncomp = comb(grid.n, q)
        data = np.array([[float(x) for x in r[2 * grid.n:]] for r in rows])
        if data.shape != (grid.size, 2 * ncomp):
            raise InputError("CSV does not match grid and degree")
        return cls(grid, q, data[:, 0::2] + 1j * data[:, 1::2])

    def to_json(self) -> dict:
        doc = form_layout(self.grid.n, self.q, 1, self.values.reshape(-1))
        doc["flattening"] = "grid point major (C order over x_1, y_1, ..., x_n, y_n), multi-index minor"
        doc["grid"] = self.grid.to_dict()
        return doc

    @classmethod
    def from_json(cls, doc) -> "GridField":
        if isinstance(doc, str):
            doc = json.loads(doc)
        g = doc["grid"]
        grid = GridSpec(g["n"], tuple(g["lower"]), tuple(g["upper"]), g["points_per_axis"])
        a = np.asarray(doc["coefficients"], dtype=float)
        return cls(grid, doc["q"], (a[:, 0] + 1j * a[:, 1]).reshape(grid.size, -1))


@dataclass
class SolveReport:
    lhs: float
    rhs: float
    ratio: float
    cg_iterations: int
    residual: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# discrete ∂̄


@lru_cache(maxsize=8)
def _axis_derivatives(grid: GridSpec) -> tuple:
    """Central-difference ∂/∂(real axis a) on the whole grid, zero outside."""
    m = grid.points_per_axis
    d1 = sps.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1], format="csr") / (2.0 * grid.h)
    eye = sps.identity(m, format="csr")
    ops = []
    for a in range(2 * grid.n):
        factors = [d1 if b == a else eye for b in range(2 * grid.n)]
        op = factors[0]
        for f in factors[1:]:
            op = sps.kron(op, f, format="csr")
        ops.append(op)
    return tuple(ops)


def dbar_component(grid: GridSpec, j: int) -> sps.csr_matrix:
    """∂/∂z̄_j (1-based) on scalar grid functions."""
    ops = _axis_derivatives(grid)
    return (0.5 * (ops[2 * (j - 1)] + 1j * ops[2 * (j - 1) + 1])).tocsr()


def discretize_dbar(grid: GridSpec, q: int) -> sps.csr_matrix:
    """∂̄ from (n, q−1)- to (n, q)-form fields, as a sparse matrix on component-major vectors.

    Signs follow ∂̄(u dZ∧dz̄_K) = Σ_l ∂u/∂z̄_l dz̄_l∧dZ∧dz̄_K; for n = 2 this is
    u ↦ (∂u/∂z̄_1, ∂u/∂z̄_2) at q = 1 and (u_1, u_2) ↦ ∂u_2/∂z̄_1 − ∂u_1/∂z̄_2 at q = 2.
    """
    n = grid.n
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    src, dst = exterior.basis(n, n, q - 1), exterior.basis(n, n, q)
    blocks = [[None] * len(src) for _ in dst]
    for l in range(1, n + 1):
        e = exterior.word_matrix([("e", exterior.dzbar(l, n))], src, dst)
        dl = dbar_component(grid, l)
        for row, col in zip(*np.nonzero(e)):
            term = e[row, col] * dl
            blocks[row][col] = term if blocks[row][col] is None else blocks[row][col] + term
    size = grid.size
    for row in range(len(dst)):
        for col in range(len(src)):
            if blocks[row][col] is None:
                blocks[row][col] = sps.csr_matrix((size, size), dtype=complex)
    return sps.bmat(blocks, format="csr")


def domain_mask(grid: GridSpec, domain: Domain | None) -> np.ndarray:
    if domain is None:
        return np.ones(grid.size, dtype=bool)
    if domain.n != grid.n:
        raise InputError("domain and grid dimensions differ")
    return domain.contains(grid.coords())


def interior_points(grid: GridSpec, mask: np.ndarray) -> np.ndarray:
    """Points of ``mask`` whose whole central-difference stencil lies in ``mask``."""
    m = grid.points_per_axis
    shape = (m,) * (2 * grid.n)
    cube = mask.reshape(shape)
    ok = cube.copy()
    for a in range(2 * grid.n):
        for shift in (1, -1):
            rolled = np.roll(cube, shift, axis=a)
            edge = [slice(None)] * len(shape)
            edge[a] = 0 if shift == 1 else m - 1
            rolled[tuple(edge)] = False
            ok &= rolled
    return ok.reshape(-1)


def boundary_band(grid: GridSpec, cells: int, mask=None) -> np.ndarray:
    """Points within ``cells`` steps of the grid edge or of the domain complement."""
    inside = np.ones(grid.size, dtype=bool) if mask is None else np.asarray(mask)
    core = inside.copy()
    for _ in range(cells):
        core = interior_points(grid, core)
    return ~core


# ---------------------------------------------------------------------------
# conjugate gradients


def conjugate_gradient(apply, b, precond=None, tol=1e-9, maxiter=100_000):
    """Preconditioned CG for a Hermitian positive semi-definite operator.

    Returns (x, iterations, relative residual). Raises SolverError on non-convergence.
    """
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0:
        return x, 0, 0.0
    r = b.copy()
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, maxiter + 1):
        ap = apply(p)
        pap = np.vdot(p, ap).real
        if pap <= 0:
            raise SolverError(f"CG breakdown at iteration {it} (p*Ap = {pap:.3e})")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x, it, rel
        z = precond(r) if precond is not None else r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach relative residual {tol:g} in {maxiter} iterations "
                      f"(last {rel:.3e})")


# ---------------------------------------------------------------------------
# minimal solutions


class _Problem:
    """∂̄ restricted to unknowns inside the domain and equations at stencil-complete points."""

    def __init__(self, grid: GridSpec, q: int, mask: np.ndarray):
        self.grid, self.q = grid, q
        self.mask = np.asarray(mask, dtype=bool)
        self.eq_points = interior_points(grid, self.mask)
        full = discretize_dbar(grid, q)
        ncol, nrow = comb(grid.n, q - 1), comb(grid.n, q)
        self.cols = np.concatenate([k * grid.size + np.flatnonzero(self.mask) for k in range(ncol)])
        self.rows = np.concatenate([k * grid.size + np.flatnonzero(self.eq_points) for k in range(nrow)])
        self.op = full[self.rows][:, self.cols].tocsr()


def _require_closed(f: GridField, eq_points: np.ndarray, rtol: float = 1e-10) -> None:
    """∂̄f = 0 wherever the stencil stays among the equation points (solvability)."""
    inner = interior_points(f.grid, eq_points)
    df = discretize_dbar(f.grid, f.q + 1) @ f.flat()
    ncomp = comb(f.grid.n, f.q + 1)
    bad = np.abs(df.reshape(ncomp, -1)[:, inner]).max(initial=0.0)
    if bad > rtol * max(np.abs(f.values).max(), 1e-300) / f.grid.h:
        raise InconsistencyError(f"f is not ∂̄-closed on the grid (max |∂̄f| = {bad:.3e})")


def minimal_solution(f: GridField, weight_values, domain: Domain | None = None,
                     mask=None, tol: float = 1e-9, maxiter: int = 100_000,
                     allow_boundary_source: bool = False):
    """Minimal weighted-L² solution of ∂̄u = f.

    Minimizes Σ |u|² e^{−w} h^{2n} over the domain points subject to ∂̄u = f at every
    point whose stencil lies in the domain, via CG on D W⁻¹ D* μ = f and u = W⁻¹ D* μ.
    ``weight_values`` are w at every grid point (only domain points are read).
    Returns (u, SolveReport) where report.lhs is the weighted squared norm of u.
    """
    grid, q = f.grid, f.q
    if q < 1:
        raise InputError("the source must be an (n, q)-form with q >= 1")
    if mask is None:
        mask = domain_mask(grid, domain)
    prob = _Problem(grid, q, mask)
    w = np.asarray(weight_values, dtype=float).reshape(-1)
    if w.shape != (grid.size,):
        raise InputError("weight values must cover every grid point")
    w_in = w[prob.mask]
    if not np.all(np.isfinite(w_in)):
        raise InputError("weight values must be finite on the domain")
    fvec = f.flat()
    b = fvec[prob.rows]
    dropped = np.linalg.norm(np.delete(fvec, prob.rows))
    if dropped > 1e-12 * max(np.linalg.norm(fvec), 1e-300) and not allow_boundary_source:
        raise InputError(f"source has weight {dropped:.3e} where the stencil leaves the domain; "
                         "supply a compactly supported f")
    if q < grid.n:
        _require_closed(f, prob.eq_points)
    ncol = comb(grid.n, q - 1)
    # shift the weight so e^{-w} stays O(1); the scale cancels in u
    shift = float(np.min(w_in)) if w_in.size else 0.0
    inv_w = np.tile(np.exp(w_in - shift), ncol)
    d, dh = prob.op, prob.op.conj().T.tocsr()
    diag = np.asarray(abs(d).power(2) @ inv_w).reshape(-1)
    diag[diag == 0] = 1.0

    def apply(mu):
        return d @ (inv_w * (dh @ mu))

    mu, iters, rel = conjugate_gradient(apply, b, precond=lambda r: r / diag, tol=tol, maxiter=maxiter)
    u_in = inv_w * (dh @ mu)
    residual = float(np.linalg.norm(d @ u_in - b) / max(np.linalg.norm(b), 1e-300)) if np.any(b) else 0.0
    if residual > 1e3 * tol:
        raise InconsistencyError(f"f is not in the range of the discrete ∂̄ (residual {residual:.3e})")
    u_flat = np.zeros(ncol * grid.size, dtype=complex)
    u_flat[prob.cols] = u_in
    u = GridField.from_flat(grid, q - 1, u_flat)
    weights = np.exp(-w_in) * grid.cell_volume
    lhs = float(np.sum(np.abs(u_in.reshape(ncol, -1)) ** 2 * weights))
    report = SolveReport(lhs, float("nan"), float("nan"), iters, residual,
                         {"unknowns": int(len(prob.cols)), "equations": int(len(prob.rows)),
                          "dropped_source_norm": float(dropped), "cg_relative_residual": float(rel)})
    return u, report


def weighted_inner(u: GridField, v: GridField, weight_values, mask) -> complex:
    """⟨u, v⟩ = Σ_x ⟨u(x), v(x)⟩ e^{−w(x)} h^{2n} over ``mask``."""
    m = np.asarray(mask, dtype=bool)
    wts = np.exp(-np.asarray(weight_values)[m]) * u.grid.cell_volume
    return complex(np.sum(wts[:, None] * u.values[m] * np.conj(v.values[m])))


def estimate_ratio(f: GridField, phi: Weight, psi: Weight, c: float, q: int | None = None,
                   domain: Domain | None = None, mask=None, tol: float = 1e-9) -> SolveReport:
    """Both sides of the twisted Hörmander estimate for the minimal solution.

    lhs = Σ |u|² e^{−φ−ψ} h^{2n} for the minimal u of ∂̄u = f in L²(e^{−φ−ψ});
    rhs = Σ ⟨([∂∂̄ψ, Λ] + c)⁻¹ f, f⟩ e^{−φ−ψ} h^{2n}. ratio = lhs / rhs (0 when f = 0).
    """
    grid = f.grid
    q = f.q if q is None else q
    if q != f.q:
        raise InputError(f"f has degree {f.q}, requested q={q}")
    if not np.isfinite(c) or c < 0:
        raise InputError(f"c must be a finite non-negative constant, got {c}")
    if mask is None:
        mask = domain_mask(grid, domain)
    mask = np.asarray(mask, dtype=bool)
    if not f.support_margin_ok(MARGIN_CELLS, mask):
        raise InputError(f"f must vanish within {MARGIN_CELLS} cells of the boundary (compact support)")
    z = grid.coords()[mask]
    w_in = phi(z) + psi(z)
    w = np.full(grid.size, np.inf)
    w[mask] = w_in
    meta = {"grid": grid.to_dict(), "q": q, "c": c, "phi": phi.expression, "psi": psi.expression}

    twist = commutator_matrices(psi.hess(z), q) + c * np.eye(comb(grid.n, q))
    eig_min = np.linalg.eigvalsh(twist)[:, 0]
    bad = np.flatnonzero(eig_min <= 0)
    if bad.size:
        loc = z[bad[0]]
        raise DefinitenessError(f"twist operator indefinite at z = {loc}", location=loc)
    fv = f.values[mask]
    wts = np.exp(-w_in) * grid.cell_volume
    rhs = float(np.sum(inverse_quadratic(twist, fv) * wts))
    if not np.any(f.values):
        return SolveReport(0.0, rhs, 0.0, 0, 0.0, meta)
    _, rep = minimal_solution(f, np.where(mask, w, 0.0), mask=mask, tol=tol)
    rep.rhs = rhs
    rep.ratio = rep.lhs / rhs
    rep.details.update(meta)
    return rep


# ---------------------------------------------------------------------------
# test sources


def probe_potential(grid: GridSpec, q: int, radius: float, center=None) -> GridField:
    """v = (−1)^{n+q−1} χ z̄_q dZ∧dz̄_1∧…∧dz̄_{q−1} on the grid (an (n, q−1)-form)."""
    n = grid.n
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    z = grid.coords()
    if center is not None:
        z = z - np.asarray(center, dtype=complex)
    chi = Cutoff(radius)(z)
    vals = np.zeros((grid.size, comb(n, q - 1)), dtype=complex)
    k = multi_indices(n, q - 1).index(tuple(range(1, q)))
    vals[:, k] = (-1) ** (n + q - 1) * chi * np.conj(z[:, q - 1])
    return GridField(grid, q - 1, vals)


def apply_dbar(v: GridField) -> GridField:
    """∂̄v on the whole grid (zero extension)."""
    op = discretize_dbar(v.grid, v.q + 1)
    return GridField.from_flat(v.grid, v.q + 1, op @ v.flat())


def probe_source(grid: GridSpec, q: int, radius: float, center=None) -> GridField:
    """f = ∂̄v for the probe potential; exactly solvable on the grid by construction."""
    return apply_dbar(probe_potential(grid, q, radius, center))
