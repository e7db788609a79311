"""Coefficient algebra of bundle-valued (n, q)-forms on ℂⁿ.

A form ``f = Σ_I f_I dz_1∧…∧dz_n∧dz̄_I ⊗ e`` is stored as an array of shape
(C(n, q), r): rows follow :func:`l2pos.core.multi_indices` (lexicographic), columns
are bundle components. Operators act on the flattened vector with the multi-index
as the major axis and the bundle component as the minor axis. The monomials
dz_1∧…∧dz_n∧dz̄_I ⊗ e_a are taken orthonormal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import exterior
from .core import HermitianMatrix, index_position, multi_indices
from .errors import DefinitenessError, InputError


@dataclass(frozen=True)
class FormNQ:
    n: int
    q: int
    coefficients: np.ndarray

    def __post_init__(self):
        a = np.array(self.coefficients, dtype=complex)
        if a.ndim == 1:
            a = a[:, None]
        if not 0 <= self.q <= self.n:
            raise InputError(f"q={self.q} outside [0, {self.n}]")
        if a.ndim != 2 or a.shape[0] != comb(self.n, self.q):
            raise InputError(f"(n={self.n}, q={self.q}) form needs {comb(self.n, self.q)} "
                             f"coefficient rows, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", a)

    @property
    def r(self) -> int:
        return self.coefficients.shape[1]

    @classmethod
    def zeros(cls, n: int, q: int, r: int = 1) -> "FormNQ":
        return cls(n, q, np.zeros((comb(n, q), r)))

    @classmethod
    def from_flat(cls, n: int, q: int, r: int, flat) -> "FormNQ":
        return cls(n, q, np.asarray(flat, dtype=complex).reshape(comb(n, q), r))

    @classmethod
    def from_dict(cls, n: int, q: int, coeffs: dict, r: int = 1) -> "FormNQ":
        pos = index_position(n, q)
        a = np.zeros((comb(n, q), r), dtype=complex)
        for idx, val in coeffs.items():
            key = tuple(idx)
            if key not in pos:
                raise InputError(f"{key} is not a strictly increasing {q}-index in 1..{n}")
            a[pos[key]] = val
        return cls(n, q, a)

    def flat(self) -> np.ndarray:
        return self.coefficients.reshape(-1)

    def as_dict(self) -> dict:
        return {idx: self.coefficients[k] for k, idx in enumerate(multi_indices(self.n, self.q))}

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))

    def to_json(self) -> dict:
        return form_layout(self.n, self.q, self.r, self.flat())

    @classmethod
    def from_json(cls, doc) -> "FormNQ":
        if isinstance(doc, str):
            doc = json.loads(doc)
        n, q, r = doc["n"], doc["q"], doc["r"]
        _check_ordering(doc, n, q)
        return cls.from_flat(n, q, r, _unpack(doc["coefficients"]))


@dataclass(frozen=True)
class OperatorNQ:
    n: int
    q: int
    r: int
    matrix: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=complex)
        dim = comb(self.n, self.q) * self.r
        if a.shape != (dim, dim):
            raise InputError(f"operator on (n={self.n}, q={self.q}, r={self.r}) forms must be "
                             f"{dim}x{dim}, got {a.shape}")
        if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(a), initial=0.0)):
            raise InputError("operator is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    def apply(self, f: FormNQ) -> FormNQ:
        self._check(f)
        return FormNQ.from_flat(self.n, self.q, self.r, self.matrix @ f.flat())

    def quadratic(self, f: FormNQ) -> float:
        self._check(f)
        v = f.flat()
        return float(np.real(np.vdot(v, self.matrix @ v)))

    def _check(self, f: FormNQ):
        if (f.n, f.q, f.r) != (self.n, self.q, self.r):
            raise InputError(f"form (n={f.n}, q={f.q}, r={f.r}) does not match operator "
                             f"(n={self.n}, q={self.q}, r={self.r})")

    def to_json(self) -> dict:
        doc = form_layout(self.n, self.q, self.r, self.matrix.reshape(-1))
        doc["shape"] = list(self.matrix.shape)
        doc["entries"] = doc.pop("coefficients")
        return doc

    @classmethod
    def from_json(cls, doc) -> "OperatorNQ":
        if isinstance(doc, str):
            doc = json.loads(doc)
        _check_ordering(doc, doc["n"], doc["q"])
        mat = np.asarray(_unpack(doc["entries"]), dtype=complex).reshape(doc["shape"])
        return cls(doc["n"], doc["q"], doc["r"], mat)


def form_layout(n: int, q: int, r: int, flat) -> dict:
    """JSON layout shared by forms, operators and grid fields."""
    flat = np.asarray(flat, dtype=complex)
    return {"n": n, "q": q, "r": r,
            "ordering": [list(idx) for idx in multi_indices(n, q)],
            "flattening": "multi-index major, bundle component minor",
            "coefficients": [[float(v.real), float(v.imag)] for v in flat]}


def _check_ordering(doc, n, q):
    if "ordering" in doc and [tuple(i) for i in doc["ordering"]] != list(multi_indices(n, q)):
        raise InputError("ordering does not match lexicographic multi-indices")


def _unpack(pairs) -> np.ndarray:
    a = np.asarray(pairs, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise InputError("complex arrays are stored as [re, im] pairs")
    return a[:, 0] + 1j * a[:, 1]


# ---------------------------------------------------------------------------
# curvature operators


@lru_cache(maxsize=None)
def _commutator_plan(n: int, q: int):
    """Index plan for ⟨Af, f⟩ = Σ_{j,k} Σ_{|K|=q-1} ⟨Θ_jk̄ f_{jK}, f_{kK}⟩.

    Returns integer arrays (row, col, j, k, sign): f_{jK} = sign_j f_I with I the
    sorted set {j} ∪ K, and each term adds sign_j sign_k Θ_jk̄ to A[J, I] with J
    the sorted set {k} ∪ K.
    """
    pos = index_position(n, q)
    rows, cols, js, ks, signs = [], [], [], [], []
    for K in multi_indices(n, q - 1):
        free = [j for j in range(1, n + 1) if j not in K]
        ext = {}
        for j in free:
            before = sum(1 for x in K if x < j)
            ext[j] = ((-1) ** before, pos[tuple(sorted(K + (j,)))])
        for j in free:
            sj, col = ext[j]
            for k in free:
                sk, row = ext[k]
                rows.append(row)
                cols.append(col)
                js.append(j - 1)
                ks.append(k - 1)
                signs.append(sj * sk)
    return tuple(np.array(a) for a in (rows, cols, js, ks, signs))


@lru_cache(maxsize=None)
def _commutator_tensor(n: int, q: int) -> np.ndarray:
    """Dense form of the plan: P[J, I, j, k] = Σ sign over terms adding Θ_jk̄ to A[J, I]."""
    rows, cols, js, ks, signs = _commutator_plan(n, q)
    dim = comb(n, q)
    p = np.zeros((dim, dim, n, n))
    np.add.at(p, (rows, cols, js, ks), signs)
    p.setflags(write=False)
    return p


def commutator_matrices(theta, q: int, bundle: bool = False) -> np.ndarray:
    """Matrices of [iΘ, Λ_ω] on (n, q)-forms for a batch of curvatures.

    ``theta`` has shape (..., n, n) for line bundles, or (..., n, n, r, r) with
    ``bundle=True`` (entry [j, k] is the block Θ_jk̄). Result shape:
    (..., C(n,q)·r, C(n,q)·r), multi-index major.
    """
    t = np.asarray(theta.entries if isinstance(theta, HermitianMatrix) else theta, dtype=complex)
    if not bundle:
        t = t[..., None, None]
    if t.ndim < 4 or t.shape[-3] != t.shape[-4] or t.shape[-1] != t.shape[-2]:
        raise InputError(f"curvature has inconsistent shape {t.shape}")
    n, r = t.shape[-4], t.shape[-1]
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    dim = comb(n, q)
    out = np.einsum("JIjk,...jkab->...JaIb", _commutator_tensor(n, q), t)
    return out.reshape(t.shape[:-4] + (dim * r, dim * r))


def commutator_operator(theta, q: int) -> OperatorNQ:
    """[iΘ, Λ_ω] in bidegree (n, q) at one point.

    ``theta`` is an n×n Hermitian matrix (line bundle) or an (n, n, r, r) block array.
    For diagonal Θ = diag(γ) the result is diagonal with entry Σ_{k∈I} γ_k on dz̄_I.
    """
    t = np.asarray(theta.entries if isinstance(theta, HermitianMatrix) else theta, dtype=complex)
    if t.ndim not in (2, 4):
        raise InputError(f"expected an (n, n) or (n, n, r, r) curvature, got shape {t.shape}")
    bundle = t.ndim == 4
    r = t.shape[-1] if bundle else 1
    return OperatorNQ(t.shape[0], q, r, commutator_matrices(t, q, bundle=bundle))


def twist_operator(hpsi, c: float, q: int, r: int = 1) -> OperatorNQ:
    """[∂∂̄ψ ⊗ Id_r, Λ_ω] + c on (n, q)-forms; must be positive definite."""
    h = np.asarray(hpsi.entries if isinstance(hpsi, HermitianMatrix) else hpsi, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InputError(f"∂∂̄ψ must be a square matrix, got shape {h.shape}")
    if not np.isfinite(c):
        raise InputError("c must be finite")
    blocks = h[:, :, None, None] * np.eye(r)
    mat = commutator_matrices(blocks, q, bundle=True) + c * np.eye(comb(h.shape[0], q) * r)
    op = OperatorNQ(h.shape[0], q, r, mat)
    try:
        cho_factor(op.matrix, lower=True)
    except np.linalg.LinAlgError:
        raise DefinitenessError("twist operator is not positive definite "
                                "(ψ not strictly plurisubharmonic for this c)") from None
    return op


def apply_inverse(a: OperatorNQ, f: FormNQ, rtol: float = 1e-10) -> FormNQ:
    """Solve A g = f by Cholesky."""
    a._check(f)
    try:
        factor = cho_factor(a.matrix, lower=True)
    except np.linalg.LinAlgError:
        raise DefinitenessError("operator is not positive definite") from None
    rhs = f.flat()
    g = cho_solve(factor, rhs)
    res = np.linalg.norm(a.matrix @ g - rhs)
    if res > rtol * max(np.linalg.norm(rhs), 1e-300) and np.linalg.norm(rhs) > 0:
        raise DefinitenessError(f"inverse residual {res:.2e} exceeds tolerance")
    return FormNQ.from_flat(f.n, f.q, f.r, g)


def inverse_quadratic(mats: np.ndarray, f: np.ndarray) -> np.ndarray:
    """⟨A⁻¹f, f⟩ for batches of positive-definite matrices (..., d, d) and vectors (..., d)."""
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        raise DefinitenessError("operator is not positive definite at some point") from None
    y = np.linalg.solve(chol, f[..., None])[..., 0]
    return np.sum(np.abs(y) ** 2, axis=-1)


# ---------------------------------------------------------------------------
# D'* on ∂̄-closed fields


class FormField:
    """An (n, q)-form field with differentiable coefficients.

    ``coefficients(z)`` maps points (N, n) to (N, C(n,q), r); ``dbar_derivatives(z)``
    maps them to (N, n, C(n,q), r) where entry [:, l, I] is ∂g_I/∂z̄_{l+1}.
    """

    def __init__(self, n: int, q: int, coefficients: Callable, dbar_derivatives: Callable | None,
                 r: int = 1):
        self.n, self.q, self.r = n, q, r
        self._coeffs = coefficients
        self._dbar = dbar_derivatives

    def coefficients(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.asarray(self._coeffs(z), dtype=complex).reshape(len(z), comb(self.n, self.q), self.r)

    def dbar_derivatives(self, z) -> np.ndarray:
        if self._dbar is None:
            raise InputError("form field has no z̄-derivatives; D'* needs differentiable coefficients")
        z = np.asarray(z, dtype=complex)
        return np.asarray(self._dbar(z), dtype=complex).reshape(
            len(z), self.n, comb(self.n, self.q), self.r)


@lru_cache(maxsize=None)
def _dbar_on_forms(n: int, p: int, q: int) -> np.ndarray:
    """Stack over l of e(dz̄_l): (p, q) → (p, q+1), shape (n, dim_out, dim_in)."""
    src, dst = exterior.basis(n, p, q), exterior.basis(n, p, q + 1)
    return np.stack([exterior.word_matrix([("e", exterior.dzbar(l, n))], src, dst)
                     for l in range(1, n + 1)])


@lru_cache(maxsize=None)
def _dprime_star_maps(n: int, q: int) -> np.ndarray:
    """Matrices M_l with D'*g = Σ_l M_l ∂g/∂z̄_l, i.e. M_l = -i e(dz̄_l) Λ."""
    lam = exterior.contraction(n, n, q)
    wedge = _dbar_on_forms(n, n - 1, q - 1)
    return -1j * np.einsum("lab,bc->lac", wedge, lam)


def dbar_of_field(g: FormField, z) -> np.ndarray:
    """∂̄g at points, as (N, C(n,q+1), r) coefficients of (n, q+1)-forms."""
    dg = g.dbar_derivatives(z)
    if g.q == g.n:
        return np.zeros((len(dg), 0, g.r), dtype=complex)
    maps = _dbar_on_forms(g.n, g.n, g.q)
    return np.einsum("lab,Nlbr->Nar", maps, dg)


def dprime_star_closed(g: FormField, z) -> np.ndarray:
    """D'*g = i[Λ_ω, ∂̄]g = −i∂̄(Λ_ω g) for a ∂̄-closed (n, q)-form field g.

    Returns coefficients of the (n−1, q)-form on the basis
    ``exterior.basis(n, n-1, q)``, shape (N, n·C(n,q), r). No weight enters.
    """
    if not 1 <= g.q <= g.n:
        raise InputError(f"q={g.q} outside [1, {g.n}]")
    dg = g.dbar_derivatives(z)
    return np.einsum("lab,Nlbr->Nar", _dprime_star_maps(g.n, g.q), dg)


@lru_cache(maxsize=None)
def _interior_dz(n: int, q: int) -> np.ndarray:
    src, dst = exterior.basis(n, n, q), exterior.basis(n, n - 1, q)
    return np.stack([exterior.word_matrix([("i", exterior.dz(k))], src, dst)
                     for k in range(1, n + 1)])


def dprime_star_weighted(g: FormField, z, psi_dbar: np.ndarray) -> np.ndarray:
    """Formal adjoint of D'_ψ = ∂ − ∂ψ∧ in L²(e^{−ψ}), applied to g.

    D'*_ψ = Σ_k ι(dz_k)(−∂/∂z̄_k + ψ_z̄k) − Σ_k ψ_z̄k ι(dz_k); the two weight terms
    are evaluated separately. ``psi_dbar`` has shape (N, n) with entries ∂ψ/∂z̄_k.
    """
    dg = g.dbar_derivatives(z)
    vals = g.coefficients(z)
    iota = _interior_dz(g.n, g.q)
    psi_dbar = np.asarray(psi_dbar, dtype=complex)
    from_adjoint_of_d = np.einsum("kab,Nkbr->Nar", iota, -dg + psi_dbar[:, :, None, None] * vals[:, None])
    from_adjoint_of_wedge = -np.einsum("kab,Nk,Nbr->Nar", iota, psi_dbar, vals)
    return from_adjoint_of_d + from_adjoint_of_wedge
