"""Dense complex linear algebra and multi-index combinatorics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError, NumericalError, RefusalError

MultiIndex = tuple[int, ...]

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
ORACLE_MAX_DIM = 12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianMatrix:
    """Square complex matrix, symmetrized to ``(H + H^*)/2`` on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("matrix has non-finite entries")
        a = 0.5 * (a + a.conj().T)
        object.__setattr__(self, "entries", _frozen(a))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def as_hermitian(h) -> HermitianMatrix:
    return h if isinstance(h, HermitianMatrix) else HermitianMatrix(h)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    unitary: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        u = self.unitary
        return (u * self.eigenvalues) @ u.conj().T


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Annihilate ``a[p, q]`` with one complex Jacobi rotation, in place."""
    apq = a[p, q]
    mag = abs(apq)
    phase = apq / mag
    theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c
    # phase the q-axis so the pivot is real, then rotate in the (p, q) plane
    rot = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
    idx = [p, q]
    a[:, idx] = a[:, idx] @ rot
    a[idx, :] = rot.conj().T @ a[idx, :]
    v[:, idx] = v[:, idx] @ rot
    a[p, q] = a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real


def _normalize_phases(u: np.ndarray) -> np.ndarray:
    u = u.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        col /= np.linalg.norm(col)
        thresh = 1e-12 * np.max(np.abs(col))
        lead = np.flatnonzero(np.abs(col) > thresh)[0]
        col *= abs(col[lead]) / col[lead]
        col[lead] = col[lead].real
    return u


def eig_hermitian(h) -> Spectrum:
    """Eigen-decomposition by cyclic Jacobi rotations.

    Eigenvalues come back ascending; each eigenvector has its first non-negligible
    component real and positive.
    """
    h = as_hermitian(h)
    a = np.array(h.entries, dtype=complex)
    n = h.dim
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    if n > 1 and scale > 0:
        pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
        for _ in range(JACOBI_MAX_SWEEPS):
            off = np.linalg.norm(a - np.diag(np.diag(a)))
            if off < JACOBI_TOL * scale:
                break
            for p, q in pairs:
                if abs(a[p, q]) > 1e-300:
                    _rotate(a, v, p, q)
        else:
            raise NumericalError("Jacobi iteration did not converge")
    lam = np.diag(a).real.copy()
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    u = _normalize_phases(v[:, order])
    return Spectrum(_frozen(lam), _frozen(u))


def _eigenvalues(s) -> np.ndarray:
    if isinstance(s, Spectrum):
        return np.asarray(s.eigenvalues)
    if isinstance(s, HermitianMatrix) or np.ndim(s) == 2:
        return np.asarray(eig_hermitian(s).eigenvalues)
    return np.sort(np.asarray(s, dtype=float))


def q_smallest_sum(s, q: int) -> float:
    """Minimum over all distinct q-subsets of eigenvalue sums.

    Accepts a :class:`Spectrum`, a :class:`HermitianMatrix` or a plain sequence of
    eigenvalues.
    """
    lam = _eigenvalues(s)
    if not 1 <= q <= len(lam):
        raise InputError(f"q={q} outside [1, {len(lam)}]")
    return float(np.sum(lam[:q]))


def subset_sums_oracle(s, q: int) -> list[float]:
    """All C(n, q) subset sums by explicit enumeration, ascending."""
    lam = _eigenvalues(s)
    n = len(lam)
    if n > ORACLE_MAX_DIM:
        raise RefusalError(f"dimension {n} exceeds enumeration bound {ORACLE_MAX_DIM}")
    if not 1 <= q <= n:
        raise InputError(f"q={q} outside [1, {n}]")
    sums = [math.fsum(lam[list(c)]) for c in itertools.combinations(range(n), q)]
    return sorted(sums)


@lru_cache(maxsize=None)
def multi_indices(n: int, q: int) -> tuple[MultiIndex, ...]:
    """Strictly increasing q-tuples from ``1..n`` in lexicographic order."""
    if n < 0 or q < 0:
        raise InputError("n and q must be non-negative")
    if q > n:
        raise InputError(f"q={q} exceeds n={n}")
    return tuple(itertools.combinations(range(1, n + 1), q))


@lru_cache(maxsize=None)
def index_position(n: int, q: int) -> dict[MultiIndex, int]:
    return {idx: k for k, idx in enumerate(multi_indices(n, q))}


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)
