"""Exterior algebra on the orthonormal coframe dz_1..dz_n, dz̄_1..dz̄_n.

Labels ``0..n-1`` stand for dz_1..dz_n and ``n..2n-1`` for dz̄_1..dz̄_n; a monomial
is a sorted tuple of labels, so every (p, q) monomial lists its dz factors first.
Monomials are orthonormal, which makes ``interior(a)`` the adjoint of ``wedge(a)``.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

Monomial = tuple[int, ...]


def dz(j: int) -> int:
    """Label of dz_j (1-based j)."""
    return j - 1


def dzbar(j: int, n: int) -> int:
    return n + j - 1


def wedge(label: int, mono: Monomial) -> tuple[int, Monomial] | None:
    """``e(label) mono`` as (sign, monomial), or None when it vanishes."""
    if label in mono:
        return None
    pos = sum(1 for x in mono if x < label)
    return (-1) ** pos, mono[:pos] + (label,) + mono[pos:]


def interior(label: int, mono: Monomial) -> tuple[int, Monomial] | None:
    if label not in mono:
        return None
    pos = mono.index(label)
    return (-1) ** pos, mono[:pos] + mono[pos + 1:]


@lru_cache(maxsize=None)
def basis(n: int, p: int, q: int) -> tuple[Monomial, ...]:
    """(p, q) monomials ordered by holomorphic part, then anti-holomorphic part."""
    out = []
    for a in itertools.combinations(range(n), p):
        for b in itertools.combinations(range(n), q):
            out.append(a + tuple(n + x for x in b))
    return tuple(out)


def degree(mono: Monomial, n: int) -> tuple[int, int]:
    p = sum(1 for x in mono if x < n)
    return p, len(mono) - p


def apply_word(word, mono: Monomial) -> tuple[int, Monomial] | None:
    """Apply a word of ('e'|'i', label) letters, rightmost letter first."""
    sign = 1
    for kind, label in reversed(word):
        step = (wedge if kind == "e" else interior)(label, mono)
        if step is None:
            return None
        s, mono = step
        sign *= s
    return sign, mono


def word_matrix(word, src: tuple[Monomial, ...], dst: tuple[Monomial, ...]) -> np.ndarray:
    """Matrix of a word acting from the span of ``src`` into the span of ``dst``."""
    where = {m: k for k, m in enumerate(dst)}
    mat = np.zeros((len(dst), len(src)))
    for col, mono in enumerate(src):
        res = apply_word(word, mono)
        if res is not None:
            sign, out = res
            mat[where[out], col] += sign
    return mat


def lefschetz(n: int, p: int, q: int) -> np.ndarray:
    """L = ω∧ for ω = i Σ dz_j∧dz̄_j, from (p, q) to (p+1, q+1) forms."""
    src, dst = basis(n, p, q), basis(n, p + 1, q + 1)
    mat = np.zeros((len(dst), len(src)), dtype=complex)
    if p + 1 > n or q + 1 > n:
        return mat
    for j in range(1, n + 1):
        mat += 1j * word_matrix([("e", dz(j)), ("e", dzbar(j, n))], src, dst)
    return mat


def contraction(n: int, p: int, q: int) -> np.ndarray:
    """Λ, the adjoint of L, from (p, q) to (p-1, q-1) forms."""
    src = basis(n, p, q)
    if p < 1 or q < 1:
        return np.zeros((0, len(src)), dtype=complex)
    dst = basis(n, p - 1, q - 1)
    mat = np.zeros((len(dst), len(src)), dtype=complex)
    for j in range(1, n + 1):
        mat += -1j * word_matrix([("i", dzbar(j, n)), ("i", dz(j))], src, dst)
    return mat
