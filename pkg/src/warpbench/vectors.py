"""Sparse coordinate vectors with exact or floating coefficients.

Cocycle values live in an infinite-dimensional sequence space but are
finitely supported, so they are plain dicts ``key -> coefficient``.  Keys
are hashable (ints for line edges, word tuples for tree edges).  All
arithmetic preserves exactness: integer/Fraction coefficients stay exact,
and p-th-power norms are exact whenever p is a positive integer.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

SparseVec = dict


def v_add(a: SparseVec, b: SparseVec) -> SparseVec:
    out = dict(a)
    for k, c in b.items():
        s = out.get(k, 0) + c
        if s:
            out[k] = s
        else:
            out.pop(k, None)
    return out


def v_sub(a: SparseVec, b: SparseVec) -> SparseVec:
    out = dict(a)
    for k, c in b.items():
        s = out.get(k, 0) - c
        if s:
            out[k] = s
        else:
            out.pop(k, None)
    return out


def v_scale(a: SparseVec, c) -> SparseVec:
    if not c:
        return {}
    return {k: c * v for k, v in a.items()}


def v_eq(a: SparseVec, b: SparseVec) -> bool:
    return v_sub(a, b) == {}


def v_norm_pow(a: SparseVec, p) -> Fraction | float:
    """sum |c|^p, exact for integral p over rational coefficients."""
    if p == int(p) and all(isinstance(c, (int, Rational)) for c in a.values()):
        return sum((abs(Fraction(c)) ** int(p) for c in a.values()), Fraction(0))
    return float(sum(abs(float(c)) ** p for c in a.values()))


def v_norm(a: SparseVec, p) -> float:
    return float(v_norm_pow(a, p)) ** (1.0 / p)


def combine_norm_pow(e_pow, h_pow):
    """||(xi, eta)||_p^p from the two slot contributions, exact when both are."""
    if isinstance(e_pow, Rational) and isinstance(h_pow, Rational):
        return Fraction(e_pow) + Fraction(h_pow)
    return float(e_pow) + float(h_pow)
