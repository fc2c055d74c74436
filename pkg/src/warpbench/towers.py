"""Quotient towers of free abelian groups and the profinite-style metric.

A tower is a nested chain of finite-index subgroups (m_{n,1} Z) x ... x
(m_{n,k} Z) of Z^k, recorded through its finite quotients together with a
strictly decreasing sequence of rational scales a_n.  The scales must
satisfy a_{n+1} < a_n / diam(level n); the default schedule divides by
twice the diameter, which keeps the inequality strict in exact arithmetic.

Tower elements are compatible sequences of per-level residue vectors; the
metric between two elements truncated at depth N is

    max over n <= N of  a_n * (word length of the level-n difference),

computed exactly over Fractions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import StructuralError, ValidationError
from .groups import CyclicProduct, FreeAbelian, GroupElement, ensure_group


@dataclass(frozen=True)
class TowerElement:
    """Compatible residue sequence; level n holds residues mod the level-n moduli."""

    levels: tuple[tuple[int, ...], ...]

    def truncate(self, depth: int) -> "TowerElement":
        return TowerElement(self.levels[:depth])

    def to_json(self):
        return [list(lv) for lv in self.levels]


class QuotientTower:
    def __init__(self, moduli_per_level: Sequence[Sequence[int]],
                 scales: Sequence[Fraction] | None = None,
                 base: FreeAbelian | None = None):
        levels = [tuple(int(m) for m in row) for row in moduli_per_level]
        if not levels:
            raise ValidationError("tower needs at least one level")
        rank = len(levels[0])
        if any(len(row) != rank for row in levels):
            raise ValidationError("all levels must share the base rank")
        for n in range(1, len(levels)):
            for i in range(rank):
                if levels[n][i] % levels[n - 1][i] != 0:
                    raise StructuralError(
                        f"level {n + 1} moduli {levels[n]} do not refine "
                        f"level {n} moduli {levels[n - 1]} at coordinate {i}")
        self.rank = rank
        self.moduli = levels
        self.base = base or ensure_group(
            "free_abelian", gid="Z" if rank == 1 else f"Z^{rank}", rank=rank)
        self.quotients = [
            ensure_group("cyclic_product", gid=f"{self.base.gid} mod {row}",
                         moduli=row)
            for row in levels
        ]
        self.scales = tuple(Fraction(s) for s in scales) if scales is not None \
            else self._default_scales()
        self._validate_scales()

    # ------------------------------------------------------------------
    def _default_scales(self) -> tuple[Fraction, ...]:
        out = [Fraction(1)]
        for q in self.quotients[:-1]:
            out.append(out[-1] / (2 * max(1, q.diameter())))
        return tuple(out)

    def _validate_scales(self):
        if len(self.scales) != len(self.moduli):
            raise ValidationError("need one scale per level")
        if any(s <= 0 for s in self.scales):
            raise ValidationError("scales must be positive")
        for n in range(1, len(self.scales)):
            if not self.scales[n] < self.scales[n - 1]:
                raise ValidationError(
                    f"scales must decrease strictly (level {n + 1})")
            diam = self.quotients[n - 1].diameter()
            if diam and not self.scales[n] < self.scales[n - 1] / diam:
                raise ValidationError(
                    f"scale constraint violated at level {n + 1}: "
                    f"{self.scales[n]} >= {self.scales[n - 1]}/{diam}")

    @property
    def depth(self) -> int:
        return len(self.moduli)

    def level_group(self, depth: int) -> CyclicProduct:
        return self.quotients[depth - 1]

    # ------------------------------------------------------------------
    def element_from_base(self, gamma: GroupElement, depth: int | None = None) -> TowerElement:
        """Image of a base-group element down the tower."""
        depth = depth or self.depth
        vec = self.base.exponents(gamma)
        return TowerElement(tuple(
            tuple(v % m for v, m in zip(vec, self.moduli[n]))
            for n in range(depth)))

    def element_from_ints(self, vec: Sequence[int], depth: int | None = None) -> TowerElement:
        return self.element_from_base(self.base.from_exponents(list(vec)), depth)

    def element_from_deepest(self, residues: Sequence[int], depth: int) -> TowerElement:
        """Compatible sequence determined by its deepest residue vector."""
        residues = [int(r) for r in residues]
        return TowerElement(tuple(
            tuple(r % m for r, m in zip(residues, self.moduli[n]))
            for n in range(depth)))

    def validate_element(self, g: TowerElement, depth: int, name: str = "element"):
        if len(g.levels) < depth:
            raise StructuralError(
                f"{name} has {len(g.levels)} levels, need {depth}")
        for n in range(1, depth):
            projected = tuple(r % m for r, m in zip(g.levels[n], self.moduli[n - 1]))
            if projected != tuple(g.levels[n - 1]):
                raise StructuralError(
                    f"{name} is incompatible at level {n + 1}: "
                    f"level {n + 1} residues {g.levels[n]} project to {projected}, "
                    f"stored level {n} is {g.levels[n - 1]}")

    # ------------------------------------------------------------------
    def metric(self, g: TowerElement, h: TowerElement, depth: int) -> Fraction:
        """max_n a_n * |g_n - h_n| over n <= depth, exact."""
        if depth < 1 or depth > self.depth:
            raise ValidationError(f"depth must lie in [1, {self.depth}]")
        self.validate_element(g, depth, "g")
        self.validate_element(h, depth, "h")
        best = Fraction(0)
        for n in range(depth):
            q = self.quotients[n]
            diff = [a - b for a, b in zip(g.levels[n], h.levels[n])]
            length = sum(min(d % m, (-d) % m) for d, m in zip(diff, q.moduli))
            best = max(best, self.scales[n] * length)
        return best

    def describe(self) -> dict:
        return {
            "rank": self.rank,
            "levels": [list(row) for row in self.moduli],
            "scales": [str(s) for s in self.scales],
            "diameters": [q.diameter() for q in self.quotients],
        }


def power_tower(base: int, depth: int, rank: int = 1) -> QuotientTower:
    """The tower (base^n Z)^rank, n = 1..depth; the workhorse instance."""
    if base < 2:
        raise ValidationError("base must be >= 2")
    return QuotientTower([[base ** n] * rank for n in range(1, depth + 1)])
