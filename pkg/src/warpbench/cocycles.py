"""Proper cocycles b: G -> E for linear isometric actions pi on sequence spaces.

Two concrete families, one per acting group the workbench ships:

* the tree cocycle on a free group: b_g is the signed indicator of the
  geodesic from the identity to g in the Cayley tree, pi permutes edge
  coordinates;
* the line cocycle on Z: b_n is the signed indicator of the integer
  interval [0, n], pi shifts coordinates.

Both satisfy the defining identity b(gh) = pi_g b(h) + b(g) exactly over
integer coordinates, and ||b_g||_p^p = |g| since every coefficient is +-1.
"""

from __future__ import annotations

from .errors import ContractError
from .groups import FreeAbelian, FreeGroup, Group, GroupElement
from .vectors import SparseVec, v_add, v_norm, v_norm_pow, v_scale, v_sub


class Cocycle:
    """A 1-cocycle together with its representation, on sparse coordinates."""

    def __init__(self, group: Group, p=2):
        if p < 1:
            raise ContractError("target exponent p must be >= 1")
        self.group = group
        self.p = p
        self._cache: dict[tuple, SparseVec] = {}

    def value(self, g: GroupElement) -> SparseVec:
        self.group._check_member(g)
        v = self._cache.get(g.word)
        if v is None:
            v = self._value(g)
            self._cache[g.word] = v
        return dict(v)

    def apply_pi(self, g: GroupElement, v: SparseVec) -> SparseVec:
        raise NotImplementedError

    def apply_affine(self, g: GroupElement, v: SparseVec) -> SparseVec:
        """alpha_g(v) = pi_g(v) + b_g."""
        return v_add(self.apply_pi(g, v), self.value(g))

    def norm_pow(self, v: SparseVec):
        return v_norm_pow(v, self.p)

    def norm(self, v: SparseVec) -> float:
        return v_norm(v, self.p)

    def _value(self, g: GroupElement) -> SparseVec:
        raise NotImplementedError


class TreeCocycle(Cocycle):
    """Edge-indicator cocycle on the Cayley tree of a free group.

    An edge is keyed by its endpoint farther from the identity (a nonempty
    reduced word); the canonical orientation points away from the identity.
    b_g sums the oriented edges along [e, g]; pi_g carries an oriented edge
    to its image, flipping the sign when the image orientation points back
    toward the identity.
    """

    def __init__(self, group: Group, p=2):
        if not isinstance(group, FreeGroup):
            raise ContractError(
                f"tree cocycle requires a free group, got {type(group).__name__}")
        super().__init__(group, p)

    def _value(self, g: GroupElement) -> SparseVec:
        return {g.word[:i]: 1 for i in range(1, len(g.word) + 1)}

    def apply_pi(self, g: GroupElement, v: SparseVec) -> SparseVec:
        grp = self.group
        out: SparseVec = {}
        for key, c in v.items():
            far = grp.normal_form(g.word + key)
            near = grp.normal_form(g.word + key[:-1])
            if len(far) == len(near) + 1:
                new_key, sign = far, 1
            else:
                new_key, sign = near, -1
            s = out.get(new_key, 0) + sign * c
            if s:
                out[new_key] = s
            else:
                out.pop(new_key, None)
        return out


class LineCocycle(Cocycle):
    """Interval-indicator cocycle on Z; pi shifts edge coordinates."""

    def __init__(self, group: Group, p=2):
        if not isinstance(group, FreeAbelian) or group.rank != 1:
            raise ContractError(
                f"line cocycle requires Z (free abelian of rank 1), "
                f"got {type(group).__name__}")
        super().__init__(group, p)

    def _shift(self, g: GroupElement) -> int:
        return self.group.exponents(g)[0]

    def _value(self, g: GroupElement) -> SparseVec:
        n = self._shift(g)
        if n >= 0:
            return {k: 1 for k in range(n)}
        return {k: -1 for k in range(n, 0)}

    def apply_pi(self, g: GroupElement, v: SparseVec) -> SparseVec:
        m = self._shift(g)
        return {k + m: c for k, c in v.items()}


def tree_cocycle(group: Group, p=2) -> TreeCocycle:
    return TreeCocycle(group, p)


def shift_cocycle(group: Group, p=2) -> LineCocycle:
    return LineCocycle(group, p)


def cocycle_for(group: Group, p=2) -> Cocycle:
    """The natural proper cocycle for a supported acting group."""
    if isinstance(group, FreeGroup):
        return TreeCocycle(group, p)
    if isinstance(group, FreeAbelian) and group.rank == 1:
        return LineCocycle(group, p)
    raise ContractError(f"no proper cocycle construction for {group!r}")
