"""Finitely generated groups as reduced words over a symmetric generating set.

Three families of presentations are supported, which together cover every
acting group the workbench instantiates:

* free groups ``F_k``  (reduced words, shortlex-canonical),
* free abelian groups ``Z^k``  (exponent vectors, generator-ordered words),
* finite products of cyclic groups ``Z/m_1 x ... x Z/m_k``  (centered
  residues; the canonical geodesic word uses the generator side of smaller
  absolute exponent, with the antipodal tie broken toward the inverse).

Elements are immutable: a ``GroupElement`` is a canonical reduced word plus
the id of its registered group, and ``len(word)`` always equals the word
length with respect to the symmetric generating set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ResourceLimitError, ValidationError

# Hard ceiling for ball enumeration; configurable per call.
DEFAULT_BALL_CAP = 200_000


class GeneratingSet:
    """Ordered symmetric generating set with an explicit involution.

    ``symbols`` lists every symbol (generators and their inverses) in the
    order used for shortlex comparisons.  ``involution`` pairs each symbol
    with its inverse; a symbol may be its own inverse only when flagged
    order-2.
    """

    def __init__(self, symbols: Sequence[str], involution: dict[str, str],
                 order2: frozenset[str] = frozenset()):
        symbols = tuple(symbols)
        if not symbols:
            raise ValidationError("generating set must be nonempty")
        if len(set(symbols)) != len(symbols):
            raise ValidationError(f"duplicate symbols in {symbols}")
        for s in symbols:
            t = involution.get(s)
            if t is None or t not in symbols:
                raise ValidationError(f"involution does not close over {s!r}")
            if involution.get(t) != s:
                raise ValidationError(f"involution is not an involution at {s!r}")
            if t == s and s not in order2:
                raise ValidationError(
                    f"symbol {s!r} equals its own inverse but is not flagged order-2")
        self.symbols = symbols
        self.involution = dict(involution)
        self.order2 = frozenset(order2)
        self.index = {s: i for i, s in enumerate(symbols)}
        # one symbol per involution pair, in symbol order
        self.positive = tuple(
            s for s in symbols if self.index[s] <= self.index[involution[s]])

    def inverse_symbol(self, s: str) -> str:
        return self.involution[s]

    def resolve(self, name: str) -> str:
        """Map a user-facing spelling to a registered symbol.

        Accepts the symbol itself plus ``x⁻¹`` / ``x^-1`` aliases for the
        inverse of a registered symbol ``x``.
        """
        if name in self.index:
            return name
        for suffix in ("⁻¹", "^-1"):
            if name.endswith(suffix):
                base = name[: -len(suffix)]
                if base in self.index:
                    return self.involution[base]
        raise ValidationError(f"unknown generator symbol {name!r}")

    def shortlex_key(self, word: Sequence[str]):
        return (len(word), tuple(self.index[s] for s in word))

    def __repr__(self):
        return f"GeneratingSet({self.symbols})"


def _letter_pair(name: str) -> tuple[str, str]:
    """Default inverse naming: single lowercase letters capitalize."""
    if len(name) == 1 and name.islower():
        return name, name.upper()
    return name, name + "^-1"


@dataclass(frozen=True)
class GroupElement:
    """A canonical reduced word in a registered group."""

    word: tuple[str, ...]
    group_id: str

    def __len__(self) -> int:
        return len(self.word)

    def __str__(self) -> str:
        return " ".join(self.word) if self.word else "e"

    @property
    def is_identity(self) -> bool:
        return not self.word


class Group:
    """Base class: a registered presentation with canonical normal forms."""

    def __init__(self, gid: str, gens: GeneratingSet):
        if gid in _REGISTRY:
            raise ValidationError(f"group id {gid!r} already registered")
        self.gid = gid
        self.gens = gens
        _REGISTRY[gid] = self

    # -- presentation-specific ------------------------------------------------
    def normal_form(self, symbols: Sequence[str]) -> tuple[str, ...]:
        raise NotImplementedError

    # -- generic element algebra ----------------------------------------------
    def element(self, symbols: Iterable[str]) -> GroupElement:
        resolved = [self.gens.resolve(s) for s in symbols]
        return GroupElement(self.normal_form(resolved), self.gid)

    def parse(self, text: str) -> GroupElement:
        return self.element(text.split())

    def identity(self) -> GroupElement:
        return GroupElement((), self.gid)

    def mul(self, a: GroupElement, b: GroupElement) -> GroupElement:
        self._check_member(a), self._check_member(b)
        return GroupElement(self.normal_form(a.word + b.word), self.gid)

    def inv(self, a: GroupElement) -> GroupElement:
        self._check_member(a)
        inverted = tuple(self.gens.involution[s] for s in reversed(a.word))
        return GroupElement(self.normal_form(inverted), self.gid)

    def generators(self) -> list[GroupElement]:
        return [GroupElement((s,), self.gid) for s in self.gens.positive]

    def _check_member(self, a: GroupElement):
        if a.group_id != self.gid:
            raise ValidationError(
                f"element of group {a.group_id!r} used in group {self.gid!r}")

    def __repr__(self):
        return f"{type(self).__name__}({self.gid!r})"


class FreeGroup(Group):
    """Free group on named generators; normal form is the freely reduced word."""

    def __init__(self, names: Sequence[str], gid: str | None = None):
        names = tuple(names)
        symbols, involution = [], {}
        for n in names:
            pos, neg = _letter_pair(n)
            symbols += [pos, neg]
            involution[pos] = neg
            involution[neg] = pos
        gid = gid or f"F{len(names)}<{','.join(names)}>"
        super().__init__(gid, GeneratingSet(symbols, involution))
        self.rank = len(names)

    def normal_form(self, symbols: Sequence[str]) -> tuple[str, ...]:
        stack: list[str] = []
        inv = self.gens.involution
        for s in symbols:
            if stack and stack[-1] == inv[s]:
                stack.pop()
            else:
                stack.append(s)
        return tuple(stack)


class _VectorGroup(Group):
    """Shared machinery for groups whose elements are integer vectors."""

    rank: int

    def _to_vec(self, symbols: Sequence[str]) -> list[int]:
        vec = [0] * self.rank
        for s in symbols:
            coord, sign = self._symbol_coord[s]
            vec[coord] += sign
        return vec

    def _word_of_exponent(self, coord: int, e: int) -> tuple[str, ...]:
        if e >= 0:
            return (self._pos_symbols[coord],) * e
        return (self.gens.involution[self._pos_symbols[coord]],) * (-e)


class FreeAbelian(_VectorGroup):
    """Z^k with the standard basis; words are sorted by generator index."""

    def __init__(self, rank: int, gid: str | None = None,
                 names: Sequence[str] | None = None):
        if rank < 1:
            raise ValidationError("rank must be >= 1")
        names = tuple(names) if names else tuple(
            chr(ord("a") + i) for i in range(rank))
        if len(names) != rank:
            raise ValidationError("need one name per generator")
        symbols, involution = [], {}
        for n in names:
            pos, neg = _letter_pair(n)
            symbols += [pos, neg]
            involution[pos] = neg
            involution[neg] = pos
        gid = gid or ("Z" if rank == 1 else f"Z^{rank}")
        super().__init__(gid, GeneratingSet(symbols, involution))
        self.rank = rank
        self._pos_symbols = tuple(_letter_pair(n)[0] for n in names)
        self._symbol_coord = {}
        for i, n in enumerate(names):
            pos, neg = _letter_pair(n)
            self._symbol_coord[pos] = (i, +1)
            self._symbol_coord[neg] = (i, -1)

    def normal_form(self, symbols: Sequence[str]) -> tuple[str, ...]:
        vec = self._to_vec(symbols)
        out: tuple[str, ...] = ()
        for i, e in enumerate(vec):
            out += self._word_of_exponent(i, e)
        return out

    def exponents(self, a: GroupElement) -> tuple[int, ...]:
        self._check_member(a)
        return tuple(self._to_vec(a.word))

    def from_exponents(self, vec: Sequence[int]) -> GroupElement:
        if len(vec) != self.rank:
            raise ValidationError(f"expected {self.rank} exponents")
        word: tuple[str, ...] = ()
        for i, e in enumerate(vec):
            word += self._word_of_exponent(i, int(e))
        return GroupElement(word, self.gid)


class CyclicProduct(_VectorGroup):
    """Z/m_1 x ... x Z/m_k with one generator per factor.

    The element is identified by its least nonnegative residue vector; the
    stored word is the geodesic representative.  At the antipode of an even
    factor (residue exactly m/2) the inverse-generator side is chosen, so
    centered representatives sweep the window [-m/2, m/2).
    """

    def __init__(self, moduli: Sequence[int], gid: str | None = None,
                 names: Sequence[str] | None = None):
        moduli = tuple(int(m) for m in moduli)
        if not moduli or any(m < 2 for m in moduli):
            raise ValidationError("moduli must all be >= 2")
        names = tuple(names) if names else tuple(
            chr(ord("a") + i) for i in range(len(moduli)))
        if len(names) != len(moduli):
            raise ValidationError("need one name per factor")
        symbols, involution, order2 = [], {}, set()
        for n, m in zip(names, moduli):
            pos, neg = _letter_pair(n)
            if m == 2:
                symbols.append(pos)
                involution[pos] = pos
                order2.add(pos)
            else:
                symbols += [pos, neg]
                involution[pos] = neg
                involution[neg] = pos
        gid = gid or "x".join(f"Z/{m}" for m in moduli)
        super().__init__(gid, GeneratingSet(symbols, involution, frozenset(order2)))
        self.rank = len(moduli)
        self.moduli = moduli
        self._pos_symbols = tuple(_letter_pair(n)[0] for n in names)
        self._symbol_coord = {}
        for i, (n, m) in enumerate(zip(names, moduli)):
            pos, neg = _letter_pair(n)
            self._symbol_coord[pos] = (i, +1)
            if m > 2:
                self._symbol_coord[neg] = (i, -1)

    def order(self) -> int:
        out = 1
        for m in self.moduli:
            out *= m
        return out

    def centered(self, residues: Sequence[int]) -> tuple[int, ...]:
        """Residue vector folded into [-m/2, m/2) per coordinate."""
        out = []
        for r, m in zip(residues, self.moduli):
            r %= m
            out.append(r if r < m - r else r - m)
        return tuple(out)

    def normal_form(self, symbols: Sequence[str]) -> tuple[str, ...]:
        vec = self._to_vec(symbols)
        word: tuple[str, ...] = ()
        for i, c in enumerate(self.centered(vec)):
            word += self._word_of_exponent(i, c)
        return word

    def residues(self, a: GroupElement) -> tuple[int, ...]:
        self._check_member(a)
        return tuple(v % m for v, m in zip(self._to_vec(a.word), self.moduli))

    def from_residues(self, residues: Sequence[int]) -> GroupElement:
        if len(residues) != self.rank:
            raise ValidationError(f"expected {self.rank} residues")
        word: tuple[str, ...] = ()
        for i, c in enumerate(self.centered([int(r) for r in residues])):
            word += self._word_of_exponent(i, c)
        return GroupElement(word, self.gid)

    def diameter(self) -> int:
        return sum(m // 2 for m in self.moduli)


_REGISTRY: dict[str, Group] = {}


def get_group(gid: str) -> Group:
    try:
        return _REGISTRY[gid]
    except KeyError:
        raise ValidationError(f"no group registered under id {gid!r}") from None


def clear_registry():
    """Test helper; groups are otherwise registered for the process lifetime."""
    _REGISTRY.clear()


def ensure_group(kind: str, gid: str | None = None, **kwargs) -> Group:
    """Idempotent lookup-or-create used by config loading."""
    if gid and gid in _REGISTRY:
        return _REGISTRY[gid]
    if kind == "free":
        return FreeGroup(gid=gid, **kwargs)
    if kind == "free_abelian":
        return FreeAbelian(gid=gid, **kwargs)
    if kind == "cyclic_product":
        return CyclicProduct(gid=gid, **kwargs)
    raise ValidationError(f"unknown group kind {kind!r}")


def reduce_word(symbols: Iterable[str], group: Group | str) -> GroupElement:
    """Canonical reduced form of a symbol sequence in the given group."""
    g = get_group(group) if isinstance(group, str) else group
    return g.element(symbols)


def word_length(a: GroupElement) -> int:
    return len(a.word)


def enumerate_ball(group: Group | str, radius: int,
                   cap: int = DEFAULT_BALL_CAP) -> list[GroupElement]:
    """All elements with word length strictly below ``radius``, shortlex sorted.

    Enumerates by breadth-first layering over canonical forms, so it works
    uniformly for free, free-abelian and finite presentations.
    """
    g = get_group(group) if isinstance(group, str) else group
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    seen: dict[tuple[str, ...], None] = {}
    if radius == 0:
        return []
    seen[()] = None
    frontier = [()]
    for length in range(1, radius):
        nxt = []
        for w in frontier:
            for s in g.gens.symbols:
                cand = g.normal_form(w + (s,))
                if len(cand) == length and cand not in seen:
                    seen[cand] = None
                    nxt.append(cand)
                    if len(seen) > cap:
                        raise ResourceLimitError(
                            f"ball of radius {radius} in {g.gid} exceeds "
                            f"ball_cap={cap}", cap_name="ball_cap", cap_value=cap)
        frontier = nxt
        if not nxt:
            break
    words = sorted(seen, key=g.gens.shortlex_key)
    return [GroupElement(w, g.gid) for w in words]


def ball_with_length(group: Group | str, max_length: int,
                     cap: int = DEFAULT_BALL_CAP) -> list[GroupElement]:
    """Elements with word length <= max_length (closed ball), shortlex sorted."""
    return enumerate_ball(group, max_length + 1, cap=cap)


def pairwise_products(elements: Sequence[GroupElement], group: Group):
    """(a, b, ab) over the square of a list; used by exhaustive identity checks."""
    for a, b in itertools.product(elements, repeat=2):
        yield a, b, group.mul(a, b)
