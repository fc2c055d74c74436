"""Finite net models of compact metric spaces carrying group actions.

Three instances:

* ``circle``: n = ceil(2*pi*t/eps) equally spaced points on the unit circle,
  acted on by an irrational rotation snapped to the nearest net point (the
  snapped action is an exact isometry of the net: an index shift);
* ``su2``: unit quaternions sampled by farthest-point selection from a
  seeded random pool of orbit points, acted on by left multiplication with
  the generator quaternions, snapped to the nearest net point;
* ``profinite``: all elements of a finite quotient tower level with the
  exact rational tower metric, acted on by translation (no snapping).

A model stores the *unscaled* base metric d_Y; the level-t geometry uses
t * d_Y throughout.  Exact models (profinite) keep Fractions end to end and
rebuild bit-identically; float models record their snapping statistics so
downstream checks can budget for discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .cache import content_hash
from .errors import ContractError, ResourceLimitError, ValidationError
from .groups import FreeGroup, Group, GroupElement, ensure_group, get_group
from .towers import QuotientTower

DEFAULT_POINT_CAP = 20_000
GOLDEN_ROTATION = (math.sqrt(5.0) - 1.0) / 2.0

# Unit quaternions (1+2i)/sqrt5 and (1+2j)/sqrt5; they generate a free group.
DEFAULT_SU2_GENERATORS = (
    (1 / math.sqrt(5.0), 2 / math.sqrt(5.0), 0.0, 0.0),
    (1 / math.sqrt(5.0), 0.0, 2 / math.sqrt(5.0), 0.0),
)


# ---------------------------------------------------------------------------
# quaternions

def quat_mul(q, r):
    a1, b1, c1, d1 = q
    a2, b2, c2, d2 = r
    return (
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )


def quat_conj(q):
    a, b, c, d = q
    return (a, -b, -c, -d)


def quat_dist(q, r) -> float:
    """Geodesic distance on S^3: arccos of the real part of q r^-1."""
    dot = sum(x * y for x, y in zip(q, r))
    return math.acos(max(-1.0, min(1.0, dot)))


def quat_left_mult_matrix(q) -> np.ndarray:
    a, b, c, d = q
    return np.array([
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ])


# ---------------------------------------------------------------------------
# ambient coordinate spaces (the Hilbert slot of the embedding)

class AmbientSpace:
    """Coordinates for net points at a level, plus the linear action on them."""

    exact = False

    def coords(self, i: int):
        raise NotImplementedError

    def coords_float(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def sub(self, u, v):
        raise NotImplementedError

    def norm_sq(self, vec):
        raise NotImplementedError

    def norm_pow(self, vec, p):
        ns = self.norm_sq(vec)
        if p == 2:
            return ns
        return float(ns) ** (p / 2.0)

    def apply_word(self, word: tuple[str, ...], vec):
        """The linear isometry attached to a group word."""
        raise NotImplementedError


class PlaneAmbient(AmbientSpace):
    """Circle level set in the plane; words act by exact net rotations."""

    def __init__(self, model: "SpaceModel"):
        self.model = model
        n = model.n
        t = float(model.t)
        ang = 2.0 * math.pi * np.arange(n) / n
        self._coords = np.stack([t * np.cos(ang), t * np.sin(ang)], axis=1)
        self._shift = model.params["shift"]
        self._n = n
        grp = get_group(model.group_id)
        self._exponent = {s: (+1 if s in grp.gens.positive else -1)
                          for s in grp.gens.symbols}

    def coords(self, i):
        return self._coords[i]

    coords_float = coords

    def sub(self, u, v):
        return u - v

    def norm_sq(self, vec):
        return float(np.dot(vec, vec))

    def apply_word(self, word, vec):
        steps = sum(self._exponent[s] for s in word) * self._shift
        th = 2.0 * math.pi * steps / self._n
        rot = np.array([[math.cos(th), -math.sin(th)],
                        [math.sin(th), math.cos(th)]])
        return rot @ vec


class QuaternionAmbient(AmbientSpace):
    """SU(2) level set in R^4; words act by left multiplication."""

    def __init__(self, model: "SpaceModel"):
        self.model = model
        self._coords = float(model.t) * np.asarray(model.points, dtype=float)
        grp = get_group(model.group_id)
        gen_quats = model.params["generators"]
        self._sym_quat = {}
        for name, q in zip(grp.gens.positive, gen_quats):
            self._sym_quat[name] = tuple(q)
            self._sym_quat[grp.gens.involution[name]] = quat_conj(q)

    def coords(self, i):
        return self._coords[i]

    coords_float = coords

    def sub(self, u, v):
        return u - v

    def norm_sq(self, vec):
        return float(np.dot(vec, vec))

    def word_quaternion(self, word):
        q = (1.0, 0.0, 0.0, 0.0)
        for s in word:
            q = quat_mul(q, self._sym_quat[s])
        return q

    def apply_word(self, word, vec):
        return quat_left_mult_matrix(self.word_quaternion(word)) @ vec


class ProfileAmbient(AmbientSpace):
    """Distance-profile coordinates: point x maps to (t*d(x, p_j))_j / sqrt(n).

    The 1/sqrt(n) scaling is folded into norm_sq, which keeps every entry a
    Fraction on exact models.  Words act by permuting coordinates with the
    point action, which matches the true profile of the translated point
    because the action is an exact isometry.
    """

    def __init__(self, model: "SpaceModel"):
        self.model = model
        self.exact = model.exact
        n = model.n
        t = model.t
        self._profiles = [
            tuple(t * model.base_dist(i, j) for j in range(n)) for i in range(n)
        ]
        self._n = n

    def coords(self, i):
        return self._profiles[i]

    def coords_float(self, i):
        scale = 1.0 / math.sqrt(self._n)
        return np.array([float(x) for x in self._profiles[i]]) * scale

    def sub(self, u, v):
        return tuple(a - b for a, b in zip(u, v))

    def norm_sq(self, vec):
        total = sum((x * x for x in vec),
                    Fraction(0) if self.exact else 0.0)
        if self.exact:
            return total / self._n
        return float(total) / self._n

    def apply_word(self, word, vec):
        inv_perm = self.model.word_permutation(
            get_group(self.model.group_id).inv(
                GroupElement(word, self.model.group_id)).word)
        return tuple(vec[inv_perm[j]] for j in range(self._n))


# ---------------------------------------------------------------------------
# the model

@dataclass(frozen=True)
class ConePoint:
    """A point of the open cone: net index plus level coordinate t >= 1."""

    base: int
    t: object

    def __post_init__(self):
        if self.t < 1:
            raise ValidationError("cone parameter t must be >= 1")


class SpaceModel:
    def __init__(self, kind: str, group_id: str, points, base, t, epsilon,
                 actions: dict[str, np.ndarray], exact: bool, isometric: bool,
                 snap: dict, params: dict, labels=None, base_point: int = 0):
        self.kind = kind
        self.group_id = group_id
        self.points = points
        self.base = base                  # unscaled d_Y
        self.t = t
        self.epsilon = epsilon            # net resolution in the level metric
        self.actions = actions            # symbol -> permutation array
        self.exact = exact
        self.isometric = isometric
        self.snap = snap
        self.params = params
        self.labels = labels              # GroupElement per point, or None
        self.base_point = base_point
        self.n = len(actions[next(iter(actions))]) if actions else len(points)
        self.content_hash = content_hash({"kind": kind, **params})
        self._word_perm_cache: dict[tuple, np.ndarray] = {}
        self._ambient = None

    # -- metric access ------------------------------------------------------
    def base_dist(self, i: int, j: int):
        if self.exact:
            return self.base[i][j]
        return self.base[i, j]

    def level_dist(self, i: int, j: int):
        return self.t * self.base_dist(i, j)

    def level_matrix(self):
        if self.exact:
            return [[self.t * v for v in row] for row in self.base]
        return float(self.t) * self.base

    # -- the group action on net indices -------------------------------------
    def group(self) -> Group:
        return get_group(self.group_id)

    def apply_symbol(self, symbol: str, idx):
        return self.actions[symbol][idx]

    def word_permutation(self, word: tuple[str, ...]) -> np.ndarray:
        perm = self._word_perm_cache.get(word)
        if perm is None:
            perm = np.arange(self.n)
            for s in reversed(word):
                perm = self.actions[s][perm]
            self._word_perm_cache[word] = perm
        return perm

    def apply_element(self, g: GroupElement, idx: int) -> int:
        return int(self.word_permutation(g.word)[idx])

    # -- ambient coordinates --------------------------------------------------
    @property
    def ambient(self) -> AmbientSpace:
        if self._ambient is None:
            self._ambient = {
                "circle": PlaneAmbient,
                "su2": QuaternionAmbient,
                "profinite": ProfileAmbient,
            }[self.kind](self)
        return self._ambient

    # -- labels ----------------------------------------------------------------
    def label_of(self, idx: int) -> GroupElement:
        if self.labels is None or self.labels[idx] is None:
            raise ContractError(
                f"model {self.kind} has no orbit label for point {idx}")
        return self.labels[idx]

    def injectivity_horizon(self, max_length: int = 12) -> int:
        """Largest L <= max_length with w -> w . base_point injective on the
        closed ball of radius L."""
        from .groups import ball_with_length

        grp = self.group()
        seen: dict[int, tuple] = {}
        horizon = max_length
        for g in ball_with_length(grp, max_length, cap=500_000):
            tgt = self.apply_element(g, self.base_point)
            if tgt in seen and seen[tgt] != g.word:
                horizon = min(horizon, len(g.word) - 1)
            else:
                seen.setdefault(tgt, g.word)
        return horizon

    # -- validation -------------------------------------------------------------
    def validate(self) -> dict:
        report = {"bijections": True, "inverse_composition": True}
        grp = self.group()
        idx = np.arange(self.n)
        for s in grp.gens.symbols:
            perm = self.actions[s]
            if sorted(perm.tolist()) != list(range(self.n)):
                report["bijections"] = False
            inv = self.actions[grp.gens.involution[s]]
            if not np.array_equal(inv[perm], idx):
                report["inverse_composition"] = False
        report["isometry_defect"] = self.snap.get("isometry_defect", 0.0)
        report["max_snap"] = self.snap.get("max_displacement", 0.0)
        return report

    def to_json(self) -> dict:
        def enc(x):
            if isinstance(x, Rational) and not isinstance(x, int):
                return f"{Fraction(x).numerator}/{Fraction(x).denominator}"
            return x

        if self.exact:
            points = [list(p) for p in self.points]
            base = [[enc(v) for v in row] for row in self.base]
        else:
            points = np.asarray(self.points, dtype=float).tolist()
            base = np.asarray(self.base, dtype=float).tolist()
        return {
            "format": 1,
            "kind": self.kind,
            "group": self.group_id,
            "t": enc(self.t),
            "epsilon": self.epsilon,
            "points": points,
            "base_metric": base,
            "actions": {s: a.tolist() for s, a in self.actions.items()},
            "exact": self.exact,
            "isometric": self.isometric,
            "snap": self.snap,
            "labels": None if self.labels is None else [
                None if g is None else list(g.word) for g in self.labels],
            "params": {k: enc(v) if not isinstance(v, (list, tuple, dict)) else v
                       for k, v in self.params.items()},
            "content_hash": self.content_hash,
        }


def cone_metric(p: ConePoint, q: ConePoint, model: SpaceModel):
    """|t - t'| + min(t, t') * d_Y on the open cone over the model's base."""
    lo = min(p.t, q.t)
    return abs(p.t - q.t) + lo * model.base_dist(p.base, q.base)


# ---------------------------------------------------------------------------
# builders

def build_circle_model(alpha: float = GOLDEN_ROTATION, t=1, epsilon: float = 0.1,
                       cap: int = DEFAULT_POINT_CAP, group_id: str = "Z") -> SpaceModel:
    if not (0.0 < alpha < 1.0):
        raise ValidationError("rotation parameter must lie in (0, 1)")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    n = math.ceil(2.0 * math.pi * float(t) / epsilon)
    if n > cap:
        raise ResourceLimitError(
            f"circle net of {n} points exceeds point_cap={cap}",
            cap_name="point_cap", cap_value=cap)
    grp = ensure_group("free_abelian", gid=group_id, rank=1)
    i = np.arange(n)
    gap = np.abs(i[:, None] - i[None, :])
    base = (2.0 * math.pi / n) * np.minimum(gap, n - gap)
    shift = int(round(alpha * n)) % n
    pos, neg = grp.gens.positive[0], grp.gens.involution[grp.gens.positive[0]]
    actions = {pos: (i + shift) % n, neg: (i - shift) % n}
    snap_disp = abs(alpha * n - round(alpha * n)) * (2.0 * math.pi / n) * float(t)
    snap = {"max_displacement": snap_disp, "mean_displacement": snap_disp,
            "isometry_defect": 0.0}
    params = {"alpha": alpha, "t": t, "epsilon": epsilon, "n": n, "shift": shift,
              "group": group_id}
    labels = _bfs_labels(grp, actions, n, base_point=0)
    return SpaceModel("circle", group_id, np.stack(
        [np.cos(2 * math.pi * i / n), np.sin(2 * math.pi * i / n)], axis=1),
        base, t, epsilon, actions, exact=False, isometric=True,
        snap=snap, params=params, labels=labels)


def _random_reduced_words(grp: FreeGroup, rng, count: int, max_len: int):
    symbols = grp.gens.symbols
    inv = grp.gens.involution
    words = []
    for _ in range(count):
        length = int(rng.integers(1, max_len + 1))
        word = []
        for _ in range(length):
            options = [s for s in symbols if not word or s != inv[word[-1]]]
            word.append(options[int(rng.integers(0, len(options)))])
        words.append(tuple(word))
    return words


def _bfs_labels(grp: Group, actions: dict[str, np.ndarray], n: int,
                base_point: int, max_depth: int | None = None):
    """Shortlex-first words reaching each point from the base point under the
    snapped permutation action.  Unreached points get label None."""
    labels: list = [None] * n
    labels[base_point] = grp.identity()
    frontier = [base_point]
    if max_depth is None:
        max_depth = n
    for _ in range(max_depth):
        if all(l is not None for l in labels):
            break
        nxt = []
        for i in frontier:
            for s in grp.gens.symbols:
                j = int(actions[s][i])
                if labels[j] is None:
                    labels[j] = grp.mul(GroupElement((s,), grp.gid), labels[i])
                    nxt.append(j)
        if not nxt:
            break
        frontier = nxt
    return labels


def _snap_permutation(targets: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Match each true target to a distinct nearest net point (greedy repair
    on collisions, processed in index order)."""
    dots = np.clip(targets @ points.T, -1.0, 1.0)
    nearest = np.argmax(dots, axis=1)
    n = len(points)
    if len(set(nearest.tolist())) == n:
        return nearest
    perm = -np.ones(n, dtype=int)
    taken = np.zeros(n, dtype=bool)
    order = np.argsort(-np.max(dots, axis=1), kind="stable")
    for i in order:
        row = dots[i]
        for j in np.argsort(-row, kind="stable"):
            if not taken[j]:
                perm[i] = j
                taken[j] = True
                break
    return perm


def build_su2_model(generators=DEFAULT_SU2_GENERATORS, t=1, target_size: int = 400,
                    seed: int = 2024, pool_factor: int = 8,
                    cap: int = DEFAULT_POINT_CAP, group_id: str | None = None) -> SpaceModel:
    gens = [tuple(float(x) for x in q) for q in generators]
    for q in gens:
        if abs(sum(x * x for x in q) - 1.0) > 1e-12:
            raise ValidationError(f"generator quaternion {q} is not unit norm")
    if target_size > cap:
        raise ResourceLimitError(
            f"net of {target_size} points exceeds point_cap={cap}",
            cap_name="point_cap", cap_value=cap)
    gid = group_id or f"F{len(gens)}-su2"
    grp = ensure_group("free", gid=gid,
                       names=tuple(chr(ord("a") + i) for i in range(len(gens))))

    # Pool: orbit points of the short-word ball plus seeded random words.
    rng = np.random.default_rng(seed)
    from .groups import ball_with_length

    pool_words = [g.word for g in ball_with_length(grp, 3)]
    pool_words += _random_reduced_words(grp, rng, pool_factor * target_size, 12)
    seen = set()
    words, quats = [], []
    sym_quat = {}
    for name, q in zip(grp.gens.positive, gens):
        sym_quat[name] = q
        sym_quat[grp.gens.involution[name]] = quat_conj(q)
    for w in pool_words:
        if w in seen:
            continue
        seen.add(w)
        q = (1.0, 0.0, 0.0, 0.0)
        for s in w:
            q = quat_mul(q, sym_quat[s])
        words.append(w)
        quats.append(q)
    pool = np.array(quats)
    if len(pool) < target_size:
        raise ValidationError("pool smaller than target size; raise pool_factor")

    # Farthest-point selection, seeded at the identity (index 0 = base point).
    selected = [0]
    dmin = np.arccos(np.clip(pool @ pool[0], -1.0, 1.0))
    for _ in range(target_size - 1):
        i = int(np.argmax(dmin))
        selected.append(i)
        dmin = np.minimum(dmin, np.arccos(np.clip(pool @ pool[i], -1.0, 1.0)))
    points = pool[selected]
    point_words = [words[i] for i in selected]
    covering_radius = float(np.max(dmin))

    dots = np.clip(points @ points.T, -1.0, 1.0)
    base = np.arccos(dots)
    np.fill_diagonal(base, 0.0)

    actions: dict[str, np.ndarray] = {}
    disps = []
    for name in grp.gens.positive:
        q = sym_quat[name]
        mat = quat_left_mult_matrix(q)
        targets = points @ mat.T
        perm = _snap_permutation(targets, points)
        actions[name] = perm
        inv_name = grp.gens.involution[name]
        inv_perm = np.empty_like(perm)
        inv_perm[perm] = np.arange(len(perm))
        actions[inv_name] = inv_perm
        disps.append(np.arccos(np.clip(
            np.sum(targets * points[perm], axis=1), -1.0, 1.0)))
        inv_targets = points @ quat_left_mult_matrix(quat_conj(q)).T
        disps.append(np.arccos(np.clip(
            np.sum(inv_targets * points[inv_perm], axis=1), -1.0, 1.0)))
    disp = np.concatenate(disps) * float(t)

    # isometry defect of the snapped permutations, in the level metric
    defect = 0.0
    for name in grp.gens.positive:
        perm = actions[name]
        defect = max(defect, float(np.max(np.abs(base[np.ix_(perm, perm)] - base))))
    defect *= float(t)

    snap = {"max_displacement": float(np.max(disp)),
            "mean_displacement": float(np.mean(disp)),
            "isometry_defect": defect,
            "covering_radius_level": covering_radius * float(t)}
    params = {"generators": [list(q) for q in gens], "t": t,
              "target_size": target_size, "seed": seed,
              "pool_factor": pool_factor, "group": gid}
    labels = _bfs_labels(grp, actions, target_size, base_point=0)
    model = SpaceModel("su2", gid, points, base, t,
                       epsilon=covering_radius * float(t), actions=actions,
                       exact=False, isometric=False, snap=snap, params=params,
                       labels=labels)
    model.point_words = point_words
    return model


def build_profinite_model(tower: QuotientTower, depth: int, t,
                          cap: int = DEFAULT_POINT_CAP) -> SpaceModel:
    if depth < 1 or depth > tower.depth:
        raise ValidationError(f"depth must lie in [1, {tower.depth}]")
    if isinstance(t, float):
        t = Fraction(t).limit_denominator(10 ** 9)
    t = Fraction(t)
    if t < 1:
        raise ValidationError("level t must be >= 1")
    level = tower.level_group(depth)
    n = level.order()
    if n > cap:
        raise ResourceLimitError(
            f"quotient of order {n} exceeds point_cap={cap}",
            cap_name="point_cap", cap_value=cap)

    moduli = level.moduli
    strides = []
    acc = 1
    for m in reversed(moduli):
        strides.append(acc)
        acc *= m
    strides = list(reversed(strides))

    def index_of(residues):
        return sum(r * s for r, s in zip(residues, strides))

    residues = []

    def rec(prefix):
        if len(prefix) == len(moduli):
            residues.append(tuple(prefix))
            return
        for r in range(moduli[len(prefix)]):
            rec(prefix + [r])

    rec([])

    # translation invariance: d(x, y) = dvec[y - x]
    zero = tower.element_from_deepest([0] * tower.rank, depth)
    dvec = [tower.metric(zero, tower.element_from_deepest(r, depth), depth)
            for r in residues]
    base = [[dvec[index_of(tuple((rj - ri) % m for ri, rj, m in
                                 zip(residues[i], residues[j], moduli)))]
             for j in range(n)] for i in range(n)]

    grp = tower.base
    actions = {}
    for coord, name in enumerate(grp.gens.positive):
        perm = np.array([
            index_of(tuple((r + (1 if k == coord else 0)) % m
                           for k, (r, m) in enumerate(zip(res, moduli))))
            for res in residues])
        actions[name] = perm
        inv_perm = np.empty_like(perm)
        inv_perm[perm] = np.arange(n)
        actions[grp.gens.involution[name]] = inv_perm

    labels = [grp.from_exponents(level.centered(res)) for res in residues]
    snap = {"max_displacement": 0.0, "mean_displacement": 0.0,
            "isometry_defect": 0.0}
    params = {"tower": tower.describe(), "depth": depth, "t": t}
    return SpaceModel("profinite", grp.gid, residues, base, t, epsilon=0.0,
                      actions=actions, exact=True, isometric=True, snap=snap,
                      params=params, labels=labels)


def net_property_sample(model: SpaceModel, samples: int = 1000, seed: int = 0) -> dict:
    """Sampled covering check: max level-metric distance from random ambient
    points of the underlying space to the net."""
    rng = np.random.default_rng(seed)
    t = float(model.t)
    if model.kind == "circle":
        n = model.n
        thetas = rng.uniform(0.0, 2.0 * math.pi, size=samples)
        net = 2.0 * math.pi * np.arange(n) / n
        diff = np.abs(thetas[:, None] - net[None, :])
        diff = np.minimum(diff, 2.0 * math.pi - diff)
        worst = float(np.max(np.min(diff, axis=1))) * t
    elif model.kind == "su2":
        raw = rng.normal(size=(samples, 4))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        dots = np.clip(raw @ np.asarray(model.points).T, -1.0, 1.0)
        worst = float(np.max(np.arccos(np.max(dots, axis=1)))) * t
    elif model.kind == "profinite":
        worst = 0.0  # the net is the whole space
    else:
        raise ValidationError(f"unknown model kind {model.kind}")
    return {"samples": samples, "max_distance_to_net": worst,
            "epsilon": model.epsilon,
            "within_epsilon": worst <= model.epsilon + 1e-12}
