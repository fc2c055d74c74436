"""Explicit fibred-embedding data over warped level sets.

The construction mirrors the standard proof pattern for free dense orbits:
every net point x carries an orbit label gamma_x with sigma_{gamma_x}(P0) =
x (exact at the index level, since the snapped generator maps generate an
honest permutation action).  A chart over a set D of warped diameter < rho
anchors at z_D and decomposes each x in D as x = g . z with z a net point
of the open-cone ball Ball(z_D, 3 rho) and g = gamma_x gamma_z^{-1}, with
|g| <= 3 rho; the decomposition must be unique, otherwise the level is
rejected as below the validity threshold for this scale.

The trivialization at x maps a fiber vector (xi, eta) to
(alpha_{gamma_{z_D}^{-1} gamma_z} xi, U_{g^{-1}} eta): the affine cocycle
action on the sequence-space slot, the model's linear isometry on the
ambient slot.  Two verification passes check the distance-control identity
and the constancy of chart-to-chart transitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .cocycles import Cocycle
from .errors import ContractError, PropertyViolationError, ValidationError
from .groups import GroupElement
from .spaces import SpaceModel
from .vectors import combine_norm_pow, v_norm_pow, v_sub
from .warp import WarpedDistanceMatrix

PAIR_SAMPLE_CAP = 4000


# ---------------------------------------------------------------------------
# section

@dataclass
class Section:
    """s(x) = (b_{gamma_x^{-1}}, coords(x)) stored per net point."""

    model: SpaceModel
    cocycle: Cocycle
    e_parts: list
    horizon: int

    def value(self, idx: int):
        return self.e_parts[idx], self.model.ambient.coords(idx)


def build_section(model: SpaceModel, cocycle: Cocycle,
                  horizon_cap: int = 10) -> Section:
    if model.labels is None or any(l is None for l in model.labels):
        missing = [i for i, l in enumerate(model.labels or []) if l is None]
        raise ContractError(
            f"orbit labels missing for points {missing[:6]}; the snapped "
            f"action does not reach them from the base point")
    seen: dict[tuple, int] = {}
    for i, lab in enumerate(model.labels):
        if lab.word in seen:
            raise PropertyViolationError(
                "orbit label collision (free-orbit violation)",
                witness=(seen[lab.word], i))
        seen[lab.word] = i
    grp = model.group()
    e_parts = [cocycle.value(grp.inv(lab)) for lab in model.labels]
    return Section(model, cocycle, e_parts,
                   model.injectivity_horizon(horizon_cap))


# ---------------------------------------------------------------------------
# charts

@dataclass
class FibredChart:
    points: tuple[int, ...]
    anchor: int
    scale: float
    anchor_label: GroupElement
    z_of: dict[int, int]
    g_of: dict[int, GroupElement]
    e_word_of: dict[int, GroupElement] = field(default_factory=dict)

    def decomposition(self, idx: int):
        return self.z_of[idx], self.g_of[idx]


class ChartRejection(PropertyViolationError):
    """Level below the validity threshold for the requested chart scale."""


def build_chart(model: SpaceModel, points, anchor: int, scale,
                warped: WarpedDistanceMatrix | None = None) -> FibredChart:
    """Chart over ``points`` (warped diameter < scale) anchored at ``anchor``.

    Rejects the level when a point has no admissible decomposition or more
    than one, or when the used translates fail the ball-disjointness check.
    """
    grp = model.group()
    n = model.n
    anchor_label = model.label_of(anchor)
    ball_radius = 3 * scale
    if model.exact:
        in_ball = [z for z in range(n)
                   if model.level_dist(anchor, z) < ball_radius]
    else:
        dists = float(model.t) * np.asarray(model.base)[anchor]
        in_ball = np.nonzero(dists < ball_radius)[0].tolist()
    inv_label = {z: grp.inv(model.label_of(z)) for z in in_ball}
    z_of: dict[int, int] = {}
    g_of: dict[int, GroupElement] = {}
    for x in points:
        lx = model.label_of(x)
        found = []
        for z in in_ball:
            w = grp.mul(lx, inv_label[z])
            if len(w.word) > ball_radius:
                continue
            if _apply_word_index(model, w.word, z) != x:
                continue
            found.append((z, w))
        if not found:
            raise ChartRejection(
                f"level below validity threshold at scale {scale}: point {x} "
                f"has no admissible decomposition over anchor {anchor}",
                witness=(anchor, x))
        if len(found) > 1:
            raise ChartRejection(
                f"level below validity threshold at scale {scale}: point {x} "
                f"decomposes ambiguously over anchor {anchor}",
                witness=(anchor, x, [(z, w.word) for z, w in found[:3]]))
        z, w = found[0]
        z_of[x] = z
        g_of[x] = w
    _check_translate_disjointness(model, anchor, scale,
                                  {w.word: w for w in g_of.values()})
    chart = FibredChart(tuple(points), anchor, scale, anchor_label, z_of, g_of)
    inv_anchor = grp.inv(anchor_label)
    for x in points:
        chart.e_word_of[x] = grp.mul(inv_anchor, model.label_of(chart.z_of[x]))
    return chart


def _apply_word_index(model: SpaceModel, word: tuple[str, ...], idx: int) -> int:
    for s in reversed(word):
        idx = int(model.actions[s][idx])
    return idx


def _check_translate_disjointness(model, anchor, scale, used_words):
    """No net point may lie in two translated open-cone balls."""
    words = list(used_words.values())
    radius = 3 * scale
    center_word = {}
    for w in words:
        c = _apply_word_index(model, w.word, anchor)
        if c in center_word:
            raise ChartRejection(
                f"translated balls overlap at scale {scale}: coincident centers",
                witness=(center_word[c].word, w.word, c))
        center_word[c] = w
    centers = list(center_word)
    if not model.exact:
        D = float(model.t) * np.asarray(model.base)[centers, :]
        counts = (D < radius).sum(axis=0)
        bad = np.argwhere(counts > 1)
        if len(bad):
            y = int(bad[0][0])
            hits = [c for c in centers if model.level_dist(c, y) < radius]
            raise ChartRejection(
                f"translated balls overlap at scale {scale}",
                witness=(center_word[hits[0]].word, center_word[hits[1]].word, y))
        return
    for y in range(model.n):
        hits = [c for c in centers if model.level_dist(c, y) < radius]
        if len(hits) > 1:
            raise ChartRejection(
                f"translated balls overlap at scale {scale}",
                witness=(center_word[hits[0]].word, center_word[hits[1]].word, y))


def singleton_charts_possible(model: SpaceModel, scale) -> bool:
    """True when the net spacing exceeds the chart ball radius, so every
    decomposition collapses to z = anchor."""
    n = model.n
    vals = [model.level_dist(0, j) for j in range(1, n)]
    return min(vals) >= 3 * scale


# ---------------------------------------------------------------------------
# trivializations

def apply_trivialization(chart: FibredChart, model: SpaceModel,
                         cocycle: Cocycle, idx: int, vec):
    """t_C(x) applied to a fiber vector (xi, eta)."""
    xi, eta = vec
    grp = model.group()
    e_word = chart.e_word_of[idx]
    g = chart.g_of[idx]
    xi_out = cocycle.apply_affine(e_word, xi)
    eta_out = model.ambient.apply_word(grp.inv(g).word, eta)
    return xi_out, eta_out


def trivialized_section_value(chart: FibredChart, model: SpaceModel,
                              section: Section, idx: int):
    return apply_trivialization(chart, model, section.cocycle, idx,
                                section.value(idx))


# ---------------------------------------------------------------------------
# verification: distance control (the first defining requirement)

@dataclass
class EnvelopeBucket:
    distance: float
    count: int
    min_embedded: float
    max_embedded: float


@dataclass
class DistanceControlReport:
    p: object
    exact: bool
    pair_count: int
    max_identity_deviation: object      # (a): construction identity
    max_decomposition_deviation: object  # (b): delta = |g g'^{-1}| + ||z - z'||
    identity_tolerance: float
    decomposition_tolerance: float
    envelope: list[EnvelopeBucket]
    witness_identity: tuple | None = None
    witness_decomposition: tuple | None = None

    @property
    def identity_ok(self) -> bool:
        return float(self.max_identity_deviation) <= self.identity_tolerance

    @property
    def decomposition_ok(self) -> bool:
        return float(self.max_decomposition_deviation) <= self.decomposition_tolerance

    def lower_envelope(self):
        """Largest nondecreasing minorant samples: suffix-min of bucket minima."""
        buckets = sorted(self.envelope, key=lambda b: b.distance)
        out = []
        running = math.inf
        for b in reversed(buckets):
            running = min(running, b.min_embedded)
            out.append((b.distance, running))
        return list(reversed(out))


def _norm_value(pow_val, p) -> float:
    return float(pow_val) ** (1.0 / p) if pow_val else 0.0


def snap_budget(model: SpaceModel, word_budget: float) -> float:
    """Accumulated snapping allowance for identities composing that many
    generator steps (zero on exactly isometric nets)."""
    per_step = max(model.snap.get("max_displacement", 0.0),
                   model.snap.get("isometry_defect", 0.0))
    if model.isometric:
        per_step = 0.0
    return word_budget * per_step


def verify_distance_control(model: SpaceModel, warped: WarpedDistanceMatrix,
                            charts, section: Section, p=2,
                            pair_cap: int = PAIR_SAMPLE_CAP
                            ) -> DistanceControlReport:
    """Check, for chart pairs x, x':

    (a) ||t_C(x)s(x) - t_C(x')s(x')||_p equals
        (||b_{g^-1} - b_{g'^-1}||^p + ||z - z'||^p)^{1/p}  (construction
        identity; exact up to snapping/float budget),
    (b) delta(x, x') = |g g'^{-1}| + t d(z, z')  (against the warp engine),
    and aggregate the empirical distance envelope.
    """
    cocycle = section.cocycle
    grp = model.group()
    exact = model.exact and p == int(p)
    zero = Fraction(0) if exact else 0.0
    worst_a, worst_b = zero, zero
    wit_a = wit_b = None
    buckets: dict[float, list] = {}
    pair_count = 0
    max_words = 0.0
    for chart in charts:
        pts = list(chart.points)
        pairs = [(x, y) for i, x in enumerate(pts) for y in pts[i + 1:]]
        if len(pairs) > pair_cap:
            step = len(pairs) // pair_cap + 1
            pairs = pairs[::step]
        for x, y in pairs:
            pair_count += 1
            tx = trivialized_section_value(chart, model, section, x)
            ty = trivialized_section_value(chart, model, section, y)
            lhs_pow = combine_norm_pow(
                v_norm_pow(v_sub(tx[0], ty[0]), p),
                model.ambient.norm_pow(model.ambient.sub(tx[1], ty[1]), p))
            zx, gx = chart.decomposition(x)
            zy, gy = chart.decomposition(y)
            rhs_e = v_sub(cocycle.value(grp.inv(gx)), cocycle.value(grp.inv(gy)))
            rhs_h = model.ambient.sub(model.ambient.coords(zx),
                                      model.ambient.coords(zy))
            rhs_pow = combine_norm_pow(v_norm_pow(rhs_e, p),
                                       model.ambient.norm_pow(rhs_h, p))
            max_words = max(max_words, len(gx.word) + len(gy.word) + 2)
            if exact:
                dev_a = abs(lhs_pow - rhs_pow)
            else:
                dev_a = abs(_norm_value(lhs_pow, p) - _norm_value(rhs_pow, p))
            if dev_a > worst_a:
                worst_a, wit_a = dev_a, (x, y)

            word_dist = len(grp.mul(gx, grp.inv(gy)).word)
            law = word_dist + model.level_dist(zx, zy)
            dev_b = abs(warped.get(x, y) - law)
            if dev_b > worst_b:
                worst_b, wit_b = dev_b, (x, y)

            dist = float(warped.get(x, y))
            emb = _norm_value(lhs_pow, p)
            key = round(dist, 9)
            cur = buckets.get(key)
            if cur is None:
                buckets[key] = [1, emb, emb]
            else:
                cur[0] += 1
                cur[1] = min(cur[1], emb)
                cur[2] = max(cur[2], emb)
    envelope = [EnvelopeBucket(k, c, lo, hi)
                for k, (c, lo, hi) in sorted(buckets.items())]
    tol_a = 0.0 if exact else 1e-9 + snap_budget(model, 2.0 * max_words)
    tol_b = 0.0 if exact else 1e-6 + snap_budget(model, 2.0 * max_words)
    return DistanceControlReport(p, exact, pair_count, worst_a, worst_b,
                                 tol_a, tol_b, envelope, wit_a, wit_b)


# ---------------------------------------------------------------------------
# verification: transition consistency (the second defining requirement)

@dataclass
class TransitionIsometry:
    """t_{C1 C2} as a pair of group words: affine cocycle slot, ambient slot."""

    e_word: GroupElement
    h_word: GroupElement

    def linear_parts(self):
        return self.e_word, self.h_word


@dataclass
class TransitionReport:
    common_count: int
    consistent: bool
    isometry: TransitionIsometry | None
    witnesses: list


def verify_transition(model: SpaceModel, chart1: FibredChart,
                      chart2: FibredChart) -> TransitionReport:
    """t_{C1}(x) o t_{C2}(x)^{-1} must be one affine isometry for all common x.

    The composite is word-level data: e-slot word
    gamma_{z_{C1}}^{-1} gamma_{z1} gamma_{z2}^{-1} gamma_{z_{C2}} and h-slot
    word g1^{-1} g2, so constancy is an exact word comparison even on
    snapped float models.
    """
    common = sorted(set(chart1.points) & set(chart2.points))
    if not common:
        raise ValidationError("charts do not intersect")
    grp = model.group()
    expected = None
    witnesses = []
    for x in common:
        e1 = chart1.e_word_of[x]
        e2 = chart2.e_word_of[x]
        g1 = chart1.g_of[x]
        g2 = chart2.g_of[x]
        e_word = grp.mul(e1, grp.inv(e2))
        h_word = grp.mul(grp.inv(g1), g2)
        pair = (e_word.word, h_word.word)
        if expected is None:
            expected = pair
            iso = TransitionIsometry(e_word, h_word)
        elif pair != expected:
            witnesses.append((x, pair, expected))
    if witnesses:
        return TransitionReport(len(common), False, None, witnesses)
    return TransitionReport(len(common), True, iso, [])


# ---------------------------------------------------------------------------
# partition and halo charts

@dataclass
class LevelPartition:
    radius: object                    # cell diameter bound R
    centers: list[int]
    cells: list[tuple[int, ...]]
    cell_of: list[int]

    def __len__(self):
        return len(self.cells)


def build_partition(model: SpaceModel, warped: WarpedDistanceMatrix,
                    radius) -> LevelPartition:
    """Voronoi cells of a greedy (radius/2)-separated center set under the
    warped metric; ties go to the lowest center index.  Cell diameters are
    strictly below ``radius`` by the triangle inequality."""
    n = model.n
    half = Fraction(radius, 2) if warped.exact else radius / 2.0
    centers: list[int] = []
    for i in range(n):
        if all(warped.get(i, c) >= half for c in centers):
            centers.append(i)
    cell_of = []
    for i in range(n):
        best, best_c = None, None
        for ci, c in enumerate(centers):
            d = warped.get(i, c)
            if best is None or d < best:
                best, best_c = d, ci
        cell_of.append(best_c)
    cells = [tuple(i for i in range(n) if cell_of[i] == ci)
             for ci in range(len(centers))]
    for cell in cells:
        for a in cell:
            for b in cell:
                if not warped.get(a, b) < radius:
                    raise PropertyViolationError(
                        "partition cell diameter reaches its bound",
                        witness=(a, b))
    return LevelPartition(radius, centers, cells, cell_of)


def halo_points(warped: WarpedDistanceMatrix, cell: tuple[int, ...],
                reach) -> tuple[int, ...]:
    """Indices within warped distance < reach of the cell."""
    n = warped.n
    out = []
    for y in range(n):
        d = min(warped.get(y, c) for c in cell)
        if d < reach:
            out.append(y)
    return tuple(out)


# ---------------------------------------------------------------------------
# the product-space coarse embedding

@dataclass
class EmbeddedPair:
    e_part: dict
    h_part: np.ndarray


def product_embedding(gamma: GroupElement, point: int, model: SpaceModel,
                      cocycle: Cocycle) -> EmbeddedPair:
    """(gamma, x) -> (b_{gamma^{-1}}, coords(x)), the product-space embedding."""
    grp = model.group()
    return EmbeddedPair(cocycle.value(grp.inv(gamma)),
                        model.ambient.coords_float(point))


def embedded_distance(a: EmbeddedPair, b: EmbeddedPair, p, cocycle: Cocycle) -> float:
    e_pow = float(v_norm_pow(v_sub(a.e_part, b.e_part), p))
    h = a.h_part - b.h_part
    h_pow = float(np.dot(h, h)) ** (p / 2.0)
    return (e_pow + h_pow) ** (1.0 / p)


def input_distance(g1: GroupElement, x1: int, g2: GroupElement, x2: int,
                   model: SpaceModel) -> float:
    grp = model.group()
    word = len(grp.mul(g1, grp.inv(g2)).word)
    h = model.ambient.coords_float(x1) - model.ambient.coords_float(x2)
    return word + float(np.linalg.norm(h))


def embedding_envelope(model: SpaceModel, cocycle: Cocycle, elements,
                       points, p=2) -> list[EnvelopeBucket]:
    """Empirical (input distance, embedded distance) envelope over the grid
    elements x points; both control functions are reported, never asserted
    in closed form."""
    pairs = [(g, x) for g in elements for x in points]
    buckets: dict[float, list] = {}
    for i, (g1, x1) in enumerate(pairs):
        a = product_embedding(g1, x1, model, cocycle)
        for g2, x2 in pairs[i + 1:]:
            b = product_embedding(g2, x2, model, cocycle)
            din = input_distance(g1, x1, g2, x2, model)
            demb = embedded_distance(a, b, p, cocycle)
            key = round(din, 6)
            cur = buckets.get(key)
            if cur is None:
                buckets[key] = [1, demb, demb]
            else:
                cur[0] += 1
                cur[1] = min(cur[1], demb)
                cur[2] = max(cur[2], demb)
    return [EnvelopeBucket(k, c, lo, hi)
            for k, (c, lo, hi) in sorted(buckets.items())]


def lower_envelope(buckets) -> list[tuple[float, float]]:
    out = []
    running = math.inf
    for b in sorted(buckets, key=lambda b: b.distance, reverse=True):
        running = min(running, b.min_embedded)
        out.append((b.distance, running))
    return list(reversed(out))
