"""Scale-local isometric actions assembled from chart data.

Given a level model with warped matrix, a partition into cells of diameter
< R and trivialization charts over the 10R-halos of the cells, this module
assembles the local representation and cocycle on the discrete L_p space of
uniformly weighted net points:

    pi_gamma(xi)(x)  =  u_{cell(x), cell(gamma^-1 x)} ( xi(gamma^-1 x) )
    b_gamma(x)       =  t_{halo(x)}(x)(s(x)) - t_{halo(x)}(gamma^-1 x)(s(gamma^-1 x))

and validates, for all applicable pairs below the scale R:
the representation identity pi_{g2 g1} = pi_{g2} pi_{g1}, the cocycle
identity b_{g2 g1} = pi_{g2} b_{g1} + b_{g2}, isometry of pi, the
transition cocycle condition on halo triples, and the norm envelope of
||b_gamma||_p against the empirical distance-control envelope.

Everything is exact on exact models; float models additionally budget for
their recorded snapping statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cocycles import Cocycle
from .errors import ContractError, PropertyViolationError
from .fibred import (
    DistanceControlReport,
    FibredChart,
    Section,
    TransitionIsometry,
    build_chart,
    build_partition,
    build_section,
    halo_points,
    trivialized_section_value,
    verify_distance_control,
    verify_transition,
)
from .groups import GroupElement, ball_with_length
from .spaces import SpaceModel
from .vectors import combine_norm_pow, v_add, v_norm_pow, v_sub
from .warp import WarpedDistanceMatrix, free_orbit_law

HALO_REACH_FACTOR = 10
HALO_SCALE_FACTOR = 21   # halo diameter bound: R + 2*10R


def _h_sub(ambient, u, v):
    return ambient.sub(u, v)


def _h_add(ambient, u, v):
    if isinstance(u, tuple):
        return tuple(a + b for a, b in zip(u, v))
    return u + v


def _h_zero_like(ambient, u):
    if isinstance(u, tuple):
        return tuple(0 * a for a in u)
    return np.zeros_like(u)


def _h_equal(u, v, tol):
    if isinstance(u, tuple):
        if tol == 0:
            return u == v
        return all(abs(float(a - b)) <= tol for a, b in zip(u, v))
    return bool(np.max(np.abs(np.asarray(u) - np.asarray(v))) <= tol)


@dataclass
class PointFunction:
    """A finitely supported map from net indices to fiber vectors (xi, eta)."""

    values: dict

    def support(self):
        return self.values.keys()


@dataclass
class LocalActionReport:
    radius: object
    level: object
    representation_identity: dict
    cocycle_identity: dict
    isometry: dict
    transition_cocycle: dict
    norm_envelope: dict
    halo_control: DistanceControlReport
    orbit_law_holds: bool

    def all_pass(self) -> bool:
        return (self.representation_identity["ok"] and
                self.cocycle_identity["ok"] and self.isometry["ok"] and
                self.transition_cocycle["ok"] and self.norm_envelope["ok"])


class RLocalAction:
    def __init__(self, model: SpaceModel, warped: WarpedDistanceMatrix,
                 radius, cocycle: Cocycle, p=2, halo_pair_cap: int = 4000):
        self.model = model
        self.warped = warped
        self.radius = radius
        self.p = p
        self.cocycle = cocycle
        self.section = build_section(model, cocycle)
        self.partition = build_partition(model, warped, radius)
        self.exact = model.exact and p == int(p)
        self._halo_pair_cap = halo_pair_cap
        self.halo_charts: list[FibredChart] = []
        for ci, cell in enumerate(self.partition.cells):
            pts = halo_points(warped, cell, HALO_REACH_FACTOR * radius)
            self.halo_charts.append(
                build_chart(model, pts, self.partition.centers[ci],
                            HALO_SCALE_FACTOR * radius, warped))
        self._transitions: dict[tuple[int, int], TransitionIsometry] = {}
        self._b_cache: dict[tuple, list] = {}
        # the open ball: elements of word length strictly below the scale
        self.ball = [g for g in ball_with_length(model.group(),
                                                 int(math.ceil(radius)))
                     if len(g.word) < radius]

    # ------------------------------------------------------------------
    def transition(self, ci: int, cj: int) -> TransitionIsometry:
        """u_{C_i, C_j}: linear part of the halo-chart change of frame."""
        if ci == cj:
            grp = self.model.group()
            return TransitionIsometry(grp.identity(), grp.identity())
        key = (ci, cj)
        iso = self._transitions.get(key)
        if iso is None:
            rep = verify_transition(self.model, self.halo_charts[ci],
                                    self.halo_charts[cj])
            if not rep.consistent:
                raise PropertyViolationError(
                    "transition isometry differs across shared points",
                    witness=(ci, cj, rep.witnesses[:3]))
            iso = rep.isometry
            self._transitions[key] = iso
        return iso

    def _apply_linear(self, iso: TransitionIsometry, vec):
        xi, eta = vec
        xi_out = self.cocycle.apply_pi(iso.e_word, xi)
        eta_out = self.model.ambient.apply_word(iso.h_word.word, eta)
        return xi_out, eta_out

    # ------------------------------------------------------------------
    def pi_apply(self, gamma: GroupElement, func: PointFunction) -> PointFunction:
        grp = self.model.group()
        perm = self.model.word_permutation(gamma.word)
        out = {}
        for y, vec in func.values.items():
            x = int(perm[y])
            iso = self.transition(self.partition.cell_of[x],
                                  self.partition.cell_of[y])
            out[x] = self._apply_linear(iso, vec)
        return PointFunction(out)

    def b_value(self, gamma: GroupElement) -> PointFunction:
        cached = self._b_cache.get(gamma.word)
        if cached is not None:
            return PointFunction(dict(cached))
        grp = self.model.group()
        inv_perm = self.model.word_permutation(grp.inv(gamma).word)
        amb = self.model.ambient
        out = {}
        for x in range(self.model.n):
            chart = self.halo_charts[self.partition.cell_of[x]]
            y = int(inv_perm[x])
            if y not in chart.z_of:
                raise PropertyViolationError(
                    "halo chart does not cover the moved point",
                    witness=(x, y, gamma.word))
            tx = trivialized_section_value(chart, self.model, self.section, x)
            ty = trivialized_section_value(chart, self.model, self.section, y)
            out[x] = (v_sub(tx[0], ty[0]), _h_sub(amb, tx[1], ty[1]))
        self._b_cache[gamma.word] = dict(out)
        return PointFunction(out)

    def alpha_apply(self, gamma: GroupElement, func: PointFunction) -> PointFunction:
        moved = self.pi_apply(gamma, func)
        b = self.b_value(gamma)
        out = dict(b.values)
        amb = self.model.ambient
        for x, vec in moved.values.items():
            cur = out.get(x)
            if cur is None:
                out[x] = vec
            else:
                out[x] = (v_add(cur[0], vec[0]), _h_add(amb, cur[1], vec[1]))
        return PointFunction(out)

    def function_norm_pow(self, func: PointFunction):
        total = Fraction(0) if self.exact else 0.0
        amb = self.model.ambient
        for vec in func.values.values():
            total += combine_norm_pow(v_norm_pow(vec[0], self.p),
                                      amb.norm_pow(vec[1], self.p))
        if self.exact:
            return total / self.model.n
        return total / self.model.n

    # ------------------------------------------------------------------
    def validate(self, seed: int = 0, random_vectors: int = 50,
                 probe_keys: int = 4) -> LocalActionReport:
        grp = self.model.group()
        tol = 0.0 if self.exact else 1e-9
        rep_id = self._check_representation_identity(tol)
        coc_id = self._check_cocycle_identity(tol)
        iso = self._check_isometry(seed, random_vectors, probe_keys, tol)
        tri = self._check_transition_cocycle()
        halo_control = verify_distance_control(
            self.model, self.warped, self.halo_charts, self.section, self.p,
            pair_cap=self._halo_pair_cap)
        law = free_orbit_law(self.model, self.warped, int(self.radius))
        envelope = self._check_norm_envelope(halo_control, law.holds)
        return LocalActionReport(self.radius, self.model.t, rep_id, coc_id,
                                 iso, tri, envelope, halo_control, law.holds)

    def _applicable_pairs(self):
        grp = self.model.group()
        for g2 in self.ball:
            for g1 in self.ball:
                prod = grp.mul(g2, g1)
                if len(prod.word) < self.radius:
                    yield g2, g1, prod

    def _check_representation_identity(self, tol) -> dict:
        """pi_{g2 g1} = pi_{g2} pi_{g1} via the per-point transition words."""
        grp = self.model.group()
        bad = []
        checked = 0
        for g2, g1, prod in self._applicable_pairs():
            p2 = self.model.word_permutation(grp.inv(g2).word)
            p21 = self.model.word_permutation(grp.inv(prod).word)
            for x in range(self.model.n):
                mid = int(p2[x])
                src = int(p21[x])
                cx, cm, cs = (self.partition.cell_of[x],
                              self.partition.cell_of[mid],
                              self.partition.cell_of[src])
                u_outer = self.transition(cx, cm)
                u_inner = self.transition(cm, cs)
                u_direct = self.transition(cx, cs)
                e_comp = grp.mul(u_outer.e_word, u_inner.e_word)
                h_comp = grp.mul(u_outer.h_word, u_inner.h_word)
                checked += 1
                if e_comp.word != u_direct.e_word.word or \
                        h_comp.word != u_direct.h_word.word:
                    bad.append((g2.word, g1.word, x))
        return {"ok": not bad, "checked": checked, "violations": bad[:5]}

    def _check_cocycle_identity(self, tol) -> dict:
        """b_{g2 g1} = pi_{g2} b_{g1} + b_{g2}, exact per point."""
        amb = self.model.ambient
        bad = []
        checked = 0
        for g2, g1, prod in self._applicable_pairs():
            lhs = self.b_value(prod)
            rhs = self.alpha_apply(g2, self.b_value(g1))
            for x in range(self.model.n):
                checked += 1
                le, lh = lhs.values[x]
                re_, rh = rhs.values[x]
                e_ok = v_sub(le, re_) == {} if tol == 0 else \
                    float(v_norm_pow(v_sub(le, re_), 2)) <= tol ** 2
                if not (e_ok and _h_equal(lh, rh, tol)):
                    bad.append((g2.word, g1.word,
                                self.partition.cell_of[x], x))
        return {"ok": not bad, "checked": checked, "violations": bad[:5]}

    def _check_isometry(self, seed, draws, probe_keys, tol) -> dict:
        rng = np.random.default_rng(seed)
        amb = self.model.ambient
        keys = []
        for g in self.ball:
            for k in self.cocycle.value(g):
                if k not in keys:
                    keys.append(k)
            if len(keys) >= probe_keys:
                break
        if not keys:
            keys = list(self.cocycle.value(
                self.model.group().generators()[0]).keys())
        h_dim = len(amb.coords(0))
        bad = []
        checked = 0
        for _ in range(draws):
            pts = rng.integers(0, self.model.n, size=3)
            vals = {}
            for ptx in pts:
                e = {keys[int(rng.integers(0, len(keys)))]: int(rng.integers(1, 4))}
                h = list(_h_zero_like(amb, amb.coords(0)))
                slot = int(rng.integers(0, h_dim))
                h[slot] = (Fraction(int(rng.integers(1, 5)))
                           if isinstance(amb.coords(0), tuple)
                           else float(rng.integers(1, 5)))
                vals[int(ptx)] = (e, tuple(h) if isinstance(amb.coords(0), tuple)
                                  else np.array(h))
            func = PointFunction(vals)
            base = self.function_norm_pow(func)
            for g in self.ball:
                moved = self.function_norm_pow(self.pi_apply(g, func))
                checked += 1
                if self.exact:
                    if moved != base:
                        bad.append((g.word, float(moved), float(base)))
                elif abs(float(moved) - float(base)) > tol * max(1.0, float(base)):
                    bad.append((g.word, float(moved), float(base)))
        return {"ok": not bad, "checked": checked, "violations": bad[:5]}

    def _check_transition_cocycle(self) -> dict:
        """u_{C'', C} = u_{C'', C'} u_{C', C} on triple-intersecting halos."""
        grp = self.model.group()
        ncells = len(self.partition.cells)
        halos = [set(ch.points) for ch in self.halo_charts]
        bad = []
        checked = 0
        exhaustive = ncells <= 24
        triples = []
        if exhaustive:
            for a in range(ncells):
                for b_ in range(ncells):
                    for c in range(ncells):
                        triples.append((a, b_, c))
        else:
            for g2, g1, prod in self._applicable_pairs():
                p2 = self.model.word_permutation(grp.inv(g2).word)
                p21 = self.model.word_permutation(grp.inv(prod).word)
                for x in range(0, self.model.n,
                               max(1, self.model.n // 64)):
                    triples.append((self.partition.cell_of[x],
                                    self.partition.cell_of[int(p2[x])],
                                    self.partition.cell_of[int(p21[x])]))
        for a, b_, c in set(triples):
            if not (halos[a] & halos[b_] and halos[b_] & halos[c]
                    and halos[a] & halos[c] and halos[a] & halos[b_] & halos[c]):
                continue
            checked += 1
            u_ab = self.transition(a, b_)
            u_bc = self.transition(b_, c)
            u_ac = self.transition(a, c)
            if grp.mul(u_ab.e_word, u_bc.e_word).word != u_ac.e_word.word or \
                    grp.mul(u_ab.h_word, u_bc.h_word).word != u_ac.h_word.word:
                bad.append((a, b_, c))
        return {"ok": not bad, "checked": checked, "violations": bad[:5]}

    def _check_norm_envelope(self, halo_control: DistanceControlReport,
                             law_holds: bool) -> dict:
        """rho_1(|gamma|) <= ||b_gamma||_p <= rho_2(|gamma|) against the
        empirical halo-chart envelope at distance |gamma|.

        The pointwise values of b_gamma are themselves chart pairs at that
        distance, so they are merged into the bucket before the containment
        test; on exact models the halo report enumerates every pair and the
        merge is a no-op.
        """
        buckets = {b.distance: [b.min_embedded, b.max_embedded]
                   for b in halo_control.envelope}
        amb = self.model.ambient
        slack = 0.0 if self.exact else 1e-9
        bad = []
        rows = []
        for g in self.ball:
            bfun = self.b_value(g)
            if not g.word:
                norm0 = float(self.function_norm_pow(bfun))
                rows.append({"gamma": str(g), "norm": 0.0})
                if norm0 > slack:
                    bad.append(("identity has nonzero local cocycle", norm0))
                continue
            if not law_holds:
                continue
            key = round(float(len(g.word)), 9)
            bucket = buckets.setdefault(key, [math.inf, -math.inf])
            for vec in bfun.values.values():
                pw = combine_norm_pow(v_norm_pow(vec[0], self.p),
                                      amb.norm_pow(vec[1], self.p))
                val = float(pw) ** (1.0 / self.p) if pw else 0.0
                bucket[0] = min(bucket[0], val)
                bucket[1] = max(bucket[1], val)
            norm_pow = self.function_norm_pow(bfun)
            norm = float(norm_pow) ** (1.0 / self.p)
            rows.append({"gamma": str(g), "norm": norm})
            if norm < bucket[0] - slack - 1e-12 or \
                    norm > bucket[1] + slack + 1e-12:
                bad.append((g.word, norm, tuple(bucket)))
        return {"ok": not bad, "rows": rows, "violations": bad[:5]}


def build_rlocal_action(model: SpaceModel, warped: WarpedDistanceMatrix,
                        radius, cocycle: Cocycle, p=2,
                        halo_pair_cap: int = 4000) -> RLocalAction:
    return RLocalAction(model, warped, radius, cocycle, p,
                        halo_pair_cap=halo_pair_cap)


# ---------------------------------------------------------------------------
# scale-local conditionally negative definite kernel

@dataclass
class CndReport:
    radius: object
    table: list                      # (gamma, h value) in shortlex order
    quadratic_forms: list[float]
    tolerance: float
    ok: bool
    envelope_consistent: bool


def cnd_kernel(action: RLocalAction, draws: int = 100, seed: int = 0,
               tolerance: float = 1e-9, tuple_radius=None,
               halo_control: DistanceControlReport | None = None) -> CndReport:
    """h(gamma) = mean_x ||t(x)s(x) - t(gamma x)s(gamma x)||^2 for |gamma| <= R,
    plus the mean-zero quadratic-form test over tuples from B(tuple_radius)
    (default R/2; tuple products must stay inside the tabulated ball)."""
    if action.p != 2:
        raise ContractError("the kernel construction requires p = 2")
    model = action.model
    grp = model.group()
    amb = model.ambient
    R = action.radius
    table = {}
    for g in ball_with_length(grp, int(R)):
        perm = model.word_permutation(g.word)
        total = Fraction(0) if action.exact else 0.0
        for x in range(model.n):
            y = int(perm[x])
            chart = action.halo_charts[action.partition.cell_of[x]]
            if y not in chart.z_of:
                raise PropertyViolationError(
                    "halo chart does not cover gamma x", witness=(x, g.word))
            tx = trivialized_section_value(chart, model, action.section, x)
            ty = trivialized_section_value(chart, model, action.section, y)
            total += combine_norm_pow(
                v_norm_pow(v_sub(tx[0], ty[0]), 2),
                amb.norm_pow(_h_sub(amb, tx[1], ty[1]), 2))
        table[g.word] = total / model.n

    if tuple_radius is None:
        tuple_radius = R / 2
    half_ball = [g for g in ball_with_length(grp, int(math.ceil(tuple_radius)))
                 if len(g.word) < tuple_radius]
    for gi in half_ball:
        for gj in half_ball:
            diff = grp.mul(gi, grp.inv(gj))
            if diff.word not in table:
                raise ContractError(
                    f"tuple radius {tuple_radius} produces differences outside "
                    f"the tabulated ball of radius {R}")
    rng = np.random.default_rng(seed)
    forms = []
    for _ in range(draws):
        c = rng.normal(size=len(half_ball))
        c -= c.mean()
        form = 0.0
        for i, gi in enumerate(half_ball):
            for j, gj in enumerate(half_ball):
                diff = grp.mul(gi, grp.inv(gj))
                form += c[i] * c[j] * float(table[diff.word])
        forms.append(form)
    ok = all(f <= tolerance for f in forms) and \
        float(table[grp.identity().word]) == 0.0

    # properness consistency: h(gamma) sits at or above the squared lower
    # envelope of the distance-control report at distance |gamma|
    env_ok = True
    if halo_control is not None:
        env = dict(halo_control.lower_envelope())
        for w, val in table.items():
            if not w:
                continue
            lo = env.get(round(float(len(w)), 9))
            if lo is not None and float(val) < lo * lo - 1e-9:
                env_ok = False
    shortlex = sorted(table, key=grp.gens.shortlex_key)
    rows = [(GroupElement(w, grp.gid), table[w]) for w in shortlex]
    return CndReport(R, rows, forms, tolerance, ok, env_ok)


def cnd_table_csv(report: CndReport) -> str:
    lines = ["gamma,h"]
    for g, v in report.table:
        lines.append(f"\"{g}\",{float(v)!r}")
    return "\n".join(lines) + "\n"
