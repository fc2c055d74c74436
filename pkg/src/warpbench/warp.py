"""Warped metrics on net models, by two independent engines.

``warped_chain`` realizes the defining chain infimum as all-pairs shortest
paths on the graph whose edges are base-metric jumps (weight = level
distance) and single generator moves (weight 1).  ``warped_closed_form``
evaluates, for actions that are exact isometries of the net, the collapsed
formula  min over gamma of |gamma| + t*d(gamma x, x'),  truncated at the
word length where no longer word can improve any pair.  On exact models
both run over Fractions (internally integer-scaled) and must agree exactly;
on float models they agree within accumulated rounding plus the recorded
snapping budget.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import ContractError, PropertyViolationError, ValidationError
from .groups import GroupElement, ball_with_length
from .spaces import SpaceModel

COMPLETE_EDGE_THRESHOLD = 2000
FLOAT_TOL = 1e-9


@dataclass
class WarpedGraph:
    """Edge structure whose shortest paths realize the chain infimum."""

    n: int
    metric_edge_kind: str            # "complete" | f"knn:{k}"
    generator_symbols: tuple[str, ...]
    metric_edge_count: int
    generator_edge_count: int


@dataclass
class WarpedDistanceMatrix:
    t: object
    values: object                   # list[list[Fraction]] or ndarray
    engine: str                      # "chain" | "closed-form"
    truncation_radius: int | None
    exact: bool
    model_hash: str
    graph: WarpedGraph | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.values)

    def get(self, i: int, j: int):
        if self.exact:
            return self.values[i][j]
        return self.values[i, j]

    def to_float_array(self) -> np.ndarray:
        if self.exact:
            return np.array([[float(v) for v in row] for row in self.values])
        return np.asarray(self.values, dtype=float)


# ---------------------------------------------------------------------------
# exact (integer-scaled) Dijkstra

def _common_denominator(values) -> int:
    return reduce(lambda acc, v: acc * v.denominator // math.gcd(acc, v.denominator),
                  values, 1)


def _exact_level_ints(model: SpaceModel):
    tD = model.level_matrix()
    den = _common_denominator(
        [v for row in tD for v in row] + [Fraction(1)])
    ints = [[int(v * den) for v in row] for row in tD]
    return ints, den


def _exact_adjacency(model: SpaceModel, ints, den):
    n = model.n
    adj = [[] for _ in range(n)]
    for i in range(n):
        row = ints[i]
        for j in range(n):
            if i != j:
                adj[i].append((j, row[j]))
    one = den
    for s, perm in model.actions.items():
        for i in range(n):
            adj[i].append((int(perm[i]), one))
    return adj


def _dijkstra_int(adj, source: int, n: int):
    dist = [None] * n
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        d, i = heapq.heappop(heap)
        if dist[i] is not None and d > dist[i]:
            continue
        for j, w in adj[i]:
            nd = d + w
            if dist[j] is None or nd < dist[j]:
                dist[j] = nd
                heapq.heappush(heap, (nd, j))
    return dist


# ---------------------------------------------------------------------------
# chain engine

def _float_weight_graph(model: SpaceModel, knn: int | None):
    n = model.n
    tD = model.level_matrix()
    sym_count = 0
    if n <= COMPLETE_EDGE_THRESHOLD and knn is None:
        W = tD.copy()
        kind = "complete"
        metric_edges = n * (n - 1)
        for s, perm in model.actions.items():
            idx = np.arange(n)
            W[idx, perm] = np.minimum(W[idx, perm], 1.0)
            sym_count += n
        return W, kind, metric_edges, sym_count
    # k-nearest metric edges, with k doubled until the metric graph alone
    # is connected (so thresholding cannot disconnect chain paths)
    k = knn or max(4, int(math.ceil(2.0 * math.log(max(n, 2)))))
    while True:
        order = np.argsort(tD, axis=1, kind="stable")[:, 1:k + 1]
        rows = np.repeat(np.arange(n), k)
        cols = order.ravel()
        metric = csr_matrix((tD[rows, cols], (rows, cols)), shape=(n, n))
        ncomp, _ = connected_components(metric, directed=False)
        if ncomp == 1 or k >= n - 1:
            break
        k = min(n - 1, 2 * k)
    edges = {}
    coo = metric.tocoo()
    for i, j, w in zip(coo.row, coo.col, coo.data):
        edges[(int(i), int(j))] = float(w)
    for s, perm in model.actions.items():
        for i in range(n):
            key = (i, int(perm[i]))
            edges[key] = min(edges.get(key, np.inf), 1.0)
            sym_count += 1
    rows = np.fromiter((ij[0] for ij in edges), dtype=int, count=len(edges))
    cols = np.fromiter((ij[1] for ij in edges), dtype=int, count=len(edges))
    data = np.fromiter(edges.values(), dtype=float, count=len(edges))
    W = csr_matrix((data, (rows, cols)), shape=(n, n))
    return W, f"knn:{k}", int(metric.nnz), sym_count


def warped_chain(model: SpaceModel, knn: int | None = None) -> WarpedDistanceMatrix:
    """All-pairs shortest paths over metric + generator edges."""
    n = model.n
    if model.exact:
        ints, den = _exact_level_ints(model)
        adj = _exact_adjacency(model, ints, den)
        rows = []
        for src in range(n):
            dist = _dijkstra_int(adj, src, n)
            if any(d is None for d in dist):
                missing = [j for j, d in enumerate(dist) if d is None]
                raise ValidationError(
                    f"warped graph disconnected: nodes {missing[:8]} unreachable "
                    f"from {src}")
            rows.append([Fraction(d, den) for d in dist])
        graph = WarpedGraph(n, "complete", tuple(model.actions),
                            n * (n - 1), len(model.actions) * n)
        mat = WarpedDistanceMatrix(model.t, rows, "chain", None, True,
                                   model.content_hash, graph)
    else:
        W, kind, mcount, gcount = _float_weight_graph(model, knn)
        dense = dijkstra(W, directed=False, return_predecessors=False)
        if np.isinf(dense).any():
            comp_count, labels = connected_components(
                csr_matrix(W) if not isinstance(W, csr_matrix) else W,
                directed=False)
            sizes = np.bincount(labels).tolist()
            raise ValidationError(
                f"warped graph disconnected: {comp_count} components "
                f"with sizes {sizes}")
        graph = WarpedGraph(n, kind, tuple(model.actions), mcount, gcount)
        mat = WarpedDistanceMatrix(model.t, dense, "chain", None, False,
                                   model.content_hash, graph)
    assert_warped_axioms(model, mat)
    return mat


# ---------------------------------------------------------------------------
# closed-form engine

def _words_by_length(model: SpaceModel, max_len: int):
    """Ball elements grouped by word length (shortlex inside each length)."""
    grp = model.group()
    groups: dict[int, list[GroupElement]] = {}
    for g in ball_with_length(grp, max_len):
        groups.setdefault(len(g.word), []).append(g)
    return groups


def warped_closed_form(model: SpaceModel, max_word_length: int = 10_000
                       ) -> WarpedDistanceMatrix:
    """min over gamma of |gamma| + t*d(gamma x, x'), for isometric net actions."""
    if not model.isometric:
        raise ContractError(
            "closed-form warped metric requires an exactly isometric net "
            "action; use warped_chain for snapped approximate isometries")
    n = model.n
    if model.exact:
        ints, den = _exact_level_ints(model)
        best = [row[:] for row in ints]
        L = 0
        while True:
            L += 1
            cap = max(max(row) for row in best)
            if L * den >= cap or L > max_word_length:
                break
            for g in _layer(model, L):
                perm = model.word_permutation(g.word)
                add = L * den
                for i in range(n):
                    bi, ip = best[i], ints[int(perm[i])]
                    for j in range(n):
                        cand = add + ip[j]
                        if cand < bi[j]:
                            bi[j] = cand
        values = [[Fraction(v, den) for v in row] for row in best]
        mat = WarpedDistanceMatrix(model.t, values, "closed-form", L, True,
                                   model.content_hash)
    else:
        tD = model.level_matrix()
        best = tD.copy()
        L = 0
        while True:
            L += 1
            if L >= float(np.max(best)) or L > max_word_length:
                break
            for g in _layer(model, L):
                perm = model.word_permutation(g.word)
                np.minimum(best, L + tD[perm, :], out=best)
        mat = WarpedDistanceMatrix(model.t, best, "closed-form", L, False,
                                   model.content_hash)
    assert_warped_axioms(model, mat)
    return mat


def _layer(model: SpaceModel, length: int):
    grp = model.group()
    layer = []
    for g in ball_with_length(grp, length):
        if len(g.word) == length:
            layer.append(g)
    return layer


# ---------------------------------------------------------------------------
# axioms

def _exact_triangle_witness(V, n):
    """Triangle check over Fractions with a float prescreen.

    Slack triples (where the float margin cannot certify the inequality)
    are re-verified exactly; only a genuine exact violation is reported.
    """
    F = np.array([[float(v) for v in row] for row in V])
    margin = 1e-10 * max(1.0, float(F.max()))
    for k in range(n):
        gap = F[:, k:k + 1] + F[k:k + 1, :] - F
        bad = np.argwhere(gap < margin)
        for i, j in bad:
            if V[i][j] > V[i][k] + V[k][j]:
                return (int(i), int(j), int(k))
    return None


def assert_warped_axioms(model: SpaceModel, mat: WarpedDistanceMatrix,
                         tol: float = FLOAT_TOL, triangle_budget: int = 150):
    """delta <= t*d, delta(x, sx) <= 1, symmetry, zero diagonal, triangle."""
    n = mat.n
    if mat.exact:
        tD = model.level_matrix()
        V = mat.values
        for i in range(n):
            if V[i][i] != 0:
                raise PropertyViolationError("nonzero diagonal", witness=(i, i))
            for j in range(n):
                if V[i][j] != V[j][i]:
                    raise PropertyViolationError("asymmetry", witness=(i, j))
                if V[i][j] > tD[i][j]:
                    raise PropertyViolationError(
                        "warped exceeds base", witness=(i, j))
        for s, perm in model.actions.items():
            for i in range(n):
                if V[i][int(perm[i])] > 1:
                    raise PropertyViolationError(
                        "generator move costs more than 1", witness=(i, s))
        witness = _exact_triangle_witness(V, n)
        if witness is not None:
            raise PropertyViolationError(
                "triangle inequality fails", witness=witness)
    else:
        V = np.asarray(mat.values)
        tD = model.level_matrix()
        if np.max(np.abs(np.diag(V))) > tol:
            raise PropertyViolationError("nonzero diagonal")
        if np.max(np.abs(V - V.T)) > tol:
            raise PropertyViolationError("asymmetry")
        if np.max(V - tD) > tol:
            raise PropertyViolationError("warped exceeds base")
        idx = np.arange(n)
        for s, perm in model.actions.items():
            if np.max(V[idx, perm]) > 1 + tol:
                raise PropertyViolationError(
                    "generator move costs more than 1", witness=s)
        if n <= triangle_budget:
            for k in range(n):
                if np.max(V - (V[:, k:k + 1] + V[k:k + 1, :])) > tol:
                    raise PropertyViolationError(
                        "triangle inequality fails", witness=k)
        else:
            rng = np.random.default_rng(0)
            ii, jj, kk = (rng.integers(0, n, size=200_000) for _ in range(3))
            if np.max(V[ii, jj] - V[ii, kk] - V[kk, jj]) > tol:
                raise PropertyViolationError("triangle inequality fails (sampled)")


# ---------------------------------------------------------------------------
# maximality among admissible metrics

@dataclass
class AdmissibilityReport:
    ok: bool
    dominated: bool | None
    reason: str
    witness: tuple | None = None


def greatest_metric_check(model: SpaceModel, candidate,
                          reference: WarpedDistanceMatrix | None = None,
                          tol: float = FLOAT_TOL) -> AdmissibilityReport:
    """Validate candidate admissibility, then test candidate <= warped chain.

    ``candidate`` is a square matrix (list-of-lists of Fractions or ndarray).
    Any admissible metric (below the base metric, generator moves cost at
    most 1, triangle) must lie below the warped metric entrywise; a witness
    pair is reported otherwise.
    """
    n = model.n
    exact = model.exact and not isinstance(candidate, np.ndarray)
    slack = 0.0 if exact else tol
    if exact:
        C = np.array([[float(v) for v in row] for row in candidate])
        tD_exact = model.level_matrix()
        get = lambda i, j: candidate[i][j]
        base_exact = lambda i, j: tD_exact[i][j]
    else:
        C = np.asarray(candidate, dtype=float)
        get = lambda i, j: float(C[i, j])
    tD = np.asarray(model.level_matrix(), dtype=float) if not model.exact else \
        np.array([[float(v) for v in model.level_matrix()[i]] for i in range(n)])

    def confirm(kind, witness, float_holds):
        # float prescreen found a violation; on exact models re-verify exactly
        if not exact:
            return not float_holds
        i, j = witness[:2]
        if kind == "diag":
            return get(i, i) != 0
        if kind == "negative":
            return get(i, j) < 0
        if kind == "asym":
            return get(i, j) != get(j, i)
        if kind == "base":
            return get(i, j) > base_exact(i, j)
        return True

    margin = slack if not exact else 1e-10 * max(1.0, float(C.max(initial=1.0)))
    d = np.abs(np.diag(C))
    if d.max(initial=0.0) > slack:
        i = int(np.argmax(d))
        if confirm("diag", (i, i), d[i] <= slack):
            return AdmissibilityReport(False, None, "nonzero diagonal", (i, i))
    if C.min(initial=0.0) < -slack:
        i, j = np.unravel_index(int(np.argmin(C)), C.shape)
        if confirm("negative", (int(i), int(j)), False):
            return AdmissibilityReport(False, None, "negative entry",
                                       (int(i), int(j)))
    A = np.abs(C - C.T)
    if A.max(initial=0.0) > margin or (exact and A.max(initial=0.0) > 0):
        i, j = np.unravel_index(int(np.argmax(A)), A.shape)
        if confirm("asym", (int(i), int(j)), False):
            return AdmissibilityReport(False, None, "asymmetric",
                                       (int(i), int(j)))
    over = C - tD
    if over.max(initial=0.0) > margin:
        cand = np.argwhere(over > (0 if not exact else -margin))
        for i, j in cand:
            if confirm("base", (int(i), int(j)), over[i, j] <= slack):
                return AdmissibilityReport(False, None, "exceeds base metric",
                                           (int(i), int(j)))
    idx = np.arange(n)
    for s, perm in model.actions.items():
        moved = C[idx, perm]
        if moved.max(initial=0.0) > 1 + margin:
            i = int(np.argmax(moved))
            if not exact or get(i, int(perm[i])) > 1:
                return AdmissibilityReport(False, None,
                                           "generator move exceeds 1", (i, s))
    # triangle: float prescreen, exact confirmation for slack triples
    for k in range(n):
        gap = C[:, k:k + 1] + C[k:k + 1, :] - C
        if gap.min() < margin:
            bad = np.argwhere(gap < margin)
            for i, j in bad:
                if exact:
                    if get(i, j) > get(i, k) + get(k, j):
                        return AdmissibilityReport(
                            False, None, "triangle fails",
                            (int(i), int(j), int(k)))
                elif gap[i, j] < -slack:
                    return AdmissibilityReport(
                        False, None, "triangle fails", (int(i), int(j), int(k)))
    ref = reference or warped_chain(model)
    R = ref.to_float_array()
    over = C - R
    if over.max(initial=0.0) > margin:
        bad = np.argwhere(over > (slack if not exact else -margin))
        for i, j in bad:
            if exact:
                if get(i, j) > ref.get(int(i), int(j)):
                    return AdmissibilityReport(
                        True, False, "candidate exceeds warped metric",
                        (int(i), int(j)))
            else:
                return AdmissibilityReport(
                    True, False, "candidate exceeds warped metric",
                    (int(i), int(j)))
    return AdmissibilityReport(True, True, "admissible and dominated")


# ---------------------------------------------------------------------------
# level-shift identity

@dataclass
class LevelShiftReport:
    t: object
    s: object
    max_deviation: object
    exact: bool
    witness: tuple | None = None


def level_shift_check(model: SpaceModel, s, knn: int | None = None) -> LevelShiftReport:
    """Compare the two-level warped distance with s + delta_t on the base.

    Builds one graph over two copies of the net, at levels t and t+s, with
    in-level metric and generator edges plus cross-level cone edges, and
    checks delta((y,t),(y',t+s)) = s + delta_t(y,y') pairwise.
    """
    if s < 0:
        raise ValidationError("level shift s must be >= 0")
    n = model.n
    t = model.t
    base_mat = warped_chain(model, knn=knn)
    if model.exact:
        s = Fraction(s)
        tD = model.level_matrix()
        upper = [[(t + s) * model.base_dist(i, j) for j in range(n)]
                 for i in range(n)]
        cross = [[s + tD[i][j] for j in range(n)] for i in range(n)]
        den = _common_denominator(
            [v for row in tD for v in row] +
            [v for row in upper for v in row] +
            [v for row in cross for v in row] + [Fraction(1)])
        N = 2 * n
        adj = [[] for _ in range(N)]
        for i in range(n):
            for j in range(n):
                if i != j:
                    adj[i].append((j, int(tD[i][j] * den)))
                    adj[n + i].append((n + j, int(upper[i][j] * den)))
                adj[i].append((n + j, int(cross[i][j] * den)))
                adj[n + j].append((i, int(cross[i][j] * den)))
        for sym, perm in model.actions.items():
            for i in range(n):
                adj[i].append((int(perm[i]), den))
                adj[n + i].append((n + int(perm[i]), den))
        worst = Fraction(0)
        witness = None
        for src in range(n):
            dist = _dijkstra_int(adj, src, N)
            for j in range(n):
                got = Fraction(dist[n + j], den)
                want = s + base_mat.values[src][j]
                dev = abs(got - want)
                if dev > worst:
                    worst, witness = dev, (src, j)
        return LevelShiftReport(t, s, worst, True, witness)

    tD = model.level_matrix()
    upper = (float(t) + float(s)) / float(t) * tD
    cross = float(s) + tD
    N = 2 * n
    # assemble as sparse so the zero-weight cross edges at s = 0 survive
    edges = {}

    def add(i, j, w):
        key = (i, j)
        edges[key] = min(edges.get(key, np.inf), w)

    for i in range(n):
        for j in range(n):
            if i != j:
                add(i, j, tD[i, j])
                add(n + i, n + j, upper[i, j])
            add(i, n + j, cross[i, j])
            add(n + j, i, cross[i, j])
    for sym, perm in model.actions.items():
        for i in range(n):
            add(i, int(perm[i]), 1.0)
            add(n + i, n + int(perm[i]), 1.0)
    rows = np.fromiter((ij[0] for ij in edges), dtype=int, count=len(edges))
    cols = np.fromiter((ij[1] for ij in edges), dtype=int, count=len(edges))
    data = np.fromiter(edges.values(), dtype=float, count=len(edges))
    W = csr_matrix((data, (rows, cols)), shape=(N, N))
    dense = dijkstra(W, directed=False, indices=np.arange(n))
    got = dense[:, n:]
    want = float(s) + base_mat.to_float_array()
    dev = np.abs(got - want)
    i, j = np.unravel_index(np.argmax(dev), dev.shape)
    return LevelShiftReport(t, s, float(dev[i, j]), False, (int(i), int(j)))


# ---------------------------------------------------------------------------
# free-orbit distance law and validity scan

@dataclass
class OrbitLawReport:
    radius: int
    holds: bool
    max_deviation: object
    witness: tuple | None
    per_length: dict


def free_orbit_law(model: SpaceModel, mat: WarpedDistanceMatrix, radius: int,
                   tol: float = FLOAT_TOL) -> OrbitLawReport:
    """Check delta(x, gamma x) = |gamma| for all x and |gamma| < radius."""
    grp = model.group()
    worst = Fraction(0) if mat.exact else 0.0
    witness = None
    per_length: dict[int, float] = {}
    for g in ball_with_length(grp, radius - 1):
        L = len(g.word)
        perm = model.word_permutation(g.word)
        layer_worst = worst * 0
        for i in range(model.n):
            dev = abs(mat.get(i, int(perm[i])) - L)
            if dev > layer_worst:
                layer_worst = dev
            if dev > worst:
                worst, witness = dev, (i, g.word)
        per_length[L] = max(per_length.get(L, 0.0), float(layer_worst))
    holds = worst == 0 if mat.exact else float(worst) <= tol
    return OrbitLawReport(radius, holds, worst, witness, per_length)


def scan_validity_threshold(builder, radius: int, levels) -> dict:
    """First level in ``levels`` where the free-orbit law holds; per-level report."""
    per_level = []
    threshold = None
    for t in levels:
        model = builder(t)
        mat = warped_chain(model)
        rep = free_orbit_law(model, mat, radius)
        per_level.append({"t": t, "holds": rep.holds,
                          "max_deviation": float(rep.max_deviation)})
        if rep.holds and threshold is None:
            threshold = t
    return {"radius": radius, "threshold": threshold, "levels": per_level}


# ---------------------------------------------------------------------------
# emission

def matrix_to_csv(mat: WarpedDistanceMatrix) -> str:
    n = mat.n
    lines = ["node," + ",".join(str(j) for j in range(n))]
    for i in range(n):
        if mat.exact:
            row = ",".join(str(mat.values[i][j]) for j in range(n))
        else:
            row = ",".join(repr(float(v)) for v in mat.values[i])
        lines.append(f"{i},{row}")
    return "\n".join(lines) + "\n"


def matrix_summary(mat: WarpedDistanceMatrix) -> dict:
    arr = mat.to_float_array()
    off = arr[~np.eye(mat.n, dtype=bool)] if mat.n > 1 else np.zeros(1)
    return {
        "engine": mat.engine,
        "n": mat.n,
        "t": str(mat.t),
        "exact": mat.exact,
        "truncation_radius": mat.truncation_radius,
        "min_offdiag": float(off.min()),
        "max": float(arr.max()),
        "mean_offdiag": float(off.mean()),
        "model_hash": mat.model_hash,
    }
