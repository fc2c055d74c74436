"""Embedding-distortion bounds for finite metric spaces.

Lower bound (p = 2), certified: let A be the symmetrized averaging operator
with uniform stationary measure and spectral gap g = 1 - lambda_2 on
mean-zero functions.  For any embedding f with
delta(x,y) <= ||f(x)-f(y)|| <= D delta(x,y),

    Var(f)              = (1/2n^2) sum_{x,y} ||f(x)-f(y)||^2
    <Dirichlet form>    = (1/2n)   sum_{x,y} A[x,y] ||f(x)-f(y)||^2

and the Poincare inequality Var(f) <= (1/g) * Dirichlet(f) applied
coordinatewise gives

    (1/n^2) sum delta^2  <=  (D^2/g) * (1/n) sum A delta^2,

hence D >= sqrt( g * mean_all(delta^2) / mean_edge(delta^2) ), where
mean_all is the plain all-pairs average and mean_edge the A-weighted edge
average.  Distortion is always >= 1, so the bound is clamped below by 1.

Upper bound: multi-start smooth-max minimization of |log ratio| stress with
temperature annealing; the reported distortion is recomputed exactly from
the final coordinates (max ratio / min ratio over pairs), never from the
surrogate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ContractError, ValidationError
from .spectra import AveragingOperator, spectral_gap

DEFAULT_DIM_CAP = 16
ANNEAL_SCHEDULE = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003)


def _as_float_matrix(metric) -> np.ndarray:
    if isinstance(metric, np.ndarray):
        return metric.astype(float)
    return np.array([[float(v) for v in row] for row in metric])


@dataclass
class LowerBoundResult:
    bound: float
    informative: bool
    gap: float
    mean_all: float
    mean_edge: float
    reason: str = ""


def distortion_lower_bound(metric, operator: AveragingOperator,
                           p=2, seed: int = 0) -> LowerBoundResult:
    if p != 2:
        raise ContractError("the spectral lower bound is derived for p = 2")
    D = _as_float_matrix(metric)
    n = D.shape[0]
    if operator.n != n:
        raise ValidationError("metric and operator sizes differ")
    res = spectral_gap(operator, seed=seed)
    if res.gap <= 0:
        return LowerBoundResult(1.0, False, res.gap, 0.0, 0.0,
                                "uninformative: nonpositive spectral gap")
    sq = D * D
    mean_all = float(sq.mean())
    mean_edge = float((operator.symmetrized() * sq).sum() / n)
    if mean_edge <= 0.0:
        # all generator moves have distance zero; with a metric this forces
        # a single repeated point, and every embedding is isometric
        return LowerBoundResult(1.0, True, res.gap, mean_all, mean_edge,
                                "degenerate metric: bound 1")
    return LowerBoundResult(max(1.0, float(np.sqrt(res.gap * mean_all / mean_edge))),
                            True, res.gap, mean_all, mean_edge)


@dataclass
class UpperBoundResult:
    distortion: float
    coords: np.ndarray
    p: float
    dim: int
    best_seed: int
    starts: int

    def as_dict(self):
        return {"distortion": self.distortion, "p": self.p, "dim": self.dim,
                "best_seed": self.best_seed, "starts": self.starts}


def exact_distortion(coords: np.ndarray, metric, p=2) -> float:
    """max ratio / min ratio of embedded to given distances (scale free)."""
    D = _as_float_matrix(metric)
    n = D.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    mask = D[iu, ju] > 0
    if not mask.any():
        return 1.0
    diffs = coords[iu[mask]] - coords[ju[mask]]
    if p == 2:
        emb = np.sqrt((diffs ** 2).sum(axis=1))
    else:
        emb = (np.abs(diffs) ** p).sum(axis=1) ** (1.0 / p)
    ratios = emb / D[iu, ju][mask]
    lo = float(ratios.min())
    if lo <= 0.0:
        return float("inf")
    return float(ratios.max()) / lo


def _stress_and_grad(X, iu, ju, delta, p, tau):
    n_pairs = len(iu)
    V = X[iu] - X[ju]
    if p == 2:
        sq = (V ** 2).sum(axis=1)
        emb = np.sqrt(np.maximum(sq, 1e-300))
        dlog = V / np.maximum(sq, 1e-300)[:, None]
    else:
        ap = np.abs(V) ** p
        sp = np.maximum(ap.sum(axis=1), 1e-300)
        emb = sp ** (1.0 / p)
        dlog = (np.abs(V) ** (p - 1)) * np.sign(V) / sp[:, None]
    logr = np.log(emb) - np.log(delta)

    def lse(v):
        m = v.max()
        e = np.exp((v - m) / tau)
        s = e.sum()
        return m + tau * np.log(s), e / s

    f1, w1 = lse(logr)
    f2, w2 = lse(-logr)
    f = f1 + f2
    wpair = w1 - w2
    G = np.zeros_like(X)
    contrib = wpair[:, None] * dlog
    np.add.at(G, iu, contrib)
    np.add.at(G, ju, -contrib)
    return f, G


def _single_start(D, p, dim, seed, schedule):
    n = D.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    mask = D[iu, ju] > 0
    iu, ju = iu[mask], ju[mask]
    delta = D[iu, ju]
    if len(delta) == 0:
        return np.zeros((n, dim)), 1.0
    # distortion is scale free: normalize so rescaled inputs take the same path
    delta = delta / delta.mean()
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    for tau in schedule:
        res = minimize(
            lambda x: _stress_and_grad(x.reshape(n, dim), iu, ju, delta, p, tau),
            X.ravel(), jac=True, method="L-BFGS-B",
            options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-12})
        X = res.x.reshape(n, dim)
    return X, exact_distortion(X, D, p)


def distortion_upper_bound(metric, p=2, dim: int | None = None,
                           seeds=(0, 1, 2, 3), schedule=ANNEAL_SCHEDULE,
                           max_workers: int = 4) -> UpperBoundResult:
    """Best embedding found by annealed log-ratio stress minimization.

    Always returns the best start; the distortion reported is computed
    exactly from the returned coordinates.
    """
    if dim is not None and dim < 1:
        raise ValidationError("dim must be >= 1")
    if p < 1:
        raise ValidationError("p must be >= 1")
    D = _as_float_matrix(metric)
    n = D.shape[0]
    dim = dim if dim is not None else min(max(n - 1, 1), DEFAULT_DIM_CAP)
    results = {}
    with ThreadPoolExecutor(max_workers=min(max_workers, len(seeds))) as pool:
        futures = {s: pool.submit(_single_start, D, p, dim, s, schedule)
                   for s in seeds}
        for s, fut in futures.items():
            results[s] = fut.result()
    best_seed = min(results, key=lambda s: (results[s][1], s))
    X, dist = results[best_seed]
    return UpperBoundResult(dist, X, p, dim, best_seed, len(seeds))
