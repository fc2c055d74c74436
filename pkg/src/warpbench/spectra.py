"""Spectral gap of the generator-averaging walk on a net action.

The averaging operator puts weight 1/(2 |S|) on each arrow x -> s x over
the symmetric symbol set (|S| counts one symbol per involution pair);
an order-2 generator contributes a single arrow, and the missing mass
returns as a lazy self-loop so rows always sum to one.  The gap is
1 - lambda_2, with lambda_2 the largest eigenvalue on mean-zero functions
(by value, not magnitude), computed by deterministic power iteration with
deflation on the half-shifted operator (I + A)/2, which preserves the
eigenvalue order while making the spectrum nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PropertyViolationError, ValidationError
from .spaces import SpaceModel

ITERATION_CAP = 100_000
RESIDUAL_TOL = 1e-10


@dataclass
class AveragingOperator:
    n: int
    generator_count: int          # |S|: one per involution pair
    matrix: np.ndarray            # dense row-stochastic
    lazy_mass: float

    def symmetrized(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)


def averaging_operator(model: SpaceModel) -> AveragingOperator:
    grp = model.group()
    return averaging_from_permutations(
        [model.actions[s] for s in grp.gens.symbols],
        len(grp.gens.positive), model.n)


def averaging_from_permutations(perms, generator_count: int,
                                n: int) -> AveragingOperator:
    """A[x, sigma x] += 1/(2k) per distinct symbol arrow; lazy completion."""
    if n < 1:
        raise ValidationError("need at least one point")
    A = np.zeros((n, n))
    w = 1.0 / (2 * generator_count)
    for perm in perms:
        A[np.arange(n), np.asarray(perm)] += w
    deficit = 1.0 - A.sum(axis=1)
    A[np.arange(n), np.arange(n)] += deficit
    op = AveragingOperator(n, generator_count, A, float(np.max(deficit)))
    rows = A.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > 1e-12:
        raise PropertyViolationError("averaging operator is not row-stochastic")
    return op


@dataclass
class GapResult:
    gap: float
    second_eigenvalue: float
    iterations: int
    residual: float
    n: int

    def as_dict(self):
        return {"gap": self.gap, "second_eigenvalue": self.second_eigenvalue,
                "iterations": self.iterations, "residual": self.residual,
                "n": self.n}


def spectral_gap(op: AveragingOperator | SpaceModel, seed: int = 0,
                 residual_tol: float = RESIDUAL_TOL,
                 iteration_cap: int = ITERATION_CAP) -> GapResult:
    """1 - lambda_2 of the symmetrized walk on mean-zero functions."""
    if isinstance(op, SpaceModel):
        op = averaging_operator(op)
    n = op.n
    if n < 2:
        raise ValidationError("need at least two points")
    S = op.symmetrized()
    B = 0.5 * (S + np.eye(n))      # spectrum in [0, 1], order preserved

    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm < 1e-14:
        v = np.zeros(n)
        v[0], v[1] = 1.0, -1.0
        norm = np.linalg.norm(v)
    v /= norm
    mu = 0.0
    for it in range(1, iteration_cap + 1):
        w = B @ v
        w -= w.mean()              # deflation of the constant eigenvector
        mu = float(v @ w)
        res = float(np.linalg.norm(w - mu * v))
        nw = np.linalg.norm(w)
        if nw < 1e-17:
            # mean-zero spectrum collapsed to the bottom; lambda_2 = -1
            return GapResult(2.0, -1.0, it, 0.0, n)
        v = w / nw
        if res <= residual_tol:
            lam2 = 2.0 * mu - 1.0
            return GapResult(1.0 - lam2, lam2, it, res, n)
    raise PropertyViolationError(
        f"power iteration did not converge within {iteration_cap} steps",
        witness={"residual": res, "target": residual_tol})


@dataclass
class GapTrend:
    levels: list
    gaps: list[float]
    monotone_decreasing: bool
    max_increase: float
    ratio_last_first: float

    def as_rows(self):
        return [{"level": l, "gap": g} for l, g in zip(self.levels, self.gaps)]


def gap_trend(levels, operators, seed: int = 0) -> GapTrend:
    """Gap per level with monotone-fit statistics (>= 3 levels)."""
    levels = list(levels)
    if len(levels) < 3:
        raise ValidationError("need at least 3 levels for a trend")
    gaps = [spectral_gap(op, seed=seed).gap for op in operators]
    diffs = [b - a for a, b in zip(gaps, gaps[1:])]
    return GapTrend(levels, gaps, all(d <= 1e-12 for d in diffs),
                    max(diffs) if diffs else 0.0,
                    gaps[-1] / gaps[0] if gaps[0] else float("inf"))
