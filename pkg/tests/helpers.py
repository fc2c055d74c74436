"""Shared independent oracles for the test suite."""

from fractions import Fraction

import numpy as np

def brute_force_chain_oracle(model, max_hops=3, max_word=4):
    """Exhaustive enumeration of chains x0 -> ... -> xn with n <= max_hops
    and |gamma_i| <= max_word, in integer-scaled exact arithmetic.

    Cost of a chain: sum of |gamma_i| + t*d(gamma_i x_i, x_{i+1}).
    """
    n = model.n
    grp = model.group()
    tD = model.level_matrix()
    den = 1
    for row in tD:
        for v in row:
            den = den * v.denominator // np.gcd(den, v.denominator)
    D = [[int(v * den) for v in row] for row in tD]
    gammas = []
    for k in range(-max_word, max_word + 1):
        g = grp.from_exponents([k])
        gammas.append((abs(k) * den, model.word_permutation(g.word)))
    best = [[None] * n for _ in range(n)]
    for x0 in range(n):
        for cost0, p0 in gammas:
            y0 = int(p0[x0])
            # 1 hop
            for x1 in range(n):
                c1 = cost0 + D[y0][x1]
                cur = best[x0][x1]
                if cur is None or c1 < cur:
                    best[x0][x1] = c1
                # 2 hops
                for cost1, p1 in gammas:
                    y1 = int(p1[x1])
                    for x2 in range(n):
                        c2 = c1 + cost1 + D[y1][x2]
                        cur = best[x0][x2]
                        if cur is None or c2 < cur:
                            best[x0][x2] = c2
    # 3 hops: compose a 2-hop prefix with a 1-hop tail (still an explicit
    # enumeration of all chains, organized by the additive cost structure)
    two = [row[:] for row in best]
    one = [[None] * n for _ in range(n)]
    for x0 in range(n):
        for cost0, p0 in gammas:
            y0 = int(p0[x0])
            for x1 in range(n):
                c = cost0 + D[y0][x1]
                if one[x0][x1] is None or c < one[x0][x1]:
                    one[x0][x1] = c
    for x0 in range(n):
        for x2 in range(n):
            for x3 in range(n):
                c = two[x0][x2] + one[x2][x3]
                if best[x0][x3] is None or c < best[x0][x3]:
                    best[x0][x3] = c
    return [[Fraction(v, den) for v in row] for row in best]
