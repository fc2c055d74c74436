"""Warped-metric engines against independent oracles."""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from warpbench.errors import ContractError, PropertyViolationError
from warpbench.groups import ensure_group
from warpbench.spaces import SpaceModel, build_circle_model, build_profinite_model, build_su2_model
from warpbench.towers import power_tower
from helpers import brute_force_chain_oracle

from warpbench.warp import (
    free_orbit_law,
    greatest_metric_check,
    level_shift_check,
    matrix_summary,
    matrix_to_csv,
    scan_validity_threshold,
    warped_chain,
    warped_closed_form,
)


@pytest.fixture(scope="module")
def z8_t2():
    return build_profinite_model(power_tower(2, 3), depth=3, t=2)


@pytest.fixture(scope="module")
def z8_chain(z8_t2):
    return warped_chain(z8_t2)


def test_chain_zero_diagonal(z8_chain):
    for i in range(8):
        assert z8_chain.get(i, i) == 0


def test_chain_generator_moves_cost_at_most_one(z8_t2, z8_chain):
    for s, perm in z8_t2.actions.items():
        for i in range(8):
            assert z8_chain.get(i, int(perm[i])) <= 1


def test_chain_matches_bruteforce_enumeration_z8(z8_t2, z8_chain):
    oracle = brute_force_chain_oracle(z8_t2, max_hops=3, max_word=4)
    for i in range(8):
        for j in range(8):
            assert z8_chain.get(i, j) == oracle[i][j], (i, j)


def test_engines_agree_exactly_on_profinite():
    for N in (2, 3, 4):
        tower = power_tower(2, N)
        for t in (2, 4):
            model = build_profinite_model(tower, depth=N, t=t)
            chain = warped_chain(model)
            closed = warped_closed_form(model)
            assert chain.values == closed.values, (N, t)


def test_engines_agree_on_circle_within_snap():
    model = build_circle_model(t=20, epsilon=0.5)
    chain = warped_chain(model)
    closed = warped_closed_form(model)
    tol = max(1e-9, 2 * model.snap["max_displacement"])
    dev = np.max(np.abs(chain.to_float_array() - closed.to_float_array()))
    assert dev <= tol


def test_closed_form_rejects_snapped_su2():
    model = build_su2_model(t=4, target_size=60, seed=5)
    with pytest.raises(ContractError, match="warped_chain"):
        warped_closed_form(model)


def test_closed_form_generator_neighbor_is_one():
    model = build_profinite_model(power_tower(2, 4), depth=4, t=64)
    closed = warped_closed_form(model)
    s = model.group().gens.positive[0]
    perm = model.actions[s]
    for i in range(model.n):
        assert closed.get(i, int(perm[i])) == 1


def test_closed_form_recovers_base_when_moves_cost_more():
    # pairs with t*d < 1 are settled by gamma = e
    model = build_profinite_model(power_tower(2, 4), depth=4, t=1)
    closed = warped_closed_form(model)
    tD = model.level_matrix()
    for i in range(model.n):
        for j in range(model.n):
            if tD[i][j] < 1:
                assert closed.get(i, j) == tD[i][j]


def test_monotone_in_level_profinite():
    tower = power_tower(2, 4)
    m2 = build_profinite_model(tower, depth=4, t=2)
    m4 = build_profinite_model(tower, depth=4, t=4)
    c2, c4 = warped_chain(m2), warped_chain(m4)
    for i in range(16):
        for j in range(16):
            assert c2.get(i, j) <= c4.get(i, j)


def test_monotone_in_generators():
    # enlarging the acting generator set can only shrink warped distances
    tower = power_tower(2, 4)
    small = build_profinite_model(tower, depth=4, t=8)
    big_grp = ensure_group("free_abelian", gid="Z2-extra", rank=2)
    n = small.n
    plus1 = small.actions[small.group().gens.positive[0]]
    plus3 = np.array([(i + 3) % n for i in range(n)])
    minus1 = np.empty_like(plus1)
    minus1[plus1] = np.arange(n)
    minus3 = np.array([(i - 3) % n for i in range(n)])
    a, b = big_grp.gens.positive
    actions = {a: plus1, big_grp.gens.involution[a]: minus1,
               b: plus3, big_grp.gens.involution[b]: minus3}
    big = SpaceModel("profinite", big_grp.gid, small.points, small.base,
                     small.t, 0.0, actions, exact=True, isometric=True,
                     snap=small.snap, params={**small.params, "extra": 3})
    c_small, c_big = warped_chain(small), warped_chain(big)
    assert any(c_big.get(i, j) < c_small.get(i, j)
               for i in range(n) for j in range(n))
    for i in range(n):
        for j in range(n):
            assert c_big.get(i, j) <= c_small.get(i, j)


def test_level_shift_zero_is_exact(z8_t2):
    rep = level_shift_check(z8_t2, 0)
    assert rep.max_deviation == 0


def test_level_shift_profinite_exact():
    model = build_profinite_model(power_tower(2, 3), depth=3, t=4)
    rep = level_shift_check(model, 2)
    assert rep.exact and rep.max_deviation == 0


def test_level_shift_circle_within_tolerance():
    model = build_circle_model(t=20, epsilon=0.5)
    rep = level_shift_check(model, 5)
    assert rep.max_deviation <= max(1e-9, model.epsilon)


def test_greatest_metric_reflexive(z8_t2, z8_chain):
    rep = greatest_metric_check(z8_t2, z8_chain.values, reference=z8_chain)
    assert rep.ok and rep.dominated


def test_greatest_metric_zero_matrix(z8_t2, z8_chain):
    zero = [[Fraction(0)] * 8 for _ in range(8)]
    rep = greatest_metric_check(z8_t2, zero, reference=z8_chain)
    assert rep.ok and rep.dominated


def test_greatest_metric_base_metric_witness(z8_t2, z8_chain):
    # at t = 2 the generator moves points to base distance 2 > 1, so the base
    # metric is not admissible; a witness pair is returned
    rep = greatest_metric_check(z8_t2, z8_t2.level_matrix(), reference=z8_chain)
    assert not rep.ok
    assert rep.reason == "generator move exceeds 1"
    assert rep.witness is not None


def test_greatest_metric_random_admissible_candidates(z8_t2, z8_chain):
    # scaled copies and distance-profile pullbacks are admissible, hence
    # must be dominated by the warped metric
    import random

    rng = random.Random(0)
    n = 8
    for trial in range(10):
        c = Fraction(rng.randrange(1, 100), 100)
        scaled = [[c * z8_chain.get(i, j) for j in range(n)] for i in range(n)]
        rep = greatest_metric_check(z8_t2, scaled, reference=z8_chain)
        assert rep.ok and rep.dominated, trial
    for trial in range(10):
        z_ref = rng.randrange(n)
        pull = [[abs(z8_chain.get(z_ref, i) - z8_chain.get(z_ref, j))
                 for j in range(n)] for i in range(n)]
        rep = greatest_metric_check(z8_t2, pull, reference=z8_chain)
        assert rep.ok and rep.dominated, trial


def test_free_orbit_law_threshold_z32():
    tower = power_tower(2, 5)
    scan = scan_validity_threshold(
        lambda t: build_profinite_model(tower, depth=5, t=t), 3, [1, 2, 4, 8])
    assert scan["threshold"] == 2
    assert scan["levels"][0]["holds"] is False


def test_free_orbit_law_report(z8_t2, z8_chain):
    rep = free_orbit_law(z8_t2, z8_chain, 3)
    assert rep.holds
    assert rep.per_length[0] == 0.0


def test_emission_smoke(z8_chain):
    csv = matrix_to_csv(z8_chain)
    assert csv.splitlines()[0].startswith("node,")
    summary = matrix_summary(z8_chain)
    assert summary["engine"] == "chain" and summary["n"] == 8
