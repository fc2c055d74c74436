"""Scale-local actions: representation/cocycle identities, isometry, kernel."""

from fractions import Fraction

import pytest

from warpbench.cocycles import shift_cocycle, tree_cocycle
from warpbench.errors import ContractError
from warpbench.rlocal import PointFunction, build_rlocal_action, cnd_kernel, cnd_table_csv
from warpbench.spaces import build_profinite_model, build_su2_model
from warpbench.towers import power_tower
from warpbench.vectors import v_norm_pow
from warpbench.warp import warped_chain


@pytest.fixture(scope="module")
def z32_action():
    model = build_profinite_model(power_tower(2, 5), depth=5, t=2 ** 14)
    warped = warped_chain(model)
    action = build_rlocal_action(model, warped, 3, shift_cocycle(model.group()))
    return action


@pytest.fixture(scope="module")
def z32_report(z32_action):
    return z32_action.validate(seed=1)


@pytest.fixture(scope="module")
def su2_action():
    model = build_su2_model(t=512, target_size=150, seed=11)
    warped = warped_chain(model)
    action = build_rlocal_action(model, warped, 2, tree_cocycle(model.group()),
                                 halo_pair_cap=80)
    return action


def test_identity_has_zero_cocycle_and_identity_rep(z32_action):
    grp = z32_action.model.group()
    b0 = z32_action.b_value(grp.identity())
    for vec in b0.values.values():
        assert vec[0] == {}
        assert all(v == 0 for v in vec[1])
    func = PointFunction({3: ({2: 1}, z32_action.model.ambient.coords(3))})
    moved = z32_action.pi_apply(grp.identity(), func)
    assert moved.values.keys() == func.values.keys()
    assert moved.values[3][0] == func.values[3][0]
    assert moved.values[3][1] == func.values[3][1]


def test_representation_identity_exact(z32_report):
    rep = z32_report.representation_identity
    assert rep["ok"] and rep["checked"] > 0


def test_cocycle_identity_exhaustive_exact(z32_report):
    rep = z32_report.cocycle_identity
    assert rep["ok"]
    # exhaustive: every applicable (g2, g1) pair at every point
    assert rep["checked"] >= 19 * 32


def test_pi_isometric_on_random_vectors(z32_report):
    assert z32_report.isometry["ok"]
    assert z32_report.isometry["checked"] >= 50


def test_transition_cocycle_exhaustive_triples(z32_report):
    rep = z32_report.transition_cocycle
    assert rep["ok"]
    assert rep["checked"] == 16 ** 3  # all halo triples intersect here


def test_norm_envelope_contained(z32_report):
    env = z32_report.norm_envelope
    assert env["ok"]
    by_gamma = {row["gamma"]: row["norm"] for row in env["rows"]}
    assert by_gamma["e"] == 0.0
    assert by_gamma["a"] > 1.0  # properness: nonzero moves carry norm


def test_halo_identity_deviation_zero_exact(z32_report):
    assert float(z32_report.halo_control.max_identity_deviation) == 0.0
    assert z32_report.orbit_law_holds
    assert z32_report.all_pass()


def test_cnd_kernel_exact_profinite(z32_action, z32_report):
    rep = cnd_kernel(z32_action, draws=100, seed=3, tuple_radius=2,
                     halo_control=z32_report.halo_control)
    table = {str(g): v for g, v in rep.table}
    assert table["e"] == 0
    assert rep.ok
    assert max(rep.quadratic_forms) <= 1e-9
    assert rep.envelope_consistent
    # symmetric in the generator direction, exact rational values
    assert table["a"] == table["A"] == Fraction(62, 32)


def test_cnd_requires_p_two():
    model = build_profinite_model(power_tower(2, 4), depth=4, t=2 ** 12)
    warped = warped_chain(model)
    action = build_rlocal_action(model, warped, 2,
                                 shift_cocycle(model.group(), p=3), p=3)
    with pytest.raises(ContractError, match="p = 2"):
        cnd_kernel(action)


def test_cnd_table_csv_shortlex(z32_action):
    rep = cnd_kernel(z32_action, draws=5, seed=0, tuple_radius=2)
    csv = cnd_table_csv(rep)
    lines = csv.strip().splitlines()
    assert lines[0] == "gamma,h"
    assert lines[1].startswith('"e",0')


def test_su2_action_validates_with_snap_budget(su2_action):
    rep = su2_action.validate(seed=1)
    assert rep.representation_identity["ok"]
    assert rep.cocycle_identity["ok"]
    assert rep.isometry["ok"]
    assert rep.transition_cocycle["ok"]
    assert rep.norm_envelope["ok"]
    assert float(rep.halo_control.max_identity_deviation) <= \
        rep.halo_control.identity_tolerance
    cnd = cnd_kernel(su2_action, draws=30, seed=3, tuple_radius=2)
    assert cnd.ok
