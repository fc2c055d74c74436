"""Sections, charts, trivializations, and the two verification passes."""

from fractions import Fraction

import numpy as np
import pytest

from warpbench.cocycles import shift_cocycle, tree_cocycle
from warpbench.errors import PropertyViolationError
from warpbench.fibred import (
    ChartRejection,
    build_chart,
    build_partition,
    build_section,
    embedded_distance,
    embedding_envelope,
    input_distance,
    lower_envelope,
    product_embedding,
    trivialized_section_value,
    verify_distance_control,
    verify_transition,
)
from warpbench.groups import ball_with_length
from warpbench.spaces import build_profinite_model, build_su2_model
from warpbench.towers import power_tower
from warpbench.vectors import v_norm_pow, v_sub
from warpbench.warp import warped_chain


@pytest.fixture(scope="module")
def z64():
    # level high enough that cell charts collapse onto their anchors, low
    # enough that metric shortcuts keep the warped metric hybrid
    model = build_profinite_model(power_tower(2, 6), depth=6, t=2 ** 14)
    return model, warped_chain(model)


@pytest.fixture(scope="module")
def z64_section(z64):
    model, _ = z64
    return build_section(model, shift_cocycle(model.group()))


@pytest.fixture(scope="module")
def su2_small():
    model = build_su2_model(t=512, target_size=150, seed=11)
    return model, warped_chain(model)


def test_section_at_base_point(z64, z64_section):
    model, _ = z64
    e_part, coords = z64_section.value(model.base_point)
    assert e_part == {}
    assert coords == model.ambient.coords(model.base_point)


def test_section_norm_law(z64, z64_section):
    model, _ = z64
    for idx in range(0, model.n, 7):
        e_part, _ = z64_section.value(idx)
        assert v_norm_pow(e_part, 2) == len(model.label_of(idx).word)


def test_sections_share_cocycle_slot_across_levels():
    tower = power_tower(2, 4)
    m1 = build_profinite_model(tower, depth=4, t=4)
    m2 = build_profinite_model(tower, depth=4, t=8)
    s1 = build_section(m1, shift_cocycle(m1.group()))
    s2 = build_section(m2, shift_cocycle(m2.group()))
    for idx in range(m1.n):
        assert m1.label_of(idx).word == m2.label_of(idx).word
        assert s1.e_parts[idx] == s2.e_parts[idx]


def test_section_rejects_label_collision(z64):
    model, _ = z64
    clone = build_profinite_model(power_tower(2, 6), depth=6, t=2 ** 16)
    clone.labels = list(clone.labels)
    clone.labels[5] = clone.labels[3]
    with pytest.raises(PropertyViolationError, match="collision"):
        build_section(clone, shift_cocycle(clone.group()))


def test_singleton_chart_below_net_spacing(z64):
    model, warped = z64
    # chart scale far below the net spacing: z = x and g = e
    chart = build_chart(model, (4,), 4, Fraction(1, 2), warped)
    assert chart.z_of[4] == 4
    assert chart.g_of[4].is_identity


def test_cell_charts_word_identity_z64(z64):
    model, warped = z64
    grp = model.group()
    part = build_partition(model, warped, 3)
    for ci, cell in enumerate(part.cells):
        chart = build_chart(model, cell, part.centers[ci], 3, warped)
        for x in cell:
            z, g = chart.decomposition(x)
            assert model.label_of(x).word == \
                grp.mul(g, model.label_of(z)).word


def test_chart_rejects_low_level():
    model = build_profinite_model(power_tower(2, 5), depth=5, t=4)
    warped = warped_chain(model)
    with pytest.raises(ChartRejection, match="below validity threshold"):
        part = build_partition(model, warped, 3)
        for ci, cell in enumerate(part.cells):
            build_chart(model, cell, part.centers[ci], 3, warped)


def test_identity_transition_on_equal_charts(z64):
    model, warped = z64
    part = build_partition(model, warped, 3)
    chart = build_chart(model, part.cells[0], part.centers[0], 3, warped)
    rep = verify_transition(model, chart, chart)
    assert rep.consistent
    assert rep.isometry.e_word.is_identity
    assert rep.isometry.h_word.is_identity


def test_transitions_agree_on_overlapping_charts(z64):
    model, warped = z64
    grp = model.group()
    part = build_partition(model, warped, 3)
    # overlapping enlargements of two adjacent cells
    c0 = tuple(sorted(set(part.cells[0]) | set(part.cells[1])))
    c1 = tuple(sorted(set(part.cells[1]) | set(part.cells[2])))
    ch0 = build_chart(model, c0, part.centers[0], 6, warped)
    ch1 = build_chart(model, c1, part.centers[1], 6, warped)
    rep = verify_transition(model, ch0, ch1)
    assert rep.consistent and rep.common_count > 0
    for x in set(c0) & set(c1):
        g1, g2 = ch0.g_of[x], ch1.g_of[x]
        expected = grp.inv(grp.mul(grp.inv(g2), g1))
        assert rep.isometry.h_word.word == expected.word


def test_distance_control_exact_on_z64_cells(z64, z64_section):
    model, warped = z64
    part = build_partition(model, warped, 3)
    charts = [build_chart(model, c, part.centers[i], 3, warped)
              for i, c in enumerate(part.cells)]
    rep = verify_distance_control(model, warped, charts, z64_section, 2)
    assert rep.exact
    assert rep.pair_count > 0
    assert rep.max_identity_deviation == 0
    assert rep.max_decomposition_deviation == 0
    env = rep.lower_envelope()
    assert all(env[i][1] <= env[i + 1][1] + 1e-12 for i in range(len(env) - 1))


def test_trivialized_pair_same_point_is_zero(z64, z64_section):
    model, warped = z64
    part = build_partition(model, warped, 3)
    chart = build_chart(model, part.cells[3], part.centers[3], 3, warped)
    x = part.cells[3][0]
    t1 = trivialized_section_value(chart, model, z64_section, x)
    t2 = trivialized_section_value(chart, model, z64_section, x)
    assert v_sub(t1[0], t2[0]) == {}
    assert t1[1] == t2[1]


def test_distance_control_su2_within_snap_budget(su2_small):
    model, warped = su2_small
    section = build_section(model, tree_cocycle(model.group()))
    part = build_partition(model, warped, 2)
    charts = [build_chart(model, c, part.centers[i], 2, warped)
              for i, c in enumerate(part.cells)]
    rep = verify_distance_control(model, warped, charts, section, 2)
    assert rep.identity_ok
    # singleton cells at this level: the cell report is vacuous but valid
    assert rep.max_identity_deviation <= rep.identity_tolerance


def test_product_embedding_examples(su2_small):
    model, _ = su2_small
    grp = model.group()
    coc = tree_cocycle(grp)
    g = grp.parse("a b")
    a = product_embedding(g, 3, model, coc)
    b = product_embedding(g, 3, model, coc)
    assert embedded_distance(a, b, 2, coc) == 0.0
    # cocycle slot vanishes for the identity element: pure ambient distance
    e1 = product_embedding(grp.identity(), 3, model, coc)
    e2 = product_embedding(grp.identity(), 17, model, coc)
    expected = float(np.linalg.norm(
        model.ambient.coords_float(3) - model.ambient.coords_float(17)))
    assert embedded_distance(e1, e2, 2, coc) == pytest.approx(expected, abs=1e-12)
    assert input_distance(grp.identity(), 3, grp.identity(), 17, model) == \
        pytest.approx(expected, abs=1e-12)


def test_embedding_envelope_nondecreasing_and_growing(su2_small):
    model, _ = su2_small
    grp = model.group()
    coc = tree_cocycle(grp)
    elements = ball_with_length(grp, 3)  # enough range for growth evidence
    points = list(range(0, model.n, model.n // 8))[:8]
    buckets = embedding_envelope(model, coc, elements, points, p=2)
    env = lower_envelope(buckets)
    assert all(env[i][1] <= env[i + 1][1] + 1e-12 for i in range(len(env) - 1))
    # properness evidence: the envelope is unbounded over the tested range
    assert env[-1][1] > env[0][1] + 1.0
