import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equibound.empirics.verify import random_action, random_class, translation_instance
from equibound.metric_core import cycle_space
from equibound.symmetry import (
    EmptyClassError,
    FiniteGroup,
    FunctionClass,
    GroupAction,
    GroupError,
    TransformationSubset,
    action_deformation_constants,
    action_from_json,
    augment_distribution,
    averaged_class,
    build_partial_class,
    cyclic_group,
    density,
    density_curve,
    dihedral_group,
    ee_table,
    equivariance_error,
    equivariant_loss_class,
    equivariant_predictors,
    group_preset,
    orbit_representatives,
    orbits,
    regular_action,
    stabilizer,
    torus_group,
)


def test_presets_and_orders():
    assert cyclic_group(6).order == 6
    assert dihedral_group(4).order == 8
    assert torus_group(3).order == 9
    assert group_preset("rotation360").order == 360
    with pytest.raises(GroupError):
        group_preset("sphere:3")


def test_cyclic_word_metric():
    g = cyclic_group(8)
    assert np.array_equal(g.word_dist, cycle_space(8).dist)
    assert g.metric.right_invariant


def test_dihedral_word_metric_not_right_invariant():
    g = dihedral_group(4)
    assert not g.metric.right_invariant
    assert g.metric.right_witness is not None
    assert g.ddim == pytest.approx(2.0)


def test_associativity_checked():
    table = np.array([[0, 1, 2], [1, 0, 0], [2, 0, 1]])
    with pytest.raises(GroupError):
        FiniteGroup((0, 1, 2), table, (1, 2))


def test_action_must_be_bijective():
    g = cyclic_group(3)
    table = np.array([[0, 1, 2], [1, 1, 2], [2, 0, 1]])
    with pytest.raises(GroupError):
        GroupAction(g, cycle_space(3), table)


def test_action_from_json():
    act = action_from_json({"group": "cyclic:4"})
    assert act.act(1, 3) == 0
    custom = action_from_json({
        "elements": ["e", "s"], "compose": [["e", "s"], ["s", "e"]],
        "act": [[0, 1], [1, 0]], "space": {"preset": "path", "size": 2},
    })
    assert custom.act(1, 0) == 1


def test_subset_density_is_exact():
    g = cyclic_group(6)
    s = TransformationSubset(g, (0, 2, 4))
    assert density(s) == Fraction(1, 2)
    assert s.is_subgroup()
    assert not TransformationSubset(g, (0, 1)).is_subgroup()


def test_constant_class_fixed_by_everything():
    act = regular_action(cyclic_group(6))
    cls = build_partial_class(act, TransformationSubset(act.group, (0, 1)), np.linspace(0, 1, 5), 1.0, 1.0, 0.2,
                              offset=0.5)
    assert len(cls) == 5
    assert len(stabilizer(cls, act, 0.0)) == 6


def test_partial_class_matches_brute_force():
    act = regular_action(cyclic_group(4))
    grid = [0.0, 0.5, 1.0]
    S = TransformationSubset(act.group, (0, 1))
    cls = build_partial_class(act, S, grid, 1.0, 0.5, 0.5, offset=0.5)
    d = act.space.dist
    want = []
    for vals in itertools.product(grid, repeat=4):
        f = np.array(vals)
        lip = all(abs(f[a] - f[b]) <= 0.5 * d[a, b] + 1e-12 for a in range(4) for b in range(4))
        ee = all(np.abs(f[act.table[g]] - f).max() <= 0.5 + 1e-12 for g in S.members)
        if lip and ee:
            want.append(vals)
    assert cls.method == "exhaustive"
    assert sorted(map(tuple, cls.values)) == sorted(want)


def test_empty_class_raises():
    act = regular_action(cyclic_group(4))
    with pytest.raises(EmptyClassError):
        FunctionClass(act.space, np.zeros((0, 4)), 1.0)


def test_stride_representatives():
    g = torus_group(6)
    from equibound.empirics.scenarios import scenario_padded_torus

    sc = scenario_padded_torus()
    x_action = GroupAction(g, sc.action.factors.x_space, sc.action.factors.act_x)
    reps = orbit_representatives(x_action, sc.subsets["stride"])
    assert tuple(x_action.space.labels[r] for r in reps.points) == ((0, 0), (0, 1), (1, 0), (1, 1))


def test_translation_deformation_constants():
    action, subset, reps = translation_instance(6)
    dc = action_deformation_constants(action, subset, reps)
    assert (dc.L, dc.L_prime) == (1.0, 1.0)


def test_equivariant_predictors_on_rotations():
    from equibound.empirics.scenarios import scenario_rotation

    sc = scenario_rotation(m=12, window=(-60, 60), data_window=(-30, 30))
    parts = equivariant_predictors(sc.action, sc.subsets["window"])
    assert len(parts) == 1
    assert len(parts[0][1]) == 2 * 12
    cls = equivariant_loss_class(sc.action, sc.subsets["window"])
    assert ee_table(cls, sc.action).max() == 0.0


instances = st.integers(0, 10_000)


@settings(max_examples=30, deadline=None)
@given(instances)
def test_exact_stabilizer_is_subgroup(seed):
    rng = np.random.default_rng(seed)
    act = random_action(rng)
    cls = random_class(rng, act)
    assert stabilizer(cls, act, 0.0).is_subgroup()


@settings(max_examples=30, deadline=None)
@given(instances)
def test_density_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    act = random_action(rng)
    cls = random_class(rng, act)
    curve = density_curve(cls, act, [0, 0.05, 0.1, 0.3, 1.0])
    assert curve == sorted(curve)
    assert curve[-1] == 1


@settings(max_examples=30, deadline=None)
@given(instances)
def test_augmented_law_is_invariant(seed):
    rng = np.random.default_rng(seed)
    act = random_action(rng)
    p = rng.dirichlet(np.ones(len(act.space)))
    whole = TransformationSubset.whole(act.group)
    q = augment_distribution(p, act, whole)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    for g in range(act.group.order):
        assert np.allclose(q[act.table[g]], q, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(instances)
def test_averaging_over_subgroup_gives_invariant_functions(seed):
    rng = np.random.default_rng(seed)
    act = random_action(rng)
    cls = random_class(rng, act)
    H = TransformationSubset(act.group, act.group.generated([int(rng.integers(act.group.order))]))
    avg = averaged_class(cls, act, H)
    for g in H.members:
        assert np.abs(avg.values[:, act.table[g]] - avg.values).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(instances)
def test_orbits_partition_points(seed):
    rng = np.random.default_rng(seed)
    act = random_action(rng)
    S = TransformationSubset(act.group, tuple(rng.choice(act.group.order, size=2)))
    parts = orbits(act, S)
    flat = sorted(z for orb in parts for z in orb)
    assert flat == list(range(len(act.space)))


def test_equivariance_error_of_shift():
    act = regular_action(cyclic_group(4))
    f = np.array([0.0, 1.0, 0.0, 1.0])
    assert equivariance_error(f, 2, act) == 0.0
    assert equivariance_error(f, 1, act) == 1.0
