import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equibound.empirics.distributions import DataDistribution, sample
from equibound.empirics.errors import (
    augmented_gen_err,
    class_log_cover,
    empirical_app_err,
    empirical_gen_err,
    empirical_rademacher,
    explicit_gen_bound,
    g_averaged_gen_err,
    orbitwise_app_bound,
)
from equibound.empirics.scenarios import ScenarioError, scenario_from_json, scenario_padded_torus, scenario_rotation
from equibound.empirics.sweep import CSV_HEADER, rows_to_csv, run_sweep, trial_seed
from equibound.empirics.verify import (
    cover_suite,
    invariant_cycle_instance,
    check_generr_chain,
    random_generr_instance,
    verify_cover_product,
    verify_generr2,
    translation_instance,
)
from equibound.symmetry import (
    FunctionClass,
    TransformationSubset,
    cyclic_group,
    regular_action,
    stabilizer,
)


def ramp_instance():
    act = regular_action(cyclic_group(6))
    vals = np.array([[0, 1, 2, 3, 2, 1], [3, 2, 1, 0, 1, 2], [0, 0, 0, 3, 3, 3]], dtype=float) / 3
    cls = FunctionClass(act.space, vals, 1.0, None, 0.5)
    dist = DataDistribution.uniform(act.space)
    return act, cls, dist


@pytest.fixture(scope="module")
def rotation():
    return scenario_rotation()


def test_point_mass_sample():
    act, _, _ = ramp_instance()
    p = np.zeros(6)
    p[2] = 1
    s = sample(DataDistribution(act.space, p), 50, 0)
    assert set(s.draws) == {2}


def test_sample_frequency_within_three_sigma():
    act, _, _ = ramp_instance()
    p = np.zeros(6)
    p[[0, 1]] = 0.5
    s = sample(DataDistribution(act.space, p), 100_000, 11)
    freq = np.mean(s.draws == 0)
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / 100_000)


def test_sample_is_deterministic():
    _, _, dist = ramp_instance()
    assert np.array_equal(sample(dist, 30, 5).draws, sample(dist, 30, 5).draws)


def test_distribution_validation():
    act, _, _ = ramp_instance()
    with pytest.raises(ValueError):
        DataDistribution(act.space, np.full(6, 0.2))


def test_gen_err_zero_on_exact_frequencies():
    act, cls, dist = ramp_instance()
    s = sample(dist, 6, 0)
    object.__setattr__(s, "draws", np.arange(6))
    assert empirical_gen_err(cls, s, dist) == pytest.approx(0.0, abs=1e-15)


def test_gen_err_constant_singleton():
    act, _, dist = ramp_instance()
    cls = FunctionClass(act.space, np.full((1, 6), 0.3), 1.0)
    assert empirical_gen_err(cls, sample(dist, 7, 1), dist) == pytest.approx(0.0, abs=1e-15)


def test_ramp_gen_err_by_enumeration():
    act, cls, dist = ramp_instance()
    s = sample(dist, 5, 3)
    oracle = max(np.mean(f) - np.mean([f[z] for z in s.draws]) for f in cls.values)
    assert empirical_gen_err(cls, s, dist) == pytest.approx(oracle, abs=1e-15)


def test_averaged_gen_err_direct_double_sum():
    act, cls, dist = ramp_instance()
    s = sample(dist, 5, 3)
    S = TransformationSubset(act.group, (0, 1, 2))
    best = -math.inf
    for f in cls.values:
        pop = np.mean([np.mean([f[(z + g) % 6] for z in range(6)]) for g in (0, 1, 2)])
        emp = np.mean([np.mean([f[(z + g) % 6] for g in (0, 1, 2)]) for z in s.draws])
        best = max(best, pop - emp)
    assert g_averaged_gen_err(cls, s, dist, act, S) == pytest.approx(best, abs=1e-14)
    assert augmented_gen_err(cls, s, dist, act, S) == pytest.approx(best, abs=1e-14)


def test_averaged_with_identity_is_plain():
    act, cls, dist = ramp_instance()
    s = sample(dist, 5, 3)
    triv = TransformationSubset.trivial(act.group)
    assert g_averaged_gen_err(cls, s, dist, act, triv) == pytest.approx(empirical_gen_err(cls, s, dist), abs=1e-15)


def test_invariant_chain():
    check = check_generr_chain(*invariant_cycle_instance())
    assert check.passed
    assert check.values["max_gap"] <= 1e-12


def test_rademacher_zero_function():
    act, _, dist = ramp_instance()
    cls = FunctionClass(act.space, np.zeros((1, 6)), 1.0)
    est = empirical_rademacher(cls, sample(dist, 6, 0))
    assert est.exact and est.estimate == 0.0


def test_rademacher_two_functions_by_hand():
    act, _, dist = ramp_instance()
    vals = np.zeros((2, 6))
    vals[0, :] = [0.5, -0.5, 0, 0, 0, 0]
    vals[1, :] = [0.25, 0.25, 0, 0, 0, 0]
    cls = FunctionClass(act.space, vals, 1.0)
    s = sample(dist, 2, 0)
    object.__setattr__(s, "draws", np.array([0, 1]))
    total = 0.0
    for sig in itertools.product([-1, 1], repeat=2):
        total += max(sig[0] * f[0] + sig[1] * f[1] for f in vals) / 2
    assert empirical_rademacher(cls, s).estimate == pytest.approx(total / 4)


def test_rademacher_half_width_scaling():
    act, cls, dist = ramp_instance()
    s = sample(dist, 40, 2)
    a = empirical_rademacher(cls, s, trials=4000, seed=1)
    b = empirical_rademacher(cls, s, trials=8000, seed=2)
    assert not a.exact
    assert a.half_width / b.half_width == pytest.approx(math.sqrt(2), rel=0.2)


def test_app_err_constant_singleton():
    act, _, dist = ramp_instance()
    cls = FunctionClass(act.space, np.full((1, 6), 0.4), 1.0)
    assert empirical_app_err(cls, dist) == pytest.approx(0.4)


def test_app_err_partial_class_min():
    act, cls, dist = ramp_instance()
    assert empirical_app_err(cls, dist) == pytest.approx(min(np.mean(f) for f in cls.values))


def test_orbitwise_zero_for_invariant_labels():
    sc = scenario_padded_torus()
    full = sc.subsets["full"]
    # data on the padding only: y* = 0 there, invariant under every shift
    split = sc.action.factors
    zero_pts = [z for z in range(len(sc.action.space)) if split.y_of[z] == 0]
    ystar = np.zeros(len(split.x_space), dtype=np.int64)
    dist = DataDistribution.uniform(sc.action.space, zero_pts, ystar=ystar, ystar_lipschitz=0.0, split=split)
    assert orbitwise_app_bound(sc.action, full, dist, 0.0).value == 0.0


def test_orbitwise_clamped_beyond_diameter():
    sc = scenario_padded_torus()
    res = orbitwise_app_bound(sc.action, sc.subsets["full"], sc.dist, 1.0)
    assert res.value == 0.0


def test_orbitwise_padded_torus_value():
    # full group: one orbit, best constant level against {0: 20, 0.5: 12, 1: 4} of 36 sites
    sc = scenario_padded_torus()
    res = orbitwise_app_bound(sc.action, sc.subsets["full"], sc.dist, 0.0)
    oracle = min((20 * y**2 + 12 * (0.5 - y) ** 2 + 4 * (1 - y) ** 2) / 36 for y in (0, 0.5, 1))
    assert res.value == pytest.approx(oracle)


def test_orbitwise_rotation(rotation):
    res = orbitwise_app_bound(rotation.action, rotation.subset_for(1 / 3), rotation.dist, 0.0)
    assert res.value == 0.0
    assert res.unreachable_mass == 0.0


def test_orbitwise_needs_labels():
    act, _, dist = ramp_instance()
    with pytest.raises(ValueError):
        orbitwise_app_bound(act, TransformationSubset.whole(act.group), dist, 0.0)


def test_generr2_trivial_subset():
    action, cls, dist, smp = random_generr_instance(4)
    lhs, rhs, ok = verify_generr2(cls, action, TransformationSubset.trivial(action.group), dist, smp, 0.2)
    assert ok and rhs == pytest.approx(lhs + 0.4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([0.0, 0.1, 0.5]))
def test_generr2_random(seed, eps):
    action, cls, dist, smp = random_generr_instance(seed)
    S = stabilizer(cls, action, eps)
    assert verify_generr2(cls, action, S, dist, smp, eps)[2]


def test_cover_product_trivial_subset_is_monotonicity():
    action, _, _ = translation_instance(4)
    from equibound.symmetry import orbit_representatives

    triv = TransformationSubset.trivial(action.group)
    rows = verify_cover_product(action, triv, orbit_representatives(action, triv), 1.0, 1.0, [1.0, 2.0])
    assert all(r["lower_ok"] and r["upper_ok"] for r in rows)


def test_cover_suite_rows():
    rep = cover_suite(6)
    assert rep.passed
    rows = rep.checks[1].values["rows"]
    assert [r["radius"] for r in rows] == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    assert rows[0]["N_Z"] == 8


def test_class_log_cover_envelope():
    act, cls, _ = ramp_instance()
    cover = class_log_cover(cls)
    assert cover(0.0) == pytest.approx(math.log(3))
    assert cover(cover.diameter) == 0.0


def test_explicit_bound_terms():
    act, cls, dist = ramp_instance()
    b = explicit_gen_bound(cls, act, TransformationSubset.whole(act.group), 0.1, 20, 0.1)
    assert b.two_eps == pytest.approx(0.2)
    assert b.chaining == pytest.approx(0.0, abs=1e-12)  # whole-group averages are constants
    assert b.total == pytest.approx(0.2 + math.sqrt(math.log(20) / 20))


def test_padded_torus_scenario():
    sc = scenario_padded_torus(4, 3)
    assert sc.group_size == 36
    assert sc.density(sc.subsets["window"]) == pytest.approx(16 / 36)
    assert sc.density(sc.subsets["full"]) == 1
    with pytest.raises(ScenarioError):
        scenario_padded_torus(8, 3)


def test_rotation_scenario_densities(rotation):
    assert rotation.density(rotation.subsets["window"]) == pytest.approx(1 / 3)
    assert rotation.density(rotation.subset_for(1 / 6)) == pytest.approx(1 / 6)
    assert len(scenario_rotation(window=(-180, 180)).subsets["window"]) == 360


def test_scenario_from_json_errors():
    with pytest.raises(ScenarioError):
        scenario_from_json({"preset": "sphere"})
    with pytest.raises(ScenarioError):
        scenario_from_json({})


def test_sweep_empty_for_zero_trials():
    assert run_sweep(scenario_padded_torus(), ["window"], trials=0) == []


def test_sweep_rows_and_determinism():
    sc = scenario_padded_torus()
    a = run_sweep(sc, ["identity", "window"], None, [20], 4, 0.1, 7)
    b = run_sweep(sc, ["identity", "window"], None, [20], 4, 0.1, 7)
    assert len(a) == 8
    assert rows_to_csv(a) == rows_to_csv(b)
    assert rows_to_csv(a).splitlines()[0] == ",".join(CSV_HEADER)
    for r in a:
        assert r.perf_err == pytest.approx(r.gen_err + r.app_err)
        assert r.seed == trial_seed(7, 0 if r.lam < 0.1 else 1, r.trial)


def test_sweep_invariant_labels_give_zero_app_err():
    sc = scenario_padded_torus()
    split = sc.action.factors
    pts = [z for z in range(len(sc.action.space)) if split.y_of[z] == 0]
    sc.dist = DataDistribution.uniform(sc.action.space, pts, ystar=np.zeros(36, dtype=np.int64),
                                       ystar_lipschitz=0.0, split=split)
    rows = run_sweep(sc, ["full"], [0.0], 20, 3)
    assert all(r.app_err == 0.0 for r in rows)


def test_sweep_records_construction_errors():
    rows = run_sweep(scenario_padded_torus(), [0.3], None, 20, 2)
    assert len(rows) == 2 and all(r.regime.startswith("error:") for r in rows)


def test_trial_seeds_are_order_free():
    assert trial_seed(1, 2, 3) == trial_seed(1, 2, 3)
    assert trial_seed(1, 2, 3) != trial_seed(1, 3, 2)
