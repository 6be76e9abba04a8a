"""Acceptance criteria at their stated tolerances; one summary line per criterion."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from equibound.bounds import BoundInputs, approx_bound, optimal_lambda
from equibound.cli import tradeoff_curve, tradeoff_inputs
from equibound.empirics.errors import empirical_app_err, orbitwise_app_bound
from equibound.empirics.scenarios import scenario_padded_torus, scenario_rotation
from equibound.empirics.sweep import run_sweep
from equibound.empirics.verify import (
    check_generr_chain,
    cover_suite,
    density_suite,
    generr_suite,
    invariant_cycle_instance,
    iso_suite,
    kt_suite,
)

pytestmark = pytest.mark.acceptance

# grid argmin of the default tradeoff curve on linspace(1e-3, 1, 1000), frozen from a run
TRADEOFF_ARGMIN = 0.131


def failures(report):
    return [(c.name, c.witness) for c in report.checks if not c.passed and not c.info]


@pytest.mark.criterion(1, "invariant class: GenErr equals its G-averaged form within 1e-12")
def test_generr_equality():
    t0 = time.perf_counter()
    action, cls, dist, smp = invariant_cycle_instance()
    check = check_generr_chain(action, cls, dist, smp)
    assert action.group.order == 6
    assert check.values["max_gap"] <= 1e-12
    assert abs(check.values["gen_err"] - check.values["averaged"]) <= 1e-12
    assert time.perf_counter() - t0 < 1.0


@pytest.mark.criterion(2, "tolerance inequality on 100 random instances, eps in {0, 0.1, 0.5}")
def test_generr_inequality():
    t0 = time.perf_counter()
    rep = generr_suite(100, 0, (0.0, 0.1, 0.5))
    assert not failures(rep), failures(rep)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(3, "product covering sandwich on the translated torus with L = L' = 1")
def test_cover_sandwich():
    t0 = time.perf_counter()
    rep = cover_suite(6)
    checks = {c.name: c for c in rep.checks}
    assert checks["deformation_constants"].values == {"L": 1.0, "L_prime": 1.0}
    rows = checks["product_sandwich"].values["rows"]
    assert rows and all(r["lower"] <= r["N_Z"] <= r["upper"] for r in rows)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(4, "entropy bracket for Lipschitz lattices on paths of 2-4 points")
def test_kt_bracket():
    t0 = time.perf_counter()
    rep = kt_suite((2, 3, 4), (0.25, 0.5, 1.0), 2.0)
    elapsed = time.perf_counter() - t0
    assert not failures(rep), failures(rep)
    assert elapsed < 300


@pytest.mark.criterion(5, "explicit bound violated in at most 10% of padded-torus trials")
def test_bound_validity():
    t0 = time.perf_counter()
    sc = scenario_padded_torus(4, 3, class_cap=200)
    assert sc.notes["m"] == 6
    rows = run_sweep(sc, ["identity", "stride", "window"], None, [20, 50], 500, 0.1, 0)
    assert len(rows) == 3 * 2 * 500
    assert all(not r.regime.startswith("error:") for r in rows)
    rate = sum(r.violation for r in rows) / len(rows)
    assert rate <= 0.10
    assert time.perf_counter() - t0 < 300


@pytest.mark.criterion(6, "closed-form minimizer within 1% of a 10^6-point grid argmin")
def test_lambda_star_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20241014)
    grid = np.geomspace(1e-6, 1e6, 1_000_000)
    done = 0
    while done < 20:
        alpha, beta = rng.uniform(0.2, 3.0, 2)
        C, Cp = 10 ** rng.uniform(-2, 2, 2)
        star = optimal_lambda(alpha, beta, C, Cp)
        if not grid[10] < star < grid[-10]:
            continue
        vals = C * grid**alpha + Cp * grid ** (-beta)
        found = grid[int(vals.argmin())]
        assert abs(found - star) / star <= 0.01, (alpha, beta, C, Cp)
        done += 1
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(7, "stated-constant tradeoff curve has a unique interior minimum")
def test_tradeoff_reproduction():
    inp, _ = tradeoff_inputs({}, None)
    assert (inp.C, inp.C1, inp.C2, inp.C3, inp.n) == (0.04, 0.04, 0.04, 0.01, 1_000_000)
    lams = np.linspace(1e-3, 1.0, 1000)
    curve = tradeoff_curve(inp, lams)
    vals = np.array(curve["bound"])
    local = [i for i in range(1, len(vals) - 1) if vals[i] < vals[i - 1] and vals[i] < vals[i + 1]]
    assert len(local) == 1 and curve["interior_minimum"]
    assert curve["decreasing_then_increasing"]
    assert curve["argmin_lambda"] == pytest.approx(TRADEOFF_ARGMIN, abs=1e-12)
    assert curve["relative_gap"] <= 0.01


@pytest.mark.criterion(8, "density monotone, Stab_0 a subgroup, rotation density exactly 1/3")
def test_density_laws():
    t0 = time.perf_counter()
    rep = density_suite(50, 0, rotation=scenario_rotation())
    assert not failures(rep), failures(rep)
    rot = {c.name: c for c in rep.checks}["rotation_density"]
    assert rot.values["density"] == Fraction(1, 3)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(9, "AppErr <= orbitwise bound <= approximation bound on the rotation scenario")
def test_app_err_chain():
    t0 = time.perf_counter()
    sc = scenario_rotation()
    for lam in (1 / 6, 1 / 3, 1.0):
        subset = sc.subset_for(lam)
        assert float(subset.measure_fraction) == pytest.approx(lam)
        cls = sc.build(subset, 0.0, 0)
        app = empirical_app_err(cls, sc.dist)
        orbit = orbitwise_app_bound(sc.action, subset, sc.dist, 0.0).value
        bound = approx_bound(sc.bound_inputs(subset, cls, 0.0, 50, 0.1))
        assert app <= orbit + 1e-9 and orbit <= bound + 1e-9, (lam, app, orbit, bound)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(10, "isodiametric constant on Z/8Z certified over all subsets")
def test_isodiametric_exactness():
    t0 = time.perf_counter()
    rep = iso_suite(8)
    check = rep.checks[0]
    assert check.passed, check.witness
    assert check.values["mode"] == "exhaustive" and check.values["tight_witnesses"] >= 1
    assert check.values["C_G"] == pytest.approx(4 ** math.log(2, 3))
    assert time.perf_counter() - t0 < 60
