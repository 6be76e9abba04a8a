import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from equibound.bounds import (
    BoundError,
    BoundInputs,
    approx_bound,
    rate_parameters,
    base_bound,
    concentration_bound,
    confidence_term,
    dudley_bound,
    exact_gen_bound,
    isodiametric_constant,
    kt_sandwich,
    optimal_lambda,
    partial_gen_bound,
    perf_bound,
    perf_constants,
    tradeoff_lambda_star,
)
from equibound.metric_core import path_space, covering_count
from equibound.symmetry import cyclic_group, group_preset


def test_confidence_and_concentration():
    assert confidence_term(100, 1.0, 0.1) == pytest.approx(math.sqrt(math.log(20) / 100))
    assert concentration_bound(0.25, 100, 1.0, 0.1) == pytest.approx(0.25 + math.sqrt(math.log(20) / 100))
    with pytest.raises(BoundError):
        concentration_bound(0.1, 100, 1.0, 1.5)


def test_dudley_power_law_matches_closed_form():
    # ln N = t^-3, diameter 2, n = 400: minimizer alpha = 0.15^(2/3)
    a = 0.15 ** (2 / 3)
    oracle = 4 * (a + 0.15 * 2 * (a**-0.5 - 2**-0.5))
    res = dudley_bound(lambda t: t**-3, 2.0, 400, detail=True)
    assert res.value == pytest.approx(oracle, rel=1e-6)
    assert res.value == pytest.approx(2.5392019, abs=1e-6)
    assert res.alpha == pytest.approx(a, rel=1e-3)


def test_dudley_constant_entropy():
    # ln N = 2: the objective increases in alpha, so the infimum sits at alpha -> 0
    assert dudley_bound(lambda t: 2.0, 2.0, 400) == pytest.approx(12 * math.sqrt(2) / 10, rel=1e-6)


def test_dudley_single_ball():
    assert dudley_bound(lambda t: 0.0, 1.0, 10) == 0.0


def test_base_bound_needs_dimension_above_two():
    with pytest.raises(BoundError, match="d > 2"):
        base_bound(BoundInputs(d=2.0))
    rep = base_bound(BoundInputs(d=3.0, D=1.0, n=1000))
    assert rep.terms["chaining"] == pytest.approx(4**3 * 3 * (1 / 1000) ** (1 / 3))


def test_partial_bound_regimes():
    finite = partial_gen_bound(BoundInputs(d=5.0, d_G=1.0, D=1.0, L=0.5, stab_size=4, group_size=8, n=1000))
    assert finite.regime == "finite"
    e = 4**4 * 4 / 2 * math.sqrt(1 / (4 * 1000))
    assert finite.terms["E_eps"] == pytest.approx(e)
    general = partial_gen_bound(BoundInputs(d=5.0, d_G=1.0, D=10.0, L=1.0, stab_size=4, group_size=8, n=10))
    assert general.regime == "general"
    assert general.terms["E_eps"] == pytest.approx(4**4 * 2 * (2**5 * 10**5 / 40) ** 0.25)


def test_near_boundary_flag():
    # (2L)^d D^d = |Stab| n delta_G^d0 exactly
    rep = partial_gen_bound(BoundInputs(d=5.0, d_G=1.0, D=1.0, L=1.0, stab_size=4, group_size=8, n=8))
    assert rep.flags.get("near_boundary")
    assert set(rep.alternatives) == {"finite", "general"}


def test_exact_bound_uses_whole_group():
    inp = BoundInputs(d=5.0, d_G=1.0, stab_size=2, group_size=8, n=1000, eps=0.3)
    ex = exact_gen_bound(inp)
    assert ex.terms["two_eps"] == 0.0
    assert ex.terms["E_eps"] <= partial_gen_bound(inp).terms["E_eps"]


def test_approx_bound_clamps():
    inp = BoundInputs(C=0.5, d_G=1.0, lam=0.25, eps=0.0)
    assert approx_bound(inp) == pytest.approx(0.125**2)
    assert approx_bound(inp.replace(eps=0.5)) == 0.0


def test_perf_constants_derivation():
    inp = BoundInputs(d=5.0, d_G=1.0, D=1.0, L=1.0, group_size=8, delta_G=1.0)
    pc = perf_constants(inp)
    prefix = 4**4 * 4 / 2
    assert pc.C1 == pytest.approx(prefix * math.sqrt(2**5 / 8))
    assert pc.C2 == pytest.approx(prefix * (2**5 / 8) ** 0.25)
    assert pc.C3 == pytest.approx(2**5 / 8)


def test_perf_bound_regime_switch():
    base = BoundInputs(C=0.04, C1=0.04, C2=0.04, C3=0.01, d=4.0, d_G=1.0, n=1e6)
    assert perf_bound(base.replace(lam=0.5)).regime == "sqrt"
    assert perf_bound(base.replace(lam=1e-9)).regime == "d0"


def test_tradeoff_closed_form():
    inp = BoundInputs(C=0.04, C1=0.04, C2=0.04, C3=0.01, d=4.0, d_G=1.0, n=1e6)
    assert tradeoff_lambda_star(inp)["sqrt"] == pytest.approx(0.00625**0.4)


def test_rate_parameters_shape():
    p = rate_parameters(BoundInputs(d=5.0, d_G=1.0, Lip_ystar=1.0))
    assert p["sqrt"]["beta"] == 0.5
    assert p["d0"]["beta"] == pytest.approx(0.25)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_optimal_lambda_is_stationary(alpha, beta, C, Cp):
    lam = optimal_lambda(alpha, beta, C, Cp)
    f = lambda x: C * x**alpha + Cp * x ** (-beta)
    assert f(lam) <= f(lam * 1.01) + 1e-12
    assert f(lam) <= f(lam / 1.01) + 1e-12


def test_isodiametric_cycle8():
    res = isodiametric_constant(cyclic_group(8))
    assert res.mode == "exhaustive"
    assert res.C_G == pytest.approx(4 ** (math.log(2) / math.log(3)), rel=1e-12)
    assert res.witness == (0, 1)
    assert [row["min_diameter"] for row in res.table] == [0, 1, 2, 3, 4, 4, 4, 4]


def test_isodiametric_cycle16():
    res = isodiametric_constant(cyclic_group(16))
    assert res.C_G == pytest.approx(3.7135, abs=1e-4)


def test_isodiametric_rotation_estimate():
    res = isodiametric_constant(group_preset("rotation360"))
    assert res.mode == "balls"
    assert res.C_G == pytest.approx(26.48, abs=0.01)


def test_kt_sandwich_on_path():
    Z = path_space(4)
    lo, hi = kt_sandwich(lambda r: covering_count(Z, r), 2.0, 0.25)
    assert lo == 4
    assert hi == pytest.approx(math.log2(9) + 4)


def test_bound_inputs_round_trip():
    inp = BoundInputs(d=4.0, n=50)
    assert BoundInputs.from_dict(inp.to_dict()) == inp
    with pytest.raises(BoundError):
        BoundInputs.from_dict({"dimension": 3})
    assert "delta outside (0, 1/2)" in BoundInputs(delta=0.7).notes
