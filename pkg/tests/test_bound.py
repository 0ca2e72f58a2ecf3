import json
import math
from dataclasses import replace

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pxbound.bound import (
    BoundOptions,
    auxiliary_exponent_s,
    delta_exponents,
    embedding_constants,
    estimate_embedding_constant,
    estimation_mesh,
    eta_exponents,
    geometric_constants,
    iteration_constants,
    report_differences,
    theorem_bound,
    threshold_k,
)
from pxbound.cover import build_partition_of_unity, single_ball_cover
from pxbound.degiorgi import EnergyEstimateConstants
from pxbound.discrete import DiscreteFunction
from pxbound.exponents import ExponentField, critical_lower_star
from pxbound.fem import make_problem
from pxbound.mesh import Interval, generate_mesh


def test_geometric_constants_examples():
    ec = EnergyEstimateConstants(1.0, 5.0, 2.0)
    d3, a, d4 = geometric_constants(ec, 2.0, 2.0, 3)
    assert (d3, a, d4) == (80.0, 4.0, 92.0)
    d3, a, _ = geometric_constants(EnergyEstimateConstants(1.0, 1.0, 1.0), 1.5, 3.0, 1)
    assert d3 == 64.0 and a == 8.0


@pytest.mark.parametrize("r,p,N,s", [(3.0, 2.0, 3, 10.5 / 5.5), (2.0, 2.0, 2, 1.5)])
def test_auxiliary_exponent_examples(r, p, N, s):
    val = auxiliary_exponent_s(r, p, N)
    assert val == pytest.approx(s, rel=1e-14)
    # forward check of the trace exponent
    target = (r + critical_lower_star(p, N)) / 2 if math.isfinite(critical_lower_star(p, N)) else r + 1
    assert critical_lower_star(val, N) == pytest.approx(target, rel=1e-13)


@given(st.floats(1.05, 2.9), st.floats(0, 0.999), st.integers(3, 5))
def test_auxiliary_exponent_postcondition(p, frac, N):
    pl = critical_lower_star(p, N)
    r = p + frac * (pl - p)
    if r >= pl:
        return
    s = auxiliary_exponent_s(r, p, N)
    assert 1 < s < p


def test_auxiliary_exponent_precondition():
    with pytest.raises(ValueError):
        auxiliary_exponent_s(4.0, 2.0, 3)
    with pytest.raises(ValueError):
        auxiliary_exponent_s(1.5, 2.0, 3)


def one_ball(p, q0, q1, N):
    mesh = generate_mesh(Interval(0, 1), 1 / 16)
    fl = (ExponentField(mesh, p), ExponentField(mesh, q0), ExponentField(mesh, q1, domain="boundary"))
    return single_ball_cover(mesh, *fl, N)


def test_eta_examples():
    e = eta_exponents(one_ball("2", "3", "3", 3), 3)
    assert e.eta == pytest.approx(0.5)
    assert e.eta_tilde == pytest.approx(10.5 / 5.5 / 2)
    assert e.eta_hat == e.eta_tilde
    e = eta_exponents(one_ball("3", "3", "3", 3), 3)
    assert e.eta == 0.0 and 0 < e.eta_tilde < 1


def test_delta_example():
    assert delta_exponents(0.5, 0.5, 2.0, 2.0) == (0.5, 2.0, False)


def test_delta_floor_flagged():
    d1, _, floored = delta_exponents(0.5, 1.5, 1.0, 1.0)
    assert floored and d1 == 1e-6


@settings(max_examples=60, deadline=None)
@given(
    st.floats(1, 1e4),
    st.floats(1, 10),
    st.floats(1, 10),
    st.floats(1e-8, 50),
    st.integers(1, 40),
    st.floats(1.1, 6),
    st.floats(0, 3),
    st.floats(0, 3),
)
def test_iteration_constants_cover_required_forms(d4, ce, ct, L, m, pm, dq0, dq1):
    q0p, q1p, pp = pm + dq0, pm + dq1, pm + 0.5
    ic = iteration_constants(d4, ce, ct, L, m, q0p, q1p, pm, pp, 0.3, 0.4)
    q = mpmath.mpf(max(q0p, q1p))
    T = q / pm
    two = mpmath.mpf(2)
    assert ic.d6 >= mpmath.mpf(ce) ** q * two ** (q - 1) * (1 + mpmath.mpf(L)) ** q * (1 - 1e-12)
    need7 = 2 * mpmath.mpf(m) ** (q0p + 1) * (ic.d5 * mpmath.mpf(d4) ** T + ic.d6 * two ** (2 * q * q / pm)) * two**q
    assert ic.d7 >= need7 * (1 - 1e-12)
    assert ic.d12 >= two ** (q * q / pm + q0p * q) * (1 - 1e-12)
    assert ic.K == max(ic.d7, ic.d11) and ic.b > 1
    assert 0 < ic.delta1 <= ic.delta2


def test_threshold_examples():
    assert threshold_k(1.0, 1.0, 2.0, 1.0, 2.0, 0.5) == pytest.approx(32.0, rel=1e-30)
    assert threshold_k(0.0, 5.0, 3.0, 0.5, 2.0, 0.1) == 1
    small = (16 * 5.0) ** (-1 / 0.5) * 3.0 ** (-1 / 0.25)
    assert threshold_k(small * 0.99, 5.0, 3.0, 0.5, 2.0, 0.1) == 1


def test_threshold_beyond_double_range_is_finite_mpf():
    k = threshold_k(1.0, 10.0, 1e4, 0.01, 2.0, 0.5)
    assert k > mpmath.mpf("1e308") and mpmath.isfinite(k)


def test_threshold_satisfies_start_condition():
    # with k from the threshold the rescaled recursion starts below its threshold
    K, b, d1, q0m, eh, data = mpmath.mpf(7), mpmath.mpf(5), mpmath.mpf(0.4), 2.0, 0.3, mpmath.mpf(3)
    k = threshold_k(data, K, b, d1, q0m, eh)
    K8 = 8 * K * k ** (-mpmath.mpf(q0m) * (1 - mpmath.mpf(eh)))
    assert data <= (2 * K8) ** (-1 / d1) * b ** (-1 / d1**2) * (1 + mpmath.mpf(1e-30))


def test_embedding_estimate_matches_one_dimensional_oracle():
    # sup of the max norm over the H^1 norm on (0, 1) is sqrt(coth 1)
    oracle = math.sqrt(1 / math.tanh(1))
    vals = []
    for res in (16, 32, 64):
        mesh = estimation_mesh(generate_mesh(Interval(0, 1), 1 / 8), res)
        vals.append(estimate_embedding_constant(mesh, 2.0, 2, samples=200))
    assert max(vals) / min(vals) < 1.05
    assert vals[-1] == pytest.approx(oracle, rel=1e-2)


def test_embedding_user_mode_round_trip():
    cov = one_ball("2", "2", "2", 2)
    eta = eta_exponents(cov, 2)
    e = embedding_constants(cov.mesh, cov, eta, "user", 3.25, 1.5)
    assert (e.C_emb, e.C_tr, e.mode) == (3.25, 1.5, "user")
    with pytest.raises(ValueError):
        embedding_constants(cov.mesh, cov, eta, "user", 0.5, 1.5)


def test_embedding_estimate_floored():
    cov = build_partition_of_unity(one_ball("2", "2", "2", 2))
    e = embedding_constants(cov.mesh, cov, eta_exponents(cov, 2), samples=50)
    assert e.C_emb >= 1 and e.C_tr >= 1


def test_bound_nonpositive_solution_gives_two(unit_interval):
    prob = make_problem(unit_interval, "2", "2", "2", 2, beta1=1.0, gamma0=-1.0, gamma1=1.0, f="0", g="0")
    u = DiscreteFunction.interpolate(unit_interval, lambda p: -p[:, 0])
    rep = theorem_bound(u, prob, "sub", BoundOptions(samples=50))
    assert rep.bound == 2 and rep.data_integral == 0 and rep.dominated and rep.chain_ok


def test_bound_on_manufactured_problem(p2_problem):
    prob, _, u = p2_problem
    rep = theorem_bound(u, prob, "sub")
    assert rep.bound >= 1.25 and rep.esssup == pytest.approx(1.25, abs=1e-9)
    assert rep.dominated and rep.chain_ok and rep.flags["z_decay"]
    d = rep.to_dict()
    assert d["bound"] == 2 * d["k"] and d["alpha"] == pytest.approx(d["delta1"] / (2 * (1 - d["eta_hat"])))
    assert d["a"] == 4.0 and d["eta"] == 0.0
    assert all(v["ok"] for k, v in d["chain"].items() if k != "all")


def test_report_invariants(variable_1d_problem):
    prob, _, u = variable_1d_problem
    d = theorem_bound(u, prob, "sub").to_dict()
    assert d["d3"] == max(d["d1"] * 2 ** (2 * prob.q0.sup), d["d2"] * 2 ** (2 * prob.q1.sup))
    assert d["d4"] == pytest.approx(d["d3"] + d["cover"]["m"] * 2**prob.q0.sup)
    assert 0 <= d["eta"] < 1 and 0 < d["eta_tilde"] < 1 and d["eta_hat"] == max(d["eta"], d["eta_tilde"])
    assert d["K"] > 0 and d["b"] > 1 and d["k"] >= 1


def test_mirror_report_identical(p2_problem):
    prob, _, u = p2_problem
    a = theorem_bound(u, prob, "sub")
    b = theorem_bound(-u, prob.mirrored(), "super")
    assert report_differences(a, b) == {}


def test_structure_prefactors_do_not_enter(p2_problem):
    prob, _, u = p2_problem
    s = prob.structure
    a = theorem_bound(u, prob, "sub").to_dict()
    b = theorem_bound(u, prob.with_structure(replace(s, a0=10 * s.a0, a1=10 * s.a1, a2=10 * s.a2)), "sub").to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert not {"a0", "a1", "a2"} & set(a)


@pytest.mark.parametrize("name", ["a4", "a5", "b0", "b1", "b2", "c0", "c1"])
def test_bound_monotone_in_structure_constants(p2_problem, name):
    prob, _, u = p2_problem
    s = prob.structure
    base = theorem_bound(u, prob, "sub").bound
    bigger = prob.with_structure(replace(s, **{name: 3 * getattr(s, name) + 1}))
    assert theorem_bound(u, bigger, "sub").bound >= base


def test_bound_monotone_in_data(p2_problem):
    prob, _, u = p2_problem
    a = theorem_bound(u, prob, "sub").bound
    b = theorem_bound(u * 1.5, prob, "sub").bound
    assert b >= a


def test_overflowing_bound_serialises_as_sentinel():
    mesh = generate_mesh(Interval(0, 1), 1 / 32)
    from pxbound.fem import manufactured_problem, solve

    prob, _ = manufactured_problem(mesh, "2 + x/2", "2 + x/2", "2 + x/2", 3, "1 + x*(1-x)")
    rep = theorem_bound(solve(prob), prob, "sub", BoundOptions(samples=100))
    d = rep.to_dict()
    assert d["bound"] == "inf" and d["log10"]["bound"] > 308
    assert rep.dominated and rep.flags["z_decay"]
    json.dumps(d)


def test_chain_checked_at_threshold_and_unit_level(p2_problem):
    prob, _, u = p2_problem
    rep = theorem_bound(u, prob, "sub", BoundOptions(check_levels=(1.0, 1.1)))
    assert [c.k for c in rep.chains][1:] == [1.0, 1.1]
    assert all(c.all_ok for c in rep.chains)


def test_bound_options_validation():
    with pytest.raises(ValueError):
        BoundOptions(n_max=0)
    with pytest.raises(ValueError):
        BoundOptions(check_levels=(0.5,))
