import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pxbound.exponents import (
    Ball,
    DomainError,
    ExponentField,
    critical_lower_star,
    critical_star,
    exponent_eval,
    exponent_extrema,
    validate_exponent_triple,
)
from pxbound.mesh import Interval, generate_mesh


@pytest.fixture(scope="module")
def mesh():
    return generate_mesh(Interval(0, 1), 1 / 64)


@pytest.mark.parametrize(
    "s,N,star,lower",
    [(2, 3, 6.0, 4.0), (3, 3, math.inf, math.inf), (1.5, 2, 6.0, 3.0), (2, 2, math.inf, math.inf)],
)
def test_critical_exponents(s, N, star, lower):
    assert critical_star(s, N) == star
    assert critical_lower_star(s, N) == lower


def test_critical_exponents_domain():
    with pytest.raises(ValueError):
        critical_star(0.5, 3)
    with pytest.raises(ValueError):
        critical_lower_star(2, 1)


@given(st.floats(1.001, 2.999), st.integers(3, 6))
def test_lower_star_below_star(s, N):
    # for 1 < s < N both critical exponents are finite and ordered
    assert s < critical_lower_star(s, N) < critical_star(s, N)


def test_eval_constant_and_affine(mesh):
    assert exponent_eval(ExponentField(mesh, "2"), [0.3]) == 2.0
    assert exponent_eval(ExponentField(mesh, "2 + x"), [0.5]) == pytest.approx(2.5, abs=1e-15)


def test_nodal_field_matches_closed_form_at_nodes(mesh):
    x = mesh.vertices[:, 0]
    f = ExponentField(mesh, 2 + x**2 / 2)
    assert np.allclose(f.at_points(mesh.vertices), 2 + x**2 / 2, atol=1e-15, rtol=0)


def test_eval_outside_domain(mesh):
    with pytest.raises(DomainError):
        exponent_eval(ExponentField(mesh, "2 + x"), [1.5])


def test_extrema(mesh):
    assert exponent_extrema(ExponentField(mesh, "2")) == (2.0, 2.0)
    f = ExponentField(mesh, "2 + x")
    assert exponent_extrema(f) == pytest.approx((2.0, 3.0), abs=1e-15)
    half = mesh.vertices[mesh.cells].mean(axis=1)[:, 0] < 0.5
    assert exponent_extrema(f, half) == pytest.approx((2.0, 2.5), abs=1e-15)
    lo, hi = exponent_extrema(f, Ball([0.0], 0.5))
    assert lo == pytest.approx(2.0) and hi < 2.5


def test_extrema_empty_region(mesh):
    with pytest.raises(DomainError):
        exponent_extrema(ExponentField(mesh, "2 + x"), Ball([5.0], 0.1))


def test_floor_rejected(mesh):
    with pytest.raises(ValueError):
        ExponentField(mesh, "1 + x")


def test_triple_valid_constant(mesh):
    rep = validate_exponent_triple(
        ExponentField(mesh, "2"), ExponentField(mesh, "2"), ExponentField(mesh, "2", domain="boundary"), 2
    )
    assert rep.valid and rep.margin_q0 == math.inf and rep.margin_q1 == math.inf


def test_triple_critical_q0_rejected(mesh):
    rep = validate_exponent_triple(
        ExponentField(mesh, "2"), ExponentField(mesh, "6"), ExponentField(mesh, "2", domain="boundary"), 3
    )
    assert not rep.valid
    assert any(v.startswith("q0 violates q0 < p* at x=") for v in rep.violations)


def test_triple_margins(mesh):
    rep = validate_exponent_triple(
        ExponentField(mesh, "2"), ExponentField(mesh, "5.9"), ExponentField(mesh, "3.9", domain="boundary"), 3
    )
    assert rep.valid
    assert rep.margin_q0 == pytest.approx(0.1) and rep.margin_q1 == pytest.approx(0.1)


def test_triple_q_below_p_rejected(mesh):
    rep = validate_exponent_triple(
        ExponentField(mesh, "2.5"), ExponentField(mesh, "2"), ExponentField(mesh, "2.5", domain="boundary"), 2
    )
    assert not rep.valid
