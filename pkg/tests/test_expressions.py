import numpy as np
import pytest

from pxbound.expressions import Expression, ExpressionError


def test_arithmetic_and_functions():
    e = Expression("2 + x^2/2 + sin(y) - max(x, 0.5) + abs(-1) * exp(0) + min(1, 2) + cos(0)")
    pts = np.array([[0.3, 0.1], [1.0, 0.0]])
    expect = 2 + pts[:, 0] ** 2 / 2 + np.sin(pts[:, 1]) - np.maximum(pts[:, 0], 0.5) + 1 + 1 + 1
    assert np.allclose(e(pts), expect)


def test_constant_broadcasts():
    assert np.allclose(Expression("2")(np.zeros((5, 1))), 2.0)


def test_variables():
    assert Expression("x + 2*y").variables == {"x", "y"}


@pytest.mark.parametrize("bad", ["import os", "__class__", "x +", "z + 1", "foo(x)", "x.real"])
def test_rejects_bad_expressions(bad):
    with pytest.raises(ExpressionError):
        Expression(bad)


def test_sympy_round_trip():
    import sympy as sp

    from pxbound.expressions import X

    e = Expression("2 + x^2/2")
    assert sp.simplify(e.to_sympy() - (2 + X**2 / 2)) == 0
