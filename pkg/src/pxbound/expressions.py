"""Small expression language for exponent fields and problem data.

Expressions are written over the coordinates ``x`` and ``y`` using
``+ - * / ^`` and the functions ``sin, cos, exp, abs, min, max`` (plus
``sqrt`` and ``log``).  A parsed :class:`Expression` evaluates vectorised
over numpy arrays and can be converted to a sympy expression when
derivatives are needed (manufactured solutions).
"""

from __future__ import annotations

import ast

import numpy as np
import sympy as sp

_NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "log": np.log,
    "min": np.minimum,
    "max": np.maximum,
}

_SYMPY_FUNCS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "abs": sp.Abs,
    "sqrt": sp.sqrt,
    "log": sp.log,
    "min": sp.Min,
    "max": sp.Max,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}
_COORDS = ("x", "y")

X, Y = sp.symbols("x y", real=True)


class ExpressionError(ValueError):
    """Raised for expressions outside the supported grammar."""


class Expression:
    """A parsed closed-form expression in the coordinates ``x`` and ``y``."""

    def __init__(self, source: str):
        self.source = str(source).strip()
        if not self.source:
            raise ExpressionError("empty expression")
        try:
            tree = ast.parse(self.source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self):
        return f"Expression({self.source!r})"

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _NUMPY_FUNCS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ExpressionError(f"keyword arguments not allowed in {self.source!r}")
            nargs = 2 if node.func.id in ("min", "max") else 1
            if len(node.args) != nargs:
                raise ExpressionError(f"{node.func.id} takes {nargs} argument(s) in {self.source!r}")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in _COORDS and node.id not in _CONSTANTS:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"non-numeric constant in {self.source!r}")
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    @property
    def variables(self) -> set[str]:
        return {n.id for n in ast.walk(self._tree) if isinstance(n, ast.Name) and n.id in _COORDS}

    def __call__(self, points) -> np.ndarray:
        """Evaluate at ``points`` of shape ``(..., d)``; returns shape ``(...)``."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1)
        env = {"x": pts[..., 0], "y": pts[..., 1] if pts.shape[-1] > 1 else np.zeros(pts.shape[:-1])}
        out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            a, b = self._eval(node.left, env), self._eval(node.right, env)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            return np.power(a, b)
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _NUMPY_FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTANTS[node.id]
        return float(node.value)

    def to_sympy(self) -> sp.Expr:
        return self._sym(self._tree)

    def _sym(self, node):
        if isinstance(node, ast.BinOp):
            a, b = self._sym(node.left), self._sym(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            return a**b
        if isinstance(node, ast.UnaryOp):
            v = self._sym(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _SYMPY_FUNCS[node.func.id](*(self._sym(a) for a in node.args))
        if isinstance(node, ast.Name):
            if node.id == "x":
                return X
            if node.id == "y":
                return Y
            return sp.pi if node.id == "pi" else sp.E
        if isinstance(node.value, int):
            return sp.Integer(node.value)
        return sp.Rational(repr(node.value))


def lambdify_xy(expr: sp.Expr):
    """Vectorised numpy callable ``f(points)`` for a sympy expression in x, y."""
    fn = sp.lambdify((X, Y), expr, modules="numpy")

    def evaluate(points):
        pts = np.asarray(points, dtype=float)
        xs = pts[..., 0]
        ys = pts[..., 1] if pts.shape[-1] > 1 else np.zeros_like(xs)
        return np.broadcast_to(np.asarray(fn(xs, ys), dtype=float), xs.shape).copy()

    return evaluate
