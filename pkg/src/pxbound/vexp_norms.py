"""Modulars and Luxemburg norms in variable exponent spaces."""

from __future__ import annotations

import math

import numpy as np

from .discrete import DiscreteFunction
from .exponents import ExponentField
from .quadrature import DEFAULT_ORDER

TAU_GUARD = 1e-300
REL_TOL = 1e-15
MAX_ITER = 200


class NormConvergenceError(ArithmeticError):
    pass


def abs_power(values: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """``|v|^e`` with the convention ``0^e = 0`` for ``e > 0``."""
    a = np.abs(values)
    e = np.asarray(exponents, dtype=float)
    if np.all(e > 0):
        return np.power(a, e)
    with np.errstate(divide="ignore"):
        return np.where(a > 0, np.power(a, e), 0.0)


def modular_from_values(values, exponents, weights) -> float:
    """Quadrature sum of ``|v|^e`` with explicit values, exponents and weights.

    Cell contributions are reduced in a fixed order so results do not depend on
    how the arrays were produced.
    """
    per_cell = (abs_power(values, exponents) * weights).sum(axis=-1)
    return math.fsum(np.ravel(per_cell))


def _check_mesh(u: DiscreteFunction, field: ExponentField):
    if u.mesh is not field.mesh:
        raise ValueError("function and exponent field live on different meshes")


def _region_mask(n: int, region) -> np.ndarray | None:
    if region is None:
        return None
    reg = np.asarray(region)
    if reg.dtype == bool:
        if reg.shape != (n,):
            raise ValueError(f"region mask must have length {n}")
        return reg
    mask = np.zeros(n, dtype=bool)
    mask[reg.astype(np.int64)] = True
    return mask


def _cell_data(u: DiscreteFunction, field: ExponentField, region, order):
    _check_mesh(u, field)
    q = u.mesh.cell_quadrature(order)
    vals = u.at_cell_quadrature(order)
    exps = field.at_cell_quadrature(order)
    w = q.weights
    mask = _region_mask(u.mesh.n_cells, region)
    if mask is not None:
        vals, exps, w = vals[mask], exps[mask], w[mask]
    return vals, exps, w


def modular(u: DiscreteFunction, field: ExponentField, region=None, order: int = DEFAULT_ORDER) -> float:
    """Approximation of the integral of ``|u|^field`` over ``region`` (default all cells)."""
    return modular_from_values(*_cell_data(u, field, region, order))


def luxemburg_from_values(values, exponents, weights, rel_tol: float = REL_TOL) -> float:
    """Smallest ``tau`` with modular ``(v / tau) <= 1``, by bracketing and bisection."""
    values = np.abs(np.asarray(values, dtype=float))
    if not np.any(values * (weights > 0)):
        return 0.0
    exponents = np.broadcast_to(np.asarray(exponents, dtype=float), values.shape)

    def rho(tau):
        return modular_from_values(values / tau, exponents, weights)

    hi = 1.0 + modular_from_values(values, exponents, weights)
    it = 0
    while rho(hi) > 1.0:
        hi *= 2.0
        it += 1
        if it > 4 * MAX_ITER:
            raise NormConvergenceError("could not bracket the Luxemburg norm")
    lo = hi
    while lo > TAU_GUARD:
        lo = max(lo * 0.5, TAU_GUARD)
        if rho(lo) > 1.0:
            break
        hi = lo
    else:
        return TAU_GUARD
    for _ in range(MAX_ITER):
        if hi - lo <= rel_tol * hi:
            return hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return hi
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    raise NormConvergenceError("bisection for the Luxemburg norm did not converge")


def luxemburg_norm(u: DiscreteFunction, field: ExponentField, order: int = DEFAULT_ORDER) -> float:
    """Luxemburg norm of ``u`` in the variable exponent Lebesgue space of ``field``."""
    return luxemburg_from_values(*_cell_data(u, field, None, order))


def gradient_luxemburg_norm(u: DiscreteFunction, field: ExponentField, order: int = DEFAULT_ORDER) -> float:
    _check_mesh(u, field)
    q = u.mesh.cell_quadrature(order)
    g = np.broadcast_to(u.gradient_norms[:, None], q.weights.shape)
    return luxemburg_from_values(g, field.at_cell_quadrature(order), q.weights)


def sobolev_norm(u: DiscreteFunction, field: ExponentField, order: int = DEFAULT_ORDER) -> float:
    """Norm of the gradient plus norm of the function, both in Luxemburg form."""
    return gradient_luxemburg_norm(u, field, order) + luxemburg_norm(u, field, order)


def boundary_modular(
    u: DiscreteFunction, field: ExponentField, facets=None, order: int = DEFAULT_ORDER
) -> float:
    """Approximation of the surface integral of ``|u|^field`` over boundary facets."""
    _check_mesh(u, field)
    q = u.mesh.facet_quadrature(order)
    vals = u.at_facet_quadrature(order)
    exps = field.at_facet_quadrature(order)
    w = q.weights
    mask = _region_mask(u.mesh.n_facets, facets)
    if mask is not None:
        vals, exps, w = vals[mask], exps[mask], w[mask]
    return modular_from_values(vals, exps, w)
