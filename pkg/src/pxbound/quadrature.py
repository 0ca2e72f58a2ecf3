"""Gauss-Legendre rules on the reference interval and triangle."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

DEFAULT_ORDER = 8


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss-Legendre nodes and weights mapped to ``[0, 1]``."""
    if n < 1:
        raise ValueError(f"quadrature order must be >= 1, got {n}")
    t, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = 0.5 * (t + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def reference_rule(dim: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and weights on the reference simplex.

    Weights sum to one, i.e. they integrate against the normalised measure,
    so physical weights are ``weights * volume``.  The triangle rule is the
    collapsed (Duffy) tensor product of two ``n``-point Gauss-Legendre rules.
    """
    t, w = gauss_legendre(n)
    if dim == 1:
        bary = np.column_stack([1.0 - t, t])
        weights = w.copy()
    elif dim == 2:
        a, b = np.meshgrid(t, t, indexing="ij")
        wa, wb = np.meshgrid(w, w, indexing="ij")
        xi = (a * (1.0 - b)).ravel()
        eta = b.ravel()
        bary = np.column_stack([1.0 - xi - eta, xi, eta])
        weights = 2.0 * (wa * wb * (1.0 - b)).ravel()
    else:
        raise ValueError(f"unsupported simplex dimension {dim}")
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights
