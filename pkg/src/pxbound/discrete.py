"""Piecewise-linear finite element functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .quadrature import DEFAULT_ORDER


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Continuous P1 function given by one value per mesh vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} nodal values, got {vals.size}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def interpolate(cls, mesh: Mesh, func) -> "DiscreteFunction":
        """Nodal interpolant of a callable ``func(points) -> values``."""
        return cls(mesh, np.asarray(func(mesh.vertices), dtype=float))

    @classmethod
    def constant(cls, mesh: Mesh, c: float) -> "DiscreteFunction":
        return cls(mesh, np.full(mesh.n_vertices, float(c)))

    def with_values(self, values) -> "DiscreteFunction":
        return DiscreteFunction(self.mesh, values)

    def __neg__(self):
        return self.with_values(-self.values)

    def __add__(self, other):
        if isinstance(other, DiscreteFunction):
            _same_mesh(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.with_values(self.values / float(c))

    @property
    def gradients(self) -> np.ndarray:
        """Constant gradient on every cell, shape ``(nc, d)``."""
        return np.einsum("ca,cad->cd", self.values[self.mesh.cells], self.mesh.grad_basis)

    @property
    def gradient_norms(self) -> np.ndarray:
        return np.linalg.norm(self.gradients, axis=1)

    def at_cell_quadrature(self, order: int = DEFAULT_ORDER) -> np.ndarray:
        q = self.mesh.cell_quadrature(order)
        return self.values[self.mesh.cells] @ q.bary.T

    def at_facet_quadrature(self, order: int = DEFAULT_ORDER) -> np.ndarray:
        q = self.mesh.facet_quadrature(order)
        return self.values[self.mesh.bfacets] @ q.bary.T

    def at_points(self, points) -> np.ndarray:
        cell, bary = self.mesh.locate(points, tol=1e-10)
        if np.any(cell < 0):
            raise ValueError("evaluation point outside the mesh")
        return np.einsum("sa,sa->s", bary, self.values[self.mesh.cells[cell]])

    @property
    def trace(self) -> np.ndarray:
        """Values at the boundary vertices (sorted by vertex index)."""
        return self.values[self.mesh.boundary_vertices]

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def min(self) -> float:
        return float(self.values.min())


def _same_mesh(a, b):
    if a.mesh is not b.mesh:
        raise ValueError("functions live on different meshes")
