"""Variable exponents, their extrema over regions and the critical exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expressions import Expression
from .mesh import Mesh
from .quadrature import DEFAULT_ORDER

INF = math.inf
EXPONENT_FLOOR = 1.0 + 1e-6


class DomainError(ValueError):
    """A point or region does not meet the domain of a field."""


def critical_star(s: float, N: int) -> float:
    """Sobolev exponent ``N s / (N - s)``; ``inf`` when ``s >= N``."""
    if not s >= 1:
        raise ValueError(f"exponent must be >= 1, got {s}")
    if N < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {N}")
    return N * s / (N - s) if s < N else INF


def critical_lower_star(s: float, N: int) -> float:
    """Trace exponent ``(N - 1) s / (N - s)``; ``inf`` when ``s >= N``."""
    if not s >= 1:
        raise ValueError(f"exponent must be >= 1, got {s}")
    if N < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {N}")
    return (N - 1) * s / (N - s) if s < N else INF


@dataclass(frozen=True)
class Ball:
    """Open ball used as an extrema region."""

    center: np.ndarray
    radius: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float).reshape(1, -1)
        return np.linalg.norm(points - c, axis=1) < self.radius


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Continuous exponent on the closed domain or on its boundary.

    ``source`` is either an :class:`Expression` or an array of nodal values
    (one per mesh vertex) interpolated piecewise linearly.
    """

    mesh: Mesh
    source: Expression | np.ndarray
    domain: str = "interior"
    name: str = "p"
    order: int = DEFAULT_ORDER
    floor: float = EXPONENT_FLOOR
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.domain not in ("interior", "boundary"):
            raise ValueError(f"domain must be 'interior' or 'boundary', got {self.domain!r}")
        src = self.source
        if isinstance(src, str):
            src = Expression(src)
        elif not isinstance(src, Expression):
            src = np.asarray(src, dtype=float).ravel()
            if src.shape != (self.mesh.n_vertices,):
                raise ValueError(
                    f"nodal field {self.name} needs {self.mesh.n_vertices} values, got {src.size}"
                )
            src.setflags(write=False)
        object.__setattr__(self, "source", src)
        vals = self.sample_values()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"exponent {self.name} is not finite on its domain")
        lo = float(vals.min())
        if lo < self.floor:
            raise ValueError(
                f"exponent {self.name} must be >= {self.floor} on its domain, minimum is {lo}"
            )
        self._cache["inf"] = lo
        self._cache["sup"] = float(vals.max())

    @property
    def is_nodal(self) -> bool:
        return not isinstance(self.source, Expression)

    @property
    def is_constant(self) -> bool:
        return self.inf == self.sup

    @property
    def inf(self) -> float:
        return self._cache["inf"]

    @property
    def sup(self) -> float:
        return self._cache["sup"]

    def samples(self):
        if self.domain == "interior":
            return self.mesh.interior_samples(self.order)
        return self.mesh.boundary_samples(self.order)

    def sample_values(self) -> np.ndarray:
        key = "sample_values"
        if key not in self._cache:
            s = self.samples()
            if self.is_nodal:
                ent = self.mesh.cells if self.domain == "interior" else self.mesh.bfacets
                vals = np.einsum("sa,sa->s", s.bary, self.source[ent[s.owner]])
            else:
                vals = self.source(s.points)
            vals.setflags(write=False)
            self._cache[key] = vals
        return self._cache[key]

    # evaluation on quadrature rules -------------------------------------------
    def at_cell_quadrature(self, order: int = DEFAULT_ORDER) -> np.ndarray:
        """Values at cell quadrature points, shape ``(nc, nq)``."""
        if self.domain != "interior":
            raise DomainError(f"boundary field {self.name} has no cell values")
        key = ("cq", order)
        if key not in self._cache:
            q = self.mesh.cell_quadrature(order)
            if self.is_nodal:
                vals = self.source[self.mesh.cells] @ q.bary.T
            else:
                vals = self.source(q.points)
            self._cache[key] = vals
        return self._cache[key]

    def at_facet_quadrature(self, order: int = DEFAULT_ORDER) -> np.ndarray:
        """Values at boundary facet quadrature points, shape ``(nf, nq)``.

        Interior fields are restricted to the boundary (their trace)."""
        key = ("fq", order)
        if key not in self._cache:
            q = self.mesh.facet_quadrature(order)
            if self.is_nodal:
                vals = self.source[self.mesh.bfacets] @ q.bary.T
            else:
                vals = self.source(q.points)
            self._cache[key] = vals
        return self._cache[key]

    def at_points(self, points, check: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.mesh.dim)
        if self.domain == "interior":
            if check or self.is_nodal:
                cell, bary = self.mesh.locate(pts, tol=1e-10)
                if np.any(cell < 0):
                    bad = pts[np.argmax(cell < 0)]
                    raise DomainError(f"point {tuple(bad)} lies outside the domain of {self.name}")
                if self.is_nodal:
                    return np.einsum("sa,sa->s", bary, self.source[self.mesh.cells[cell]])
            return self.source(pts)
        facet, bary = self.mesh.on_boundary(pts, tol=1e-10)
        if check and np.any(facet < 0):
            bad = pts[np.argmax(facet < 0)]
            raise DomainError(f"point {tuple(bad)} is not on the boundary for {self.name}")
        if self.is_nodal:
            return np.einsum("sa,sa->s", bary, self.source[self.mesh.bfacets[facet]])
        return self.source(pts)


def exponent_eval(field: ExponentField, x) -> float:
    """Value of ``field`` at the single point ``x``."""
    return float(field.at_points(np.asarray(x, dtype=float).reshape(1, -1))[0])


def exponent_extrema(field: ExponentField, region=None) -> tuple[float, float]:
    """(min, max) of ``field`` over sample points of ``region``.

    ``region`` is ``None`` (whole domain), a :class:`Ball`, or an index array /
    boolean mask over cells (interior fields) or boundary facets.
    """
    if region is None:
        return field.inf, field.sup
    s = field.samples()
    vals = field.sample_values()
    if isinstance(region, Ball):
        sel = region.contains(s.points)
    else:
        reg = np.asarray(region)
        n_ent = field.mesh.n_cells if field.domain == "interior" else field.mesh.n_facets
        if reg.dtype == bool:
            if reg.shape != (n_ent,):
                raise ValueError(f"region mask must have length {n_ent}")
            keep = reg
        else:
            keep = np.zeros(n_ent, dtype=bool)
            keep[reg.astype(np.int64)] = True
        sel = keep[s.owner]
    if not sel.any():
        raise DomainError(f"region does not meet the domain of {field.name}")
    return float(vals[sel].min()), float(vals[sel].max())


@dataclass(frozen=True)
class ExponentReport:
    valid: bool
    margin_q0: float  # min over samples of p* - q0
    margin_q1: float  # min over samples of p_* - q1
    excess_q0: float  # min over samples of q0 - p
    excess_q1: float  # min over samples of q1 - p on the boundary
    violations: tuple[str, ...]


def validate_exponent_triple(
    p: ExponentField, q0: ExponentField, q1: ExponentField, N: int, tol: float = 1e-12
) -> ExponentReport:
    """Check ``p <= q0 < p*`` on the closure and ``p <= q1 < p_*`` on the boundary."""
    if p.mesh is not q0.mesh or p.mesh is not q1.mesh:
        raise ValueError("exponent fields live on different meshes")
    if p.domain != "interior" or q0.domain != "interior" or q1.domain != "boundary":
        raise ValueError("expected interior p, q0 and boundary q1")
    violations = []
    si = p.mesh.interior_samples(p.order)
    pv, q0v = p.sample_values(), q0.sample_values()
    pstar = np.array([critical_star(v, N) for v in pv])
    sb = p.mesh.boundary_samples(q1.order)
    q1v = q1.sample_values()
    if p.is_nodal:
        pb = np.einsum("sa,sa->s", sb.bary, p.source[p.mesh.bfacets[sb.owner]])
    else:
        pb = p.source(sb.points)
    plow = np.array([critical_lower_star(v, N) for v in pb])

    def worst(values, pts, label):
        j = int(np.argmin(values))
        if values[j] < 0 or (label.endswith("*") and values[j] <= 0):
            violations.append(f"{label} at x={tuple(np.round(pts[j], 12).tolist())}")

    excess0 = q0v - pv + tol
    margin0 = pstar - q0v
    excess1 = q1v - pb + tol
    margin1 = plow - q1v
    worst(excess0, si.points, "q0 violates p <= q0")
    if np.isfinite(margin0).any():
        worst(np.where(np.isfinite(margin0), margin0, INF), si.points, "q0 violates q0 < p*")
    worst(excess1, sb.points, "q1 violates p <= q1")
    if np.isfinite(margin1).any():
        worst(np.where(np.isfinite(margin1), margin1, INF), sb.points, "q1 violates q1 < p_*")
    return ExponentReport(
        valid=not violations,
        margin_q0=float(np.min(margin0)),
        margin_q1=float(np.min(margin1)),
        excess_q0=float(np.min(q0v - pv)),
        excess_q1=float(np.min(q1v - pb)),
        violations=tuple(violations),
    )


def read_nodal_csv(path: str | Path, n_vertices: int) -> np.ndarray:
    """Nodal values from a ``node,value`` CSV (header optional)."""
    values = np.full(n_vertices, np.nan)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [t.strip() for t in line.split(",")]
        if lineno == 1 and not parts[0].lstrip("-").isdigit():
            continue
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'node,value'")
        try:
            node, val = int(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed record") from None
        if not 0 <= node < n_vertices:
            raise ValueError(f"{path}:{lineno}: node {node} out of range")
        values[node] = val
    if np.isnan(values).any():
        raise ValueError(f"{path}: missing values for {int(np.isnan(values).sum())} nodes")
    return values
