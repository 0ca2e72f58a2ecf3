"""Finite ball covers with per-ball exponent extrema and a smooth partition of unity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exponents import ExponentField, critical_lower_star, critical_star
from .mesh import Mesh

L_FLOOR = 1e-8
L_SAFETY = 1.1
DEFAULT_GAP_MARGIN = 1e-3
MAX_HALVINGS = 30
DENOMINATOR_MIN = 1e-12


class CoverError(ValueError):
    """No admissible cover, or a covering defect in the partition of unity."""


@dataclass(frozen=True, eq=False)
class CoverPOU:
    """Balls ``B_i(R)`` around ``centers`` with exponent extrema and bumps.

    Extrema arrays have one entry per ball; the boundary exponent extrema are
    ``nan`` for balls that do not meet the boundary.
    """

    mesh: Mesh
    N: int
    R: float
    centers: np.ndarray
    p_minus: np.ndarray
    p_plus: np.ndarray
    q0_minus: np.ndarray
    q0_plus: np.ndarray
    q1_minus: np.ndarray
    q1_plus: np.ndarray
    gap_margin: float = DEFAULT_GAP_MARGIN
    L: float | None = None
    order: int = 8
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.centers)

    @property
    def meets_boundary(self) -> np.ndarray:
        return ~np.isnan(self.q1_plus)

    @property
    def p_minus_star(self) -> np.ndarray:
        return np.array([critical_star(v, self.N) for v in self.p_minus])

    @property
    def p_minus_lower_star(self) -> np.ndarray:
        return np.array([critical_lower_star(v, self.N) for v in self.p_minus])

    @property
    def q1_dominates_p(self) -> np.ndarray:
        """Balls on the boundary where the largest p is at most the largest q1."""
        out = np.ones(self.m, dtype=bool)
        mb = self.meets_boundary
        out[mb] = self.p_plus[mb] <= self.q1_plus[mb]
        return out

    def bumps(self, points) -> np.ndarray:
        """Unnormalised bumps, shape ``(npts, m)``; exactly zero outside each ball."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1) / self.R**2
        out = np.zeros_like(d2)
        inside = d2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - d2[inside]))
        return out

    def xi(self, points) -> np.ndarray:
        """Partition of unity values, shape ``(npts, m)``."""
        raw = self.bumps(points)
        denom = raw.sum(axis=1)
        if np.any(denom < DENOMINATOR_MIN):
            bad = np.atleast_2d(points)[int(np.argmin(denom))]
            raise CoverError(f"covering defect: bump sum {denom.min():.3e} at x={tuple(bad)}")
        return raw / denom[:, None]

    def grad_xi(self, points, step: float | None = None) -> np.ndarray:
        """Central finite-difference gradients, shape ``(npts, m, d)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = step if step is not None else 1e-6 * self.R
        d = pts.shape[1]
        out = np.empty((len(pts), self.m, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            out[:, :, j] = (self.xi(pts + e) - self.xi(pts - e)) / (2.0 * h)
        return out

    def summary(self) -> dict:
        def clean(a):
            return [None if math.isnan(v) else float(v) for v in a]

        return {
            "R": float(self.R),
            "m": int(self.m),
            "L": None if self.L is None else float(self.L),
            "gap_margin": float(self.gap_margin),
            "centers": [[float(c) for c in row] for row in self.centers],
            "p_minus": clean(self.p_minus),
            "p_plus": clean(self.p_plus),
            "q0_minus": clean(self.q0_minus),
            "q0_plus": clean(self.q0_plus),
            "q1_minus": clean(self.q1_minus),
            "q1_plus": clean(self.q1_plus),
        }


def _grid_centers(mesh: Mesh, R: float) -> np.ndarray:
    lo, hi = mesh.bounding_box
    axes = [lo[j] + R * np.arange(math.ceil((hi[j] - lo[j]) / R - 1e-12) + 1) for j in range(mesh.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def ball_extrema(mesh, p, q0, q1, centers, R):
    """Per-ball extrema over sample points in the open balls."""
    si = mesh.interior_samples(p.order)
    sb = mesh.boundary_samples(q1.order)
    pv, q0v, q1v = p.sample_values(), q0.sample_values(), q1.sample_values()
    rows = []
    keep = []
    for c in centers:
        ini = np.linalg.norm(si.points - c, axis=1) < R
        if not ini.any():
            continue
        onb = np.linalg.norm(sb.points - c, axis=1) < R
        keep.append(c)
        rows.append(
            (
                pv[ini].min(),
                pv[ini].max(),
                q0v[ini].min(),
                q0v[ini].max(),
                q1v[onb].min() if onb.any() else np.nan,
                q1v[onb].max() if onb.any() else np.nan,
            )
        )
    return np.array(keep), np.array(rows, dtype=float)


def _gap_slack(rows: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    ps = np.array([critical_star(v, N) for v in rows[:, 0]])
    pl = np.array([critical_lower_star(v, N) for v in rows[:, 0]])
    with np.errstate(invalid="ignore"):
        s0 = ps - rows[:, 3]
        s1 = np.where(np.isnan(rows[:, 5]), np.inf, pl - rows[:, 5])
    return s0, s1


def build_cover(
    mesh: Mesh,
    p: ExponentField,
    q0: ExponentField,
    q1: ExponentField,
    N: int,
    gap_margin: float = DEFAULT_GAP_MARGIN,
    max_halvings: int = MAX_HALVINGS,
) -> CoverPOU:
    """Largest dyadic radius whose grid cover satisfies both gap conditions."""
    if gap_margin < 0:
        raise ValueError("gap_margin must be nonnegative")
    R0 = mesh.diameter
    worst = None
    for j in range(max_halvings + 1):
        R = R0 / 2**j
        centers, rows = ball_extrema(mesh, p, q0, q1, _grid_centers(mesh, R), R)
        s0, s1 = _gap_slack(rows, N)
        slack = np.minimum(s0, s1)
        if np.all(slack >= gap_margin):
            return CoverPOU(
                mesh=mesh,
                N=N,
                R=R,
                centers=centers,
                p_minus=rows[:, 0],
                p_plus=rows[:, 1],
                q0_minus=rows[:, 2],
                q0_plus=rows[:, 3],
                q1_minus=rows[:, 4],
                q1_plus=rows[:, 5],
                gap_margin=gap_margin,
                order=p.order,
            )
        i = int(np.argmin(slack))
        worst = (R, centers[i], float(slack[i]))
    R, c, s = worst
    raise CoverError(
        f"no admissible cover after {max_halvings} halvings; worst ball at "
        f"center {tuple(c)} with R={R:.3e} has gap slack {s:.3e} < {gap_margin}"
    )


def dense_points(mesh: Mesh, n1d: int | None = None) -> np.ndarray:
    """Lattice of points of the closed domain plus the mesh sample points."""
    lo, hi = mesh.bounding_box
    if n1d is None:
        n1d = 4001 if mesh.dim == 1 else 161
    axes = [np.linspace(lo[j], hi[j], n1d) for j in range(mesh.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    lattice = np.column_stack([g.ravel() for g in grids])
    inside = mesh.contains(lattice)
    return np.vstack([lattice[inside], mesh.vertices, mesh.boundary_samples().points])


def build_partition_of_unity(cover: CoverPOU, points: np.ndarray | None = None) -> CoverPOU:
    """Attach the normalised bump partition and the gradient bound ``L``."""
    pts = dense_points(cover.mesh) if points is None else np.atleast_2d(points)
    cover.xi(pts)  # raises on a covering defect
    gmax = 0.0
    for s in range(0, len(pts), 20000):
        g = np.linalg.norm(cover.grad_xi(pts[s : s + 20000]), axis=2)
        gmax = max(gmax, float(g.max()))
    return replace(cover, L=max(L_SAFETY * gmax, L_FLOOR), _cache={})


def single_ball_cover(mesh, p, q0, q1, N, center=None, R=None, gap_margin=DEFAULT_GAP_MARGIN) -> CoverPOU:
    """One ball containing the whole domain."""
    if center is None:
        lo, hi = mesh.bounding_box
        center = 0.5 * (lo + hi)
    if R is None:
        R = 2.0 * float(np.max(np.linalg.norm(mesh.vertices - center, axis=1))) + 1e-12
    centers, rows = ball_extrema(mesh, p, q0, q1, np.atleast_2d(center), R)
    return CoverPOU(mesh, N, R, centers, *rows.T, gap_margin=gap_margin, order=p.order)
