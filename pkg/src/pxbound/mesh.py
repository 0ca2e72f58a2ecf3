"""Simplicial meshes of intervals, rectangles and polygonal discs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .quadrature import DEFAULT_ORDER, reference_rule


@dataclass(frozen=True)
class Interval:
    a: float = 0.0
    b: float = 1.0

    @property
    def diameter(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Rectangle:
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    @property
    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)


@dataclass(frozen=True)
class Disc:
    cx: float = 0.0
    cy: float = 0.0
    r: float = 1.0

    @property
    def diameter(self) -> float:
        return 2.0 * self.r


Geometry = Interval | Rectangle | Disc


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Quadrature:
    """Physical quadrature on every cell (or boundary facet).

    ``points`` has shape ``(n_entities, nq, dim)``, ``weights`` ``(n_entities, nq)``
    and ``bary`` ``(nq, n_local_vertices)`` holds the local basis values.
    """

    points: np.ndarray
    weights: np.ndarray
    bary: np.ndarray
    order: int


@dataclass(frozen=True)
class SampleSet:
    """Points of the closed domain (or boundary) used for extrema queries.

    Each point is tied to an ``owner`` entity (cell or facet) and carries its
    barycentric coordinates there, so nodal fields can be interpolated.
    """

    points: np.ndarray
    owner: np.ndarray
    bary: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    bfacets: np.ndarray
    geometry: Geometry | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim == 1:
            verts = verts[:, None]
        dim = verts.shape[1]
        if dim not in (1, 2):
            raise MeshError(f"only 1D and 2D meshes are supported, got dimension {dim}")
        cells = np.array(self.cells, dtype=np.int64).reshape(-1, dim + 1)
        if cells.size == 0:
            raise MeshError("mesh has no cells")
        if cells.min() < 0 or cells.max() >= len(verts):
            raise MeshError("cell references a vertex index out of range")

        # orient cells positively
        vol = _signed_volumes(verts, cells)
        flip = vol < 0
        if flip.any():
            cells = cells.copy()
            cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()
            vol = np.abs(vol)
        if np.any(vol <= 0):
            raise MeshError(f"degenerate cell {int(np.argmin(vol))} with non-positive volume")

        facets = np.array(self.bfacets, dtype=np.int64).reshape(-1, dim)
        facet_cell = _facet_owners(cells, dim)
        if facets.size == 0:
            boundary = sorted(k for k, v in facet_cell.items() if len(v) == 1)
            facets = np.array(boundary, dtype=np.int64).reshape(-1, dim)
        owner = np.empty(len(facets), dtype=np.int64)
        local = np.empty((len(facets), dim), dtype=np.int64)
        for j, f in enumerate(facets):
            key = tuple(sorted(int(v) for v in f))
            owners = facet_cell.get(key)
            if owners is None or len(owners) != 1:
                n = 0 if owners is None else len(owners)
                raise MeshError(f"boundary facet {j} {key} belongs to {n} cells, expected exactly 1")
            owner[j] = owners[0]
            local[j] = [int(np.nonzero(cells[owners[0]] == v)[0][0]) for v in f]

        normals, areas = _facet_normals(verts, cells, facets, owner)

        grad = _basis_gradients(verts, cells)
        for name, arr in [
            ("vertices", verts),
            ("cells", cells),
            ("bfacets", facets),
        ]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name, arr in [
            ("volumes", vol),
            ("facet_cell", owner),
            ("facet_local", local),
            ("normals", normals),
            ("facet_areas", areas),
            ("grad_basis", grad),
        ]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # basic sizes -------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.bfacets)

    @property
    def h(self) -> float:
        """Largest cell diameter."""
        if "h" not in self._cache:
            pts = self.vertices[self.cells]
            diam = 0.0
            for a in range(self.dim + 1):
                for b in range(a + 1, self.dim + 1):
                    diam = max(diam, float(np.max(np.linalg.norm(pts[:, a] - pts[:, b], axis=1))))
            self._cache["h"] = diam
        return self._cache["h"]

    @property
    def measure(self) -> float:
        return float(self.volumes.sum())

    @property
    def boundary_measure(self) -> float:
        return float(self.facet_areas.sum())

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.bfacets)

    @property
    def diameter(self) -> float:
        if self.geometry is not None:
            return float(self.geometry.diameter)
        if "diameter" not in self._cache:
            b = self.vertices[self.boundary_vertices]
            d = np.sqrt(((b[:, None, :] - b[None, :, :]) ** 2).sum(-1))
            self._cache["diameter"] = float(d.max())
        return self._cache["diameter"]

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # quadrature --------------------------------------------------------------
    def cell_quadrature(self, order: int = DEFAULT_ORDER) -> Quadrature:
        key = ("cellq", order)
        if key not in self._cache:
            bary, w = reference_rule(self.dim, order)
            pts = np.einsum("qa,cad->cqd", bary, self.vertices[self.cells])
            weights = self.volumes[:, None] * w[None, :]
            pts.setflags(write=False)
            weights.setflags(write=False)
            self._cache[key] = Quadrature(pts, weights, bary, order)
        return self._cache[key]

    def facet_quadrature(self, order: int = DEFAULT_ORDER) -> Quadrature:
        key = ("facetq", order)
        if key not in self._cache:
            if self.dim == 1:
                bary = np.ones((1, 1))
                w = np.ones(1)
            else:
                bary, w = reference_rule(1, order)
            pts = np.einsum("qa,fad->fqd", bary, self.vertices[self.bfacets])
            weights = self.facet_areas[:, None] * w[None, :]
            pts.setflags(write=False)
            weights.setflags(write=False)
            self._cache[key] = Quadrature(pts, weights, bary, order)
        return self._cache[key]

    # sample sets for extrema ---------------------------------------------------
    def interior_samples(self, order: int = DEFAULT_ORDER) -> SampleSet:
        """Nodes, cell quadrature points, sub-cell midpoints and boundary
        quadrature points, all expressed in an owning cell."""
        key = ("isamples", order)
        if key in self._cache:
            return self._cache[key]
        d = self.dim
        nc = self.n_cells
        owners, barys = [], []

        # vertices: one owning cell each
        vcell = np.full(self.n_vertices, -1, dtype=np.int64)
        vloc = np.zeros(self.n_vertices, dtype=np.int64)
        for a in range(d + 1):
            vcell[self.cells[:, a]] = np.arange(nc)
            vloc[self.cells[:, a]] = a
        used = vcell >= 0
        vb = np.zeros((int(used.sum()), d + 1))
        vb[np.arange(len(vb)), vloc[used]] = 1.0
        owners.append(vcell[used])
        barys.append(vb)

        qb, _ = reference_rule(d, order)
        owners.append(np.repeat(np.arange(nc), len(qb)))
        barys.append(np.tile(qb, (nc, 1)))

        # one bisection refinement: edge midpoints and centroid
        mids = []
        for a in range(d + 1):
            for b in range(a + 1, d + 1):
                m = np.zeros(d + 1)
                m[a] = m[b] = 0.5
                mids.append(m)
        if d == 2:
            mids.append(np.full(3, 1.0 / 3.0))
        mids = np.array(mids)
        owners.append(np.repeat(np.arange(nc), len(mids)))
        barys.append(np.tile(mids, (nc, 1)))

        if d == 2:
            fq = self.facet_quadrature(order)
            fb = np.vstack([fq.bary, [[0.5, 0.5]]])
            for j in range(self.n_facets):
                cb = np.zeros((len(fb), 3))
                cb[:, self.facet_local[j, 0]] = fb[:, 0]
                cb[:, self.facet_local[j, 1]] = fb[:, 1]
                owners.append(np.full(len(fb), self.facet_cell[j]))
                barys.append(cb)

        owner = np.concatenate(owners)
        bary = np.vstack(barys)
        pts = np.einsum("sa,sad->sd", bary, self.vertices[self.cells[owner]])
        out = SampleSet(pts, owner, bary)
        self._cache[key] = out
        return out

    def boundary_samples(self, order: int = DEFAULT_ORDER) -> SampleSet:
        """Boundary nodes, facet quadrature points and facet midpoints."""
        key = ("bsamples", order)
        if key in self._cache:
            return self._cache[key]
        d = self.dim
        nf = self.n_facets
        if d == 1:
            owner = np.arange(nf)
            bary = np.ones((nf, 1))
        else:
            fq = self.facet_quadrature(order)
            local = np.vstack([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], fq.bary])
            owner = np.repeat(np.arange(nf), len(local))
            bary = np.tile(local, (nf, 1))
        pts = np.einsum("sa,sad->sd", bary, self.vertices[self.bfacets[owner]])
        out = SampleSet(pts, owner, bary)
        self._cache[key] = out
        return out

    # point location ------------------------------------------------------------
    def locate(self, points, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Containing cell and barycentric coordinates; cell -1 if outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            pts = pts.reshape(-1, self.dim)
        v0 = self.vertices[self.cells[:, 0]]
        if self.dim == 1:
            span = self.vertices[self.cells[:, 1], 0] - v0[:, 0]
            lam1 = (pts[:, 0][:, None] - v0[None, :, 0]) / span[None, :]
            lam = np.stack([1.0 - lam1, lam1], axis=-1)
        else:
            e1 = self.vertices[self.cells[:, 1]] - v0
            e2 = self.vertices[self.cells[:, 2]] - v0
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            rel = pts[:, None, :] - v0[None, :, :]
            l1 = (rel[..., 0] * e2[None, :, 1] - rel[..., 1] * e2[None, :, 0]) / det
            l2 = (e1[None, :, 0] * rel[..., 1] - e1[None, :, 1] * rel[..., 0]) / det
            lam = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        inside = np.all(lam >= -tol, axis=-1)
        cell = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
        bary = lam[np.arange(len(pts)), np.maximum(cell, 0)]
        return cell, bary

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Membership of points in the closed meshed domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.dim)
        lo, hi = self.bounding_box
        slack = tol * max(1.0, self.diameter)
        in_box = np.all((pts >= lo - slack) & (pts <= hi + slack), axis=1)
        if isinstance(self.geometry, (Interval, Rectangle)):
            return in_box
        if isinstance(self.geometry, Disc):
            hull = Delaunay(self.vertices[self.boundary_vertices])
            return in_box & (hull.find_simplex(pts, tol=tol) >= 0)
        out = np.zeros(len(pts), dtype=bool)
        chunk = max(1, 2_000_000 // self.n_cells)
        for s in range(0, len(pts), chunk):
            cell, _ = self.locate(pts[s : s + chunk], tol=tol)
            out[s : s + chunk] = cell >= 0
        return out

    def on_boundary(self, points, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Facet index and facet barycentrics of boundary points; -1 if off Γ."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, self.dim)
        fv = self.vertices[self.bfacets]
        if self.dim == 1:
            dist = np.abs(pts[:, None, 0] - fv[None, :, 0, 0])
            facet = np.where(dist.min(axis=1) <= tol, dist.argmin(axis=1), -1)
            return facet, np.ones((len(pts), 1))
        a, b = fv[:, 0], fv[:, 1]
        t = b - a
        rel = pts[:, None, :] - a[None]
        s = (rel * t[None]).sum(-1) / (t * t).sum(-1)[None]
        s = np.clip(s, 0.0, 1.0)
        proj = a[None] + s[..., None] * t[None]
        dist = np.linalg.norm(pts[:, None, :] - proj, axis=-1)
        facet = np.where(dist.min(axis=1) <= tol * max(1.0, self.diameter), dist.argmin(axis=1), -1)
        ss = s[np.arange(len(pts)), np.maximum(facet, 0)]
        return facet, np.column_stack([1.0 - ss, ss])


def _signed_volumes(verts, cells):
    if verts.shape[1] == 1:
        return verts[cells[:, 1], 0] - verts[cells[:, 0], 0]
    e1 = verts[cells[:, 1]] - verts[cells[:, 0]]
    e2 = verts[cells[:, 2]] - verts[cells[:, 0]]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _facet_owners(cells, dim):
    owners: dict[tuple, list[int]] = {}
    for c, cell in enumerate(cells):
        for a in range(dim + 1):
            key = tuple(sorted(int(v) for j, v in enumerate(cell) if j != a))
            owners.setdefault(key, []).append(c)
    return owners


def _facet_normals(verts, cells, facets, owner):
    dim = verts.shape[1]
    if dim == 1:
        other = np.array(
            [verts[cells[c][cells[c] != f[0]][0], 0] for f, c in zip(facets, owner)]
        )
        normals = np.sign(verts[facets[:, 0], 0] - other)[:, None]
        areas = np.ones(len(facets))
        return normals, areas
    a, b = verts[facets[:, 0]], verts[facets[:, 1]]
    t = b - a
    areas = np.linalg.norm(t, axis=1)
    n = np.column_stack([t[:, 1], -t[:, 0]]) / areas[:, None]
    centroid = verts[cells[owner]].mean(axis=1)
    flip = ((centroid - a) * n).sum(axis=1) > 0
    n[flip] *= -1.0
    return n, areas


def _basis_gradients(verts, cells):
    """Gradients of the P1 basis on every cell, shape ``(nc, d+1, d)``."""
    dim = verts.shape[1]
    if dim == 1:
        length = verts[cells[:, 1], 0] - verts[cells[:, 0], 0]
        g = np.stack([-1.0 / length, 1.0 / length], axis=1)
        return g[:, :, None]
    v = verts[cells]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # columns are edges
    inv = np.linalg.inv(jac)  # rows map physical -> reference
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.einsum("ar,crd->cad", ref, inv)


def generate_mesh(geometry: Geometry, h: float) -> Mesh:
    """Uniform mesh of ``geometry`` with target cell size ``h``."""
    if not h > 0:
        raise MeshError(f"mesh size must be positive, got {h}")
    if isinstance(geometry, Interval):
        length = geometry.b - geometry.a
        if length <= 0:
            raise MeshError("interval must have a < b")
        if h > length:
            raise MeshError(f"h = {h} larger than the interval length {length}")
        n = max(1, math.ceil(length / h - 1e-9))
        x = np.linspace(geometry.a, geometry.b, n + 1)
        cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return Mesh(x[:, None], cells, np.array([[0], [n]]), geometry)
    if isinstance(geometry, Rectangle):
        lx, ly = geometry.x1 - geometry.x0, geometry.y1 - geometry.y0
        if lx <= 0 or ly <= 0:
            raise MeshError("rectangle must have positive side lengths")
        if h > max(lx, ly):
            raise MeshError(f"h = {h} larger than the rectangle")
        nx = max(1, math.ceil(lx / h - 1e-9))
        ny = max(1, math.ceil(ly / h - 1e-9))
        xs = np.linspace(geometry.x0, geometry.x1, nx + 1)
        ys = np.linspace(geometry.y0, geometry.y1, ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        verts = np.column_stack([gx.ravel(), gy.ravel()])

        def vid(i, j):
            return i * (ny + 1) + j

        cells = []
        for i in range(nx):
            for j in range(ny):
                v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
                if (i + j) % 2 == 0:
                    cells.append((v00, v10, v11))
                    cells.append((v00, v11, v01))
                else:
                    cells.append((v00, v10, v01))
                    cells.append((v10, v11, v01))
        facets = []
        for i in range(nx):
            facets.append((vid(i, 0), vid(i + 1, 0)))
            facets.append((vid(i + 1, ny), vid(i, ny)))
        for j in range(ny):
            facets.append((vid(nx, j), vid(nx, j + 1)))
            facets.append((vid(0, j + 1), vid(0, j)))
        return Mesh(verts, np.array(cells), np.array(facets), geometry)
    if isinstance(geometry, Disc):
        if geometry.r <= 0:
            raise MeshError("disc radius must be positive")
        if h > geometry.r:
            raise MeshError(f"h = {h} larger than the disc radius {geometry.r}")
        nr = max(1, math.ceil(geometry.r / h - 1e-9))
        pts = [(geometry.cx, geometry.cy)]
        for j in range(1, nr + 1):
            rad = geometry.r * j / nr
            nj = 6 * j
            ang = 2.0 * np.pi * (np.arange(nj) + 0.5 * (j % 2)) / nj
            pts.extend(zip(geometry.cx + rad * np.cos(ang), geometry.cy + rad * np.sin(ang)))
        verts = np.array(pts)
        tri = Delaunay(verts)
        hull = tri.convex_hull
        return Mesh(verts, tri.simplices, hull, geometry)
    raise MeshError(f"unsupported geometry {geometry!r}")


def read_mesh(path: str | Path) -> Mesh:
    """Read the plain-text ``vertex`` / ``cell`` / ``bfacet`` format."""
    verts, cells, facets = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "vertex":
                verts.append([float(v) for v in rest])
            elif tag == "cell":
                cells.append([int(v) for v in rest])
            elif tag == "bfacet":
                facets.append([int(v) for v in rest])
            else:
                raise MeshError(f"{path}:{lineno}: unknown record {tag!r}")
        except ValueError as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"{path}:{lineno}: malformed {tag} record") from None
    if not verts or not cells:
        raise MeshError(f"{path}: mesh needs vertex and cell records")
    dims = {len(v) for v in verts}
    if len(dims) != 1:
        raise MeshError(f"{path}: inconsistent vertex dimensions")
    return Mesh(np.array(verts), np.array(cells), np.array(facets, dtype=np.int64))


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append("vertex " + " ".join(repr(float(c)) for c in v))
    for c in mesh.cells:
        lines.append("cell " + " ".join(str(int(i)) for i in c))
    for f in mesh.bfacets:
        lines.append("bfacet " + " ".join(str(int(i)) for i in f))
    Path(path).write_text("\n".join(lines) + "\n")
