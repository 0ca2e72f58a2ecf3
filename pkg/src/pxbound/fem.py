"""P1 finite elements for the p(x)-Laplacian with a nonlinear boundary flux.

The catalog problem is

    -div(|grad u|^{p-2} grad u) = beta0 sign(u)|u|^{q0-1} + beta1 f   in the domain,
    |grad u|^{p-2} grad u . nu  = gamma0 sign(u)|u|^{q1-1} + gamma1 g on the boundary.

With ``beta0 <= 0`` and ``gamma0 <= 0`` it is the Euler-Lagrange equation of
a strictly convex energy, which :func:`solve` minimises by damped Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp

from .discrete import DiscreteFunction
from .exponents import ExponentField
from .expressions import Expression, X, Y, lambdify_xy
from .mesh import Geometry, Mesh, generate_mesh  # noqa: F401  (re-exported)
from .quadrature import DEFAULT_ORDER
from .vexp_norms import abs_power

STRUCTURE_FLOOR = 1e-6
SUP_SAFETY = 1.01


class NonConvergenceError(RuntimeError):
    """Newton iteration failed; carries the last iterate and its residual."""

    def __init__(self, message: str, iterate: DiscreteFunction, residual_norm: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class StructureData:
    """Constants of the growth conditions on the flux, source and boundary terms."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    b0: float
    b1: float
    b2: float
    c0: float
    c1: float

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "a3", "a4", "a5", "b0", "b1", "b2", "c0", "c1"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"structure constant {name} must be finite and >= 0, got {v}")
        if self.a3 <= 0:
            raise ValueError("structure constant a3 must be positive")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Mesh, exponents, catalog coefficients, data and structure constants."""

    mesh: Mesh
    p: ExponentField
    q0: ExponentField
    q1: ExponentField
    N: int
    structure: StructureData
    beta0: float = 0.0
    beta1: float = 0.0
    gamma0: float = 0.0
    gamma1: float = 0.0
    f: Callable | None = None
    g: Callable | None = None
    order: int = DEFAULT_ORDER
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.p.mesh is not self.mesh or self.q0.mesh is not self.mesh or self.q1.mesh is not self.mesh:
            raise ValueError("exponent fields must live on the problem mesh")
        if self.q1.domain != "boundary":
            raise ValueError("q1 must be a boundary field")
        if self.N < 2:
            raise ValueError("ambient dimension N must be >= 2")
        if self.N < self.mesh.dim:
            raise ValueError("ambient dimension N is smaller than the mesh dimension")

    @property
    def variational(self) -> bool:
        return True

    @property
    def convex(self) -> bool:
        return self.beta0 <= 0 and self.gamma0 <= 0

    def f_values(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.f is None:
            return np.zeros(pts.shape[:-1])
        return np.broadcast_to(np.asarray(self.f(pts), dtype=float), pts.shape[:-1])

    def g_values(self, points, normals) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.g is None:
            return np.zeros(pts.shape[:-1])
        return np.broadcast_to(np.asarray(self.g(pts, normals), dtype=float), pts.shape[:-1])

    def f_quad(self) -> np.ndarray:
        if "f" not in self._cache:
            self._cache["f"] = self.f_values(self.mesh.cell_quadrature(self.order).points)
        return self._cache["f"]

    def g_quad(self) -> np.ndarray:
        if "g" not in self._cache:
            q = self.mesh.facet_quadrature(self.order)
            nrm = np.broadcast_to(self.mesh.normals[:, None, :], q.points.shape)
            self._cache["g"] = self.g_values(q.points, nrm)
        return self._cache["g"]

    def mirrored(self) -> "ProblemInstance":
        """Problem solved by ``-u`` whenever ``u`` solves this one.

        Flipping the sign of the data coefficients maps subsolutions to
        supersolutions; the structure constants are unchanged.
        """
        return replace(self, beta1=-self.beta1, gamma1=-self.gamma1, name=self.name + "~mirror", _cache={})

    def with_structure(self, structure: StructureData) -> "ProblemInstance":
        return replace(self, structure=structure, _cache={})


# ---------------------------------------------------------------------------
# catalog nonlinearities
def flux(grad: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``|xi|^{p-2} xi`` for gradients ``(..., d)`` and exponents ``(...)``."""
    gn = np.linalg.norm(grad, axis=-1)
    coef = abs_power(gn, p - 2.0) if np.all(p >= 2) else _safe_pow(gn, p - 2.0)
    return coef[..., None] * grad


def _safe_pow(gn, e):
    out = np.zeros(np.broadcast(gn, e).shape)
    gb = np.broadcast_to(gn, out.shape)
    eb = np.broadcast_to(e, out.shape)
    nz = gb > 0
    out[nz] = np.power(gb[nz], eb[nz])
    return out


def signed_power(s: np.ndarray, e: np.ndarray) -> np.ndarray:
    """``sign(s) |s|^{e}``."""
    return np.sign(s) * abs_power(s, e)


def source_term(prob: ProblemInstance, s, q0, fvals) -> np.ndarray:
    return prob.beta0 * signed_power(s, q0 - 1.0) + prob.beta1 * fvals


def boundary_term(prob: ProblemInstance, s, q1, gvals) -> np.ndarray:
    return prob.gamma0 * signed_power(s, q1 - 1.0) + prob.gamma1 * gvals


# ---------------------------------------------------------------------------
# residual, energy and Jacobian
def _check(u: DiscreteFunction, prob: ProblemInstance):
    if u.mesh is not prob.mesh:
        raise ValueError("function does not live on the problem mesh")


def _scatter(mesh_entities: np.ndarray, local: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(mesh_entities.ravel(), weights=local.ravel(), minlength=n)


def _residual(u: DiscreteFunction, prob: ProblemInstance, mu: float) -> np.ndarray:
    mesh = prob.mesh
    order = prob.order
    cq = mesh.cell_quadrature(order)
    fq = mesh.facet_quadrature(order)
    pq = prob.p.at_cell_quadrature(order)
    grad = u.gradients
    gn2 = (grad**2).sum(axis=1)
    if mu > 0:
        kappa = (cq.weights * np.power(gn2[:, None] + mu * mu, 0.5 * (pq - 2.0))).sum(axis=1)
    else:
        kappa = (cq.weights * _safe_pow(np.sqrt(gn2)[:, None], pq - 2.0)).sum(axis=1)
    local = kappa[:, None] * np.einsum("cd,cad->ca", grad, mesh.grad_basis)
    uq = u.at_cell_quadrature(order)
    b = source_term(prob, uq, prob.q0.at_cell_quadrature(order), prob.f_quad())
    local = local - (cq.weights * b) @ cq.bary
    res = _scatter(mesh.cells, local, mesh.n_vertices)
    ub = u.at_facet_quadrature(order)
    c = boundary_term(prob, ub, prob.q1.at_facet_quadrature(order), prob.g_quad())
    res -= _scatter(mesh.bfacets, (fq.weights * c) @ fq.bary, mesh.n_vertices)
    return res


def assemble_residual(u: DiscreteFunction, prob: ProblemInstance) -> np.ndarray:
    """Weak residual against every nodal basis function (unregularised flux)."""
    _check(u, prob)
    return _residual(u, prob, 0.0)


def energy(u: DiscreteFunction, prob: ProblemInstance, mu: float = 0.0) -> float:
    """Discrete energy whose first variation is the residual."""
    _check(u, prob)
    mesh, order = prob.mesh, prob.order
    cq = mesh.cell_quadrature(order)
    fq = mesh.facet_quadrature(order)
    pq = prob.p.at_cell_quadrature(order)
    gn2 = (u.gradients**2).sum(axis=1)[:, None]
    grad_part = np.power(gn2 + mu * mu, 0.5 * pq) / pq
    uq = u.at_cell_quadrature(order)
    q0 = prob.q0.at_cell_quadrature(order)
    vol = grad_part - prob.beta0 * abs_power(uq, q0) / q0 - prob.beta1 * prob.f_quad() * uq
    ub = u.at_facet_quadrature(order)
    q1 = prob.q1.at_facet_quadrature(order)
    bnd = -prob.gamma0 * abs_power(ub, q1) / q1 - prob.gamma1 * prob.g_quad() * ub
    return math.fsum((cq.weights * vol).sum(axis=1)) + math.fsum((fq.weights * bnd).sum(axis=1))


def jacobian(u: DiscreteFunction, prob: ProblemInstance, mu: float = 1e-8) -> sps.csr_matrix:
    """Hessian of the regularised energy (sparse, symmetric)."""
    _check(u, prob)
    mesh, order = prob.mesh, prob.order
    cq = mesh.cell_quadrature(order)
    fq = mesh.facet_quadrature(order)
    pq = prob.p.at_cell_quadrature(order)
    grad = u.gradients
    G = mesh.grad_basis
    base = ((grad**2).sum(axis=1))[:, None] + mu * mu
    k1 = (cq.weights * np.power(base, 0.5 * (pq - 2.0))).sum(axis=1)
    k2 = (cq.weights * (pq - 2.0) * np.power(base, 0.5 * (pq - 4.0))).sum(axis=1)
    gphi = np.einsum("cd,cad->ca", grad, G)
    Kc = k1[:, None, None] * np.einsum("cad,cbd->cab", G, G) + k2[:, None, None] * (
        gphi[:, :, None] * gphi[:, None, :]
    )
    uq = u.at_cell_quadrature(order)
    q0 = prob.q0.at_cell_quadrature(order)
    cm = -prob.beta0 * (q0 - 1.0) * np.power(uq * uq + mu * mu, 0.5 * (q0 - 2.0))
    Kc = Kc + np.einsum("cq,qa,qb->cab", cq.weights * cm, cq.bary, cq.bary)
    ub = u.at_facet_quadrature(order)
    q1 = prob.q1.at_facet_quadrature(order)
    bm = -prob.gamma0 * (q1 - 1.0) * np.power(ub * ub + mu * mu, 0.5 * (q1 - 2.0))
    Kf = np.einsum("fq,qa,qb->fab", fq.weights * bm, fq.bary, fq.bary)
    n = mesh.n_vertices
    nl = mesh.cells.shape[1]
    rows = np.concatenate([np.repeat(mesh.cells, nl, axis=1).ravel(), np.repeat(mesh.bfacets, mesh.bfacets.shape[1], axis=1).ravel()])
    cols = np.concatenate([np.tile(mesh.cells, (1, nl)).ravel(), np.tile(mesh.bfacets, (1, mesh.bfacets.shape[1])).ravel()])
    data = np.concatenate([Kc.ravel(), Kf.ravel()])
    return sps.csr_matrix((data, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# solver
@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200
    mu: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.mu < 0:
            raise ValueError("regularisation mu must be >= 0")


@dataclass
class SolveInfo:
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    descent_fallbacks: int = 0
    options: SolverOptions | None = None


def solve(
    prob: ProblemInstance,
    init: DiscreteFunction | None = None,
    tol: float | None = None,
    options: SolverOptions | None = None,
    return_info: bool = False,
):
    """Damped Newton on the regularised energy until the true residual is below ``tol``."""
    opts = options or SolverOptions()
    if tol is not None:
        opts = replace(opts, tol=tol)
    u = init if init is not None else DiscreteFunction.constant(prob.mesh, 0.0)
    _check(u, prob)
    info = SolveInfo(options=opts)
    vals = np.array(u.values, dtype=float)
    for it in range(opts.max_iter + 1):
        cur = DiscreteFunction(prob.mesh, vals)
        res = _residual(cur, prob, 0.0)
        rnorm = float(np.max(np.abs(res)))
        e0 = energy(cur, prob, opts.mu)
        info.residual_norms.append(rnorm)
        info.energies.append(e0)
        info.iterations = it
        if rnorm <= opts.tol:
            return (cur, info) if return_info else cur
        if it == opts.max_iter:
            break
        grad = _residual(cur, prob, opts.mu)
        H = jacobian(cur, prob, opts.mu)
        try:
            d = spla.spsolve(H.tocsc(), -grad)
        except RuntimeError:
            d = np.full_like(grad, np.nan)
        slope = float(grad @ d)
        if not np.all(np.isfinite(d)) or slope >= 0:
            d = -grad
            slope = float(grad @ d)
            info.descent_fallbacks += 1
        roundoff = 1e-14 * (1.0 + abs(e0))
        t = 1.0
        while True:
            trial = vals + t * d
            e1 = energy(DiscreteFunction(prob.mesh, trial), prob, opts.mu)
            if np.isfinite(e1) and e1 <= e0 + opts.armijo * t * slope + roundoff:
                break
            t *= opts.backtrack
            if t < opts.min_step:
                raise NonConvergenceError(
                    f"line search failed at iteration {it} (residual {rnorm:.3e})", cur, rnorm
                )
        info.steps.append(t)
        vals = trial
    raise NonConvergenceError(
        f"no convergence in {opts.max_iter} iterations (residual {rnorm:.3e})", cur, rnorm
    )


# ---------------------------------------------------------------------------
# residual checks
@dataclass(frozen=True)
class ResidualReport:
    mode: str
    max_residual: float
    worst_index: int
    tol: float
    passed: bool


def weak_residual_check(u: DiscreteFunction, prob: ProblemInstance, tol: float, mode: str = "solution") -> ResidualReport:
    """Compare the residual with ``tol``; sub/super modes check one-sided signs."""
    res = assemble_residual(u, prob)
    if mode == "solution":
        viol = np.abs(res)
    elif mode == "sub":
        viol = res
    elif mode == "super":
        viol = -res
    else:
        raise ValueError(f"unknown residual mode {mode!r}")
    j = int(np.argmax(viol))
    worst = float(viol[j])
    return ResidualReport(mode, worst, j, tol, bool(worst <= tol))


# ---------------------------------------------------------------------------
# structure constants
def _sup_abs(values) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    return float(v.max()) if v.size else 0.0


def data_sups(prob: ProblemInstance) -> tuple[float, float]:
    """Sampled sup of |f| over the closure and of |g| over the boundary."""
    mesh = prob.mesh
    sf = max(_sup_abs(prob.f_quad()), _sup_abs(prob.f_values(mesh.interior_samples(prob.order).points)))
    sb = mesh.boundary_samples(prob.order)
    nrm = mesh.normals[sb.owner]
    sg = max(_sup_abs(prob.g_quad()), _sup_abs(prob.g_values(sb.points, nrm)))
    return sf, sg


def auto_structure(prob: ProblemInstance, floor: float = STRUCTURE_FLOOR) -> StructureData:
    """Structure constants satisfied by the catalog nonlinearities.

    The flux needs ``a0 = a3 = 1``; the source has no gradient dependence so
    ``b0 = 0``; the data sups get a 1% margin for sampling.
    """
    sf, sg = data_sups(prob)
    return StructureData(
        a0=1.0,
        a1=floor,
        a2=floor,
        a3=1.0,
        a4=floor,
        a5=floor,
        b0=0.0,
        b1=max(abs(prob.beta0), floor),
        b2=max(abs(prob.beta1) * sf * SUP_SAFETY, floor),
        c0=max(abs(prob.gamma0), floor),
        c1=max(abs(prob.gamma1) * sg * SUP_SAFETY, floor),
    )


@dataclass(frozen=True)
class StructureReport:
    passed: bool
    failures: dict
    samples: int


def _random_interior_points(mesh: Mesh, n: int, rng) -> np.ndarray:
    cells = rng.integers(0, mesh.n_cells, n)
    lam = rng.dirichlet(np.ones(mesh.dim + 1), n)
    return np.einsum("sa,sad->sd", lam, mesh.vertices[mesh.cells[cells]])


def _random_boundary_points(mesh: Mesh, n: int, rng):
    facets = rng.integers(0, mesh.n_facets, n)
    if mesh.dim == 1:
        return mesh.vertices[mesh.bfacets[facets, 0]], mesh.normals[facets]
    t = rng.random(n)[:, None]
    v = mesh.vertices[mesh.bfacets[facets]]
    return (1 - t) * v[:, 0] + t * v[:, 1], mesh.normals[facets]


def validate_structure(prob: ProblemInstance, n: int = 10_000, seed: int = 0) -> StructureReport:
    """Sample ``(x, s, xi)`` and test the four growth conditions exactly."""
    rng = np.random.default_rng(seed)
    s0 = prob.structure
    mesh = prob.mesh
    x = _random_interior_points(mesh, n, rng)
    p = prob.p.at_points(x, check=False)
    q0 = prob.q0.at_points(x, check=False)
    s = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-3, 2, n)
    s[: n // 50] = 0.0
    xi = rng.normal(size=(n, mesh.dim))
    xi *= (10.0 ** rng.uniform(-3, 2, n) / np.linalg.norm(xi, axis=1))[:, None]
    xi[n // 50 : n // 25] = 0.0
    A = flux(xi, p)
    An = np.linalg.norm(A, axis=1)
    xn = np.linalg.norm(xi, axis=1)
    fails = {}
    h1 = An <= s0.a0 * abs_power(xn, p - 1) + s0.a1 * abs_power(s, q0 * (p - 1) / p) + s0.a2
    h2 = (A * xi).sum(axis=1) >= s0.a3 * abs_power(xn, p) - s0.a4 * abs_power(s, q0) - s0.a5
    B = source_term(prob, s, q0, prob.f_values(x))
    h3 = np.abs(B) <= s0.b0 * abs_power(xn, p * (q0 - 1) / q0) + s0.b1 * abs_power(s, q0 - 1) + s0.b2
    xb, nb = _random_boundary_points(mesh, n, rng)
    q1 = prob.q1.at_points(xb, check=False)
    C = boundary_term(prob, s, q1, prob.g_values(xb, nb))
    h4 = np.abs(C) <= s0.c0 * abs_power(s, q1 - 1) + s0.c1
    for name, ok in (("H1", h1), ("H2", h2), ("H3", h3), ("H4", h4)):
        if not ok.all():
            fails[name] = int((~ok).sum())
    return StructureReport(not fails, fails, n)


# ---------------------------------------------------------------------------
# manufactured data
@dataclass(frozen=True)
class Manufactured:
    """Closed-form exact solution and its derived data callables."""

    u: Callable
    grad: Callable
    f: Callable
    g: Callable


def p_laplacian_divergence(u_expr: sp.Expr, p_expr: sp.Expr, dim: int):
    """Numerical ``div(|grad u|^{p-2} grad u)`` for closed-form ``u`` and ``p``.

    Uses the expanded form
    ``|g|^{p-2} (lap u + (p-2) g.H.g / |g|^2 + log|g| grad p . g)``
    with ``g = grad u`` and ``H`` the Hessian, so no derivative of ``|g|`` is
    taken symbolically.
    """
    syms = (X, Y)[:dim]
    gu = [sp.diff(u_expr, s) for s in syms]
    H = [[sp.diff(gu[i], s) for s in syms] for i in range(dim)]
    gp = [sp.diff(p_expr, s) for s in syms]
    f_g = [lambdify_xy(e) for e in gu]
    f_H = [[lambdify_xy(H[i][j]) for j in range(dim)] for i in range(dim)]
    f_gp = [lambdify_xy(e) for e in gp]
    f_p = lambdify_xy(p_expr)

    def div(points):
        pts = np.asarray(points, dtype=float)
        g = np.stack([fn(pts) for fn in f_g], axis=-1)
        gn2 = (g**2).sum(-1)
        gn = np.sqrt(gn2)
        pv = f_p(pts)
        lap = sum(f_H[i][i](pts) for i in range(dim))
        gHg = sum(g[..., i] * f_H[i][j](pts) * g[..., j] for i in range(dim) for j in range(dim))
        gpg = sum(f_gp[i](pts) * g[..., i] for i in range(dim))
        nz = gn > 0
        quad = np.where(nz, gHg / np.where(nz, gn2, 1.0), 0.0)
        logt = np.where(nz, np.log(np.where(nz, gn, 1.0)) * gpg, 0.0)
        coef = _safe_pow(gn, pv - 2.0)
        coef = np.where(nz, coef, np.where(pv == 2.0, 1.0, 0.0))
        return coef * (lap + (pv - 2.0) * quad + logt)

    return div, f_g


def manufactured_data(
    mesh: Mesh,
    p: Expression,
    q0: Expression,
    q1: Expression,
    u_exact: Expression,
    beta0: float,
    beta1: float,
    gamma0: float,
    gamma1: float,
) -> Manufactured:
    """Data ``f``, ``g`` that make ``u_exact`` solve the catalog problem."""
    if beta1 == 0 or gamma1 == 0:
        raise ValueError("manufactured data needs nonzero beta1 and gamma1")
    p, q0, q1, u_exact = (e if isinstance(e, Expression) else Expression(e) for e in (p, q0, q1, u_exact))
    dim = mesh.dim
    u_s = u_exact.to_sympy()
    div, f_g = p_laplacian_divergence(u_s, p.to_sympy(), dim)
    u_num = lambdify_xy(u_s)

    def grad(points):
        return np.stack([fn(np.asarray(points, dtype=float)) for fn in f_g], axis=-1)

    def f(points):
        uv = u_num(points)
        return (-div(points) - beta0 * signed_power(uv, q0(points) - 1.0)) / beta1

    def g(points, normals):
        pts = np.asarray(points, dtype=float)
        a = flux(grad(pts), p(pts))
        an = (a * np.asarray(normals, dtype=float)).sum(-1)
        uv = u_num(pts)
        return (an - gamma0 * signed_power(uv, q1(pts) - 1.0)) / gamma1

    return Manufactured(u=u_num, grad=grad, f=f, g=g)


def make_problem(
    mesh: Mesh,
    p,
    q0,
    q1,
    N: int,
    beta0: float = 0.0,
    beta1: float = 0.0,
    gamma0: float = 0.0,
    gamma1: float = 0.0,
    f=None,
    g=None,
    structure: StructureData | None = None,
    floor: float = STRUCTURE_FLOOR,
    order: int = DEFAULT_ORDER,
    name: str = "",
) -> ProblemInstance:
    """Assemble a problem; exponents may be expressions, strings or fields.

    ``f`` may be a callable of points or an expression; ``g`` a callable of
    ``(points, normals)`` or an expression in the coordinates.  Without
    explicit ``structure`` the constants come from :func:`auto_structure`.
    """

    def as_field(v, domain, label):
        if isinstance(v, ExponentField):
            return v
        return ExponentField(mesh, v, domain=domain, name=label, order=order)

    pf, q0f, q1f = as_field(p, "interior", "p"), as_field(q0, "interior", "q0"), as_field(q1, "boundary", "q1")
    if isinstance(f, (str, Expression)):
        fe = f if isinstance(f, Expression) else Expression(f)
        f = fe
    if isinstance(g, (str, Expression)):
        ge = g if isinstance(g, Expression) else Expression(g)

        def g(points, normals, _e=ge):
            return _e(points)

    dummy = StructureData(1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0)
    prob = ProblemInstance(mesh, pf, q0f, q1f, N, dummy, beta0, beta1, gamma0, gamma1, f, g, order, name)
    return prob.with_structure(structure if structure is not None else auto_structure(prob, floor))


def manufactured_problem(
    mesh: Mesh,
    p,
    q0,
    q1,
    N: int,
    u_exact,
    beta0: float = 0.0,
    beta1: float = 1.0,
    gamma0: float = -1.0,
    gamma1: float = 1.0,
    structure: StructureData | None = None,
    floor: float = STRUCTURE_FLOOR,
    order: int = DEFAULT_ORDER,
    name: str = "manufactured",
) -> tuple[ProblemInstance, Manufactured]:
    data = manufactured_data(mesh, p, q0, q1, u_exact, beta0, beta1, gamma0, gamma1)
    prob = make_problem(
        mesh, p, q0, q1, N, beta0, beta1, gamma0, gamma1, data.f, data.g, structure, floor, order, name
    )
    return prob, data


# ---------------------------------------------------------------------------
# export
def write_solution_csv(u: DiscreteFunction, path: str | Path) -> None:
    cols = ["node", "x", "y"][: 1 + u.mesh.dim] + ["u"]
    lines = [",".join(cols)]
    for i, (v, val) in enumerate(zip(u.mesh.vertices, u.values)):
        lines.append(",".join([str(i)] + [repr(float(c)) for c in v] + [repr(float(val))]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_residuals_csv(residual: np.ndarray, path: str | Path) -> None:
    lines = ["node,residual"] + [f"{i},{float(r)!r}" for i, r in enumerate(residual)]
    Path(path).write_text("\n".join(lines) + "\n")
