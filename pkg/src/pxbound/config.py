"""Flat ``key = value`` problem configuration with line-numbered diagnostics.

Keys are dotted (``problem.p``, ``solver.tol``, ...).  Blank lines and text
after ``#`` are ignored.  Relative file references are resolved against the
directory of the configuration file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .exponents import ExponentField, read_nodal_csv, validate_exponent_triple
from .expressions import Expression, ExpressionError
from .fem import STRUCTURE_FLOOR, ProblemInstance, SolverOptions, StructureData, make_problem, manufactured_data
from .mesh import Disc, Interval, Mesh, Rectangle, generate_mesh, read_mesh


class ConfigError(ValueError):
    """Bad configuration; the message names the line and key where possible."""


def _float(s: str) -> float:
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _floats(s: str) -> list[float]:
    return [_float(t) for t in s.replace(",", " ").split()]


def _int(s: str) -> int:
    v = int(s)
    return v


def _mode(s: str) -> str:
    if s not in ("sub", "super", "both"):
        raise ValueError("expected sub, super or both")
    return s


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s

    return parse


def _positive(conv):
    def parse(s):
        v = conv(s)
        if not v > 0:
            raise ValueError("must be > 0")
        return v

    return parse


def _at_least(conv, lo):
    def parse(s):
        v = conv(s)
        if v < lo:
            raise ValueError(f"must be >= {lo}")
        return v

    return parse


STRUCTURE_KEYS = ("a0", "a1", "a2", "a3", "a4", "a5", "b0", "b1", "b2", "c0", "c1")

SCHEMA = {
    "problem.name": str,
    "problem.geometry": _choice("interval", "rectangle", "disc", "mesh"),
    "problem.bounds": _floats,
    "problem.center": _floats,
    "problem.radius": _positive(_float),
    "problem.mesh_file": str,
    "problem.h": _positive(_float),
    "problem.N": _at_least(_int, 2),
    "problem.p": str,
    "problem.q0": str,
    "problem.q1": str,
    "problem.A": _choice("p_laplacian"),
    "problem.B": _choice("power_source"),
    "problem.C": _choice("power_flux"),
    "problem.beta0": _float,
    "problem.beta1": _float,
    "problem.gamma0": _float,
    "problem.gamma1": _float,
    "problem.f": str,
    "problem.g": str,
    "problem.manufactured": str,
    "problem.quadrature_order": _at_least(_int, 1),
    "problem.structure_floor": _positive(_float),
    **{f"problem.{k}": _at_least(_float, 0.0) for k in STRUCTURE_KEYS},
    "solver.tol": _positive(_float),
    "solver.max_iter": _at_least(_int, 1),
    "solver.mu": _at_least(_float, 0.0),
    "solver.initial": _float,
    "cover.gap_margin": _at_least(_float, 0.0),
    "cover.max_halvings": _at_least(_int, 0),
    "bound.mode": _mode,
    "bound.n_max": _at_least(_int, 1),
    "bound.embedding": _choice("estimate", "user"),
    "bound.C_emb": _at_least(_float, 1.0),
    "bound.C_tr": _at_least(_float, 1.0),
    "bound.samples": _at_least(_int, 1),
    "bound.resolution": _at_least(_int, 2),
    "bound.check_levels": _floats,
    "bound.structure_samples": _at_least(_int, 1),
    "spaces.u": str,
    "spaces.exponent": str,
}


@dataclass
class Config:
    values: dict
    lines: dict = field(default_factory=dict)
    base: Path = Path(".")

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __contains__(self, key):
        return key in self.values

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def where(self, key) -> str:
        return f"line {self.lines[key]}" if key in self.lines else "configuration"

    def path(self, key) -> Path:
        p = Path(self.require(key))
        return p if p.is_absolute() else self.base / p


def parse_config(text: str, base: Path | str = ".") -> Config:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        if not val:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        try:
            values[key] = SCHEMA[key](val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    return Config(values, lines, Path(base))


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {str(path)!r}: {exc.strerror}") from None
    return parse_config(text, path.parent)


# ---------------------------------------------------------------------------
def build_mesh(cfg: Config) -> Mesh:
    geo = cfg.require("problem.geometry")
    if geo == "mesh":
        return read_mesh(cfg.path("problem.mesh_file"))
    h = cfg.require("problem.h")
    if geo == "interval":
        b = cfg.get("problem.bounds", [0.0, 1.0])
        if len(b) != 2:
            raise ConfigError(f"{cfg.where('problem.bounds')}: interval needs 2 bounds")
        g = Interval(*b)
    elif geo == "rectangle":
        b = cfg.get("problem.bounds", [0.0, 1.0, 0.0, 1.0])
        if len(b) != 4:
            raise ConfigError(f"{cfg.where('problem.bounds')}: rectangle needs 4 bounds")
        g = Rectangle(*b)
    else:
        c = cfg.get("problem.center", [0.0, 0.0])
        if len(c) != 2:
            raise ConfigError(f"{cfg.where('problem.center')}: disc center needs 2 coordinates")
        g = Disc(c[0], c[1], cfg.get("problem.radius", 1.0))
    return generate_mesh(g, h)


def _exponent(cfg: Config, key: str, mesh: Mesh, domain: str, order: int) -> ExponentField:
    src = cfg.require(key)
    if src.startswith("csv:"):
        p = Path(src[4:].strip())
        p = p if p.is_absolute() else cfg.base / p
        try:
            source = read_nodal_csv(p, mesh.n_vertices)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{cfg.where(key)}: cannot read nodal exponent file: {exc}") from None
    else:
        source = src
    try:
        return ExponentField(mesh, source, domain=domain, name=key.split(".")[-1], order=order)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where(key)}: {exc}") from None


def build_problem(cfg: Config) -> tuple[ProblemInstance, object]:
    """Problem instance and the manufactured data (``None`` when not manufactured)."""
    mesh = build_mesh(cfg)
    order = cfg.get("problem.quadrature_order", 8)
    N = cfg.get("problem.N", max(2, mesh.dim))
    if N < mesh.dim:
        raise ConfigError(f"{cfg.where('problem.N')}: N must be at least the mesh dimension")
    p = _exponent(cfg, "problem.p", mesh, "interior", order)
    q0 = _exponent(cfg, "problem.q0", mesh, "interior", order)
    q1 = _exponent(cfg, "problem.q1", mesh, "boundary", order)
    rep = validate_exponent_triple(p, q0, q1, N)
    if not rep.valid:
        raise ConfigError("; ".join(rep.violations))
    coeffs = {k: cfg.get(f"problem.{k}", d) for k, d in (("beta0", 0.0), ("beta1", 1.0), ("gamma0", -1.0), ("gamma1", 1.0))}
    given = [k for k in STRUCTURE_KEYS if f"problem.{k}" in cfg]
    structure = None
    if given:
        if len(given) != len(STRUCTURE_KEYS):
            missing = [k for k in STRUCTURE_KEYS if k not in given]
            raise ConfigError(f"structure constants must be given together; missing {', '.join(missing)}")
        structure = StructureData(**{k: cfg.get(f"problem.{k}") for k in STRUCTURE_KEYS})
    floor = cfg.get("problem.structure_floor", STRUCTURE_FLOOR)
    name = cfg.get("problem.name", "problem")
    data = None
    if "problem.manufactured" in cfg:
        if "problem.f" in cfg or "problem.g" in cfg:
            raise ConfigError("problem.manufactured excludes problem.f and problem.g")
        srcs = [cfg.get(k) for k in ("problem.p", "problem.q0", "problem.q1")]
        if any(v.startswith("csv:") for v in srcs):
            raise ConfigError("problem.manufactured needs expression exponents, not nodal CSV files")
        try:
            data = manufactured_data(mesh, *srcs, cfg.get("problem.manufactured"), **coeffs)
        except (ValueError, ExpressionError) as exc:
            raise ConfigError(f"{cfg.where('problem.manufactured')}: {exc}") from None
        f, g = data.f, data.g
    else:
        f, g = cfg.get("problem.f", "0"), cfg.get("problem.g", "0")
    try:
        prob = make_problem(mesh, p, q0, q1, N, f=f, g=g, structure=structure, floor=floor, order=order, name=name, **coeffs)
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from None
    return prob, data


def solver_options(cfg: Config) -> SolverOptions:
    kw = {k: cfg.get(f"solver.{k}") for k in ("tol", "max_iter", "mu") if f"solver.{k}" in cfg}
    return SolverOptions(**kw)


def bound_options(cfg: Config, seed: int = 0):
    from .bound import BoundOptions

    kw = dict(
        n_max=cfg.get("bound.n_max", 40),
        gap_margin=cfg.get("cover.gap_margin", 1e-3),
        max_halvings=cfg.get("cover.max_halvings", 30),
        embedding=cfg.get("bound.embedding", "estimate"),
        C_emb=cfg.get("bound.C_emb"),
        C_tr=cfg.get("bound.C_tr"),
        samples=cfg.get("bound.samples", 500),
        seed=seed,
        resolution=cfg.get("bound.resolution"),
        check_levels=tuple(cfg.get("bound.check_levels", [1.0])),
    )
    if kw["embedding"] == "user" and (kw["C_emb"] is None or kw["C_tr"] is None):
        raise ConfigError("bound.embedding = user needs bound.C_emb and bound.C_tr")
    try:
        return BoundOptions(**kw)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('bound.check_levels')}: {exc}") from None


def spaces_expression(cfg: Config) -> Expression:
    try:
        return Expression(cfg.require("spaces.u"))
    except ExpressionError as exc:
        raise ConfigError(f"{cfg.where('spaces.u')}: {exc}") from None
