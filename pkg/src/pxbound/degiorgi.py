"""Level sets, truncated energy estimates, iteration sequences and the recursion lemma."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from .discrete import DiscreteFunction
from .fem import ProblemInstance, StructureData
from .vexp_norms import abs_power

REL_TOL = 1e-9


def _fsum(a) -> float:
    return math.fsum(np.ravel(a))


def rel_slack(lhs: float, rhs: float) -> float:
    """``(rhs - lhs) / rhs`` computed in log space; ``1`` when ``lhs == 0``."""
    if lhs <= 0:
        return 1.0
    if rhs <= 0:
        return -math.inf
    if math.isinf(rhs):
        return 1.0
    return -math.expm1(math.log(lhs) - math.log(rhs))


def log_rel_slack(log_lhs: float, log_rhs: float) -> float:
    if log_lhs == -math.inf:
        return 1.0
    if log_rhs == -math.inf:
        return -math.inf
    d = log_lhs - log_rhs
    return -math.expm1(d) if d < 700 else -math.inf


def holds(slack: float, tol: float = REL_TOL) -> bool:
    return slack >= -tol


@dataclass(frozen=True)
class EnergyEstimateConstants:
    eps: float
    d1: float
    d2: float


def energy_constants(s: StructureData, q0_plus: float) -> EnergyEstimateConstants:
    """Young parameter and the two constants of the truncated energy estimate.

    The exponent of ``eps`` in ``d1`` is ``-(q0+ + 1)``; a degenerate ``b0 = 0``
    gives ``eps = 1`` and drops that term.
    """
    if not s.a3 > 0:
        raise ValueError("a3 must be positive")
    if s.b0 > 0:
        eps = min(1.0, s.a3 / (2.0 * s.b0))
        b0_term = s.b0 * eps ** (-(q0_plus + 1.0))
    else:
        eps = 1.0
        b0_term = 0.0
    d1 = 2.0 / s.a3 * (s.a4 + s.a5 + s.b1 + s.b2 + b0_term)
    d2 = 2.0 / s.a3 * (s.c0 + s.c1)
    return EnergyEstimateConstants(eps, d1, d2)


def d3_and_a(ec: EnergyEstimateConstants, q0_plus: float, q1_plus: float) -> tuple[float, float]:
    d3 = max(ec.d1 * 2.0 ** (2 * q0_plus), ec.d2 * 2.0 ** (2 * q1_plus))
    a = max(2.0**q0_plus, 2.0**q1_plus)
    return d3, a


class LevelData:
    """Quadrature data of ``v = u`` (sub) or ``v = -u`` (super) for level-set integrals."""

    def __init__(self, u: DiscreteFunction, prob: ProblemInstance, mode: str = "sub"):
        if mode not in ("sub", "super"):
            raise ValueError(f"mode must be 'sub' or 'super', got {mode!r}")
        if u.mesh is not prob.mesh:
            raise ValueError("function does not live on the problem mesh")
        v = u if mode == "sub" else -u
        mesh, order = prob.mesh, prob.order
        self.mesh = mesh
        self.prob = prob
        self.v = v
        cq = mesh.cell_quadrature(order)
        fq = mesh.facet_quadrature(order)
        self.w = cq.weights
        self.wb = fq.weights
        self.vq = v.at_cell_quadrature(order)
        self.vb = v.at_facet_quadrature(order)
        self.q0 = prob.q0.at_cell_quadrature(order)
        self.q1 = prob.q1.at_facet_quadrature(order)
        self.p = prob.p.at_cell_quadrature(order)
        self.gn = np.broadcast_to(v.gradient_norms[:, None], self.w.shape)

    def mask(self, k: float):
        return self.vq > k, self.vb > k

    def measures(self, k: float) -> tuple[float, float]:
        ma, mb = self.mask(k)
        return _fsum(self.w * ma), _fsum(self.wb * mb)

    def Z(self, k: float) -> float:
        return _fsum(self.w * abs_power(np.maximum(self.vq - k, 0.0), self.q0))

    def Zt(self, k: float) -> float:
        return _fsum(self.wb * abs_power(np.maximum(self.vb - k, 0.0), self.q1))

    def int_v_q0(self, k: float) -> float:
        ma, _ = self.mask(k)
        return _fsum(self.w * ma * abs_power(self.vq, self.q0))

    def int_v_q1(self, k: float) -> float:
        _, mb = self.mask(k)
        return _fsum(self.wb * mb * abs_power(self.vb, self.q1))

    def int_grad_p(self, k: float) -> float:
        ma, _ = self.mask(k)
        return _fsum(self.w * ma * abs_power(self.gn, self.p))

    def data_integral(self) -> float:
        """Integral of ``v_+^{q0}`` plus boundary integral of ``v_+^{q1}``."""
        return self.Z(0.0) + self.Zt(0.0)


@dataclass(frozen=True)
class LevelSets:
    measure_interior: float
    measure_boundary: float
    cell_mask: np.ndarray
    facet_mask: np.ndarray


def level_sets(u: DiscreteFunction, k: float, prob: ProblemInstance | None = None, order: int = 8) -> LevelSets:
    """Measures of ``{u > k}`` in the domain and on the boundary, with masks."""
    if not k >= 1:
        raise ValueError(f"level k must be >= 1, got {k}")
    mesh = u.mesh
    if prob is not None:
        order = prob.order
    cq, fq = mesh.cell_quadrature(order), mesh.facet_quadrature(order)
    ma = u.at_cell_quadrature(order) > k
    mb = u.at_facet_quadrature(order) > k
    return LevelSets(_fsum(cq.weights * ma), _fsum(fq.weights * mb), ma, mb)


@dataclass(frozen=True)
class EnergyCheck:
    lhs: float
    rhs: float
    holds: bool
    slack: float
    rel_slack: float


def check_energy_estimate(
    u: DiscreteFunction, prob: ProblemInstance, k: float, mode: str = "sub", constants: EnergyEstimateConstants | None = None
) -> EnergyCheck:
    """Both sides of the truncated energy estimate at level ``k``."""
    if not k >= 1:
        raise ValueError(f"level k must be >= 1, got {k}")
    ec = constants or energy_constants(prob.structure, prob.q0.sup)
    ld = LevelData(u, prob, mode)
    lhs = ld.int_grad_p(k)
    rhs = ec.d1 * ld.int_v_q0(k) + ec.d2 * ld.int_v_q1(k)
    rs = rel_slack(lhs, rhs)
    return EnergyCheck(lhs, rhs, holds(rs), rhs - lhs, rs)


@dataclass(frozen=True)
class IterationTrace:
    """Levels ``k_n = k (2 - 2^-n)`` and the iteration quantities at each level."""

    k: float
    mode: str
    levels: np.ndarray
    Z: np.ndarray
    Zt: np.ndarray
    Y: np.ndarray
    measA: np.ndarray
    measG: np.ndarray
    checks: dict = field(default_factory=dict)
    chain_ok: np.ndarray | None = None

    @property
    def n_max(self) -> int:
        return len(self.levels) - 1

    def write_csv(self, path: str | Path) -> None:
        ok = self.chain_ok if self.chain_ok is not None else np.ones(len(self.levels), dtype=bool)
        lines = ["n,k_n,Z_n,Ztilde_n,Y_n,measA,measG,chain_ok"]
        for n in range(len(self.levels)):
            vals = [self.levels[n], self.Z[n], self.Zt[n], self.Y[n], self.measA[n], self.measG[n]]
            lines.append(f"{n}," + ",".join(repr(float(v)) for v in vals) + f",{str(bool(ok[n])).lower()}")
        Path(path).write_text("\n".join(lines) + "\n")


def level_sequence(k: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    return k * (2.0 - 2.0 ** (-n.astype(float)))


def iteration_trace(
    u: DiscreteFunction,
    prob: ProblemInstance,
    k: float,
    n_max: int,
    mode: str = "sub",
    constants: EnergyEstimateConstants | None = None,
) -> IterationTrace:
    """Iteration quantities plus the basic per-step inequalities.

    For each step ``n -> n+1`` the trace records both sides of the bound of
    the ``u^{q0}`` integral over the next level set by ``Z_n``, its boundary
    analogue, the measure bound of the next level set, and the gradient bound
    ``d3 a^n Y_n``.
    """
    if not k >= 1:
        raise ValueError(f"level k must be >= 1, got {k}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    ld = LevelData(u, prob, mode)
    ec = constants or energy_constants(prob.structure, prob.q0.sup)
    q0p, q0m, q1p = prob.q0.sup, prob.q0.inf, prob.q1.sup
    d3, a = d3_and_a(ec, q0p, q1p)
    levels = level_sequence(k, n_max)
    Z = np.array([ld.Z(t) for t in levels])
    Zt = np.array([ld.Zt(t) for t in levels])
    meas = np.array([ld.measures(t) for t in levels])
    checks = {name: [] for name in ("interior_power", "boundary_power", "measure", "gradient")}
    ok = np.ones(n_max + 1, dtype=bool)
    for n in range(n_max):
        k1 = levels[n + 1]
        rows = {
            "interior_power": (ld.int_v_q0(k1), 2.0 ** (q0p * (n + 2)) * Z[n]),
            "boundary_power": (ld.int_v_q1(k1), 2.0 ** (q1p * (n + 2)) * Zt[n]),
            "measure": (meas[n + 1, 0], 2.0 ** (q0p * (n + 1)) * k ** (-q0m) * Z[n]),
            "gradient": (ld.int_grad_p(k1), d3 * a**n * (Z[n] + Zt[n])),
        }
        for name, (lhs, rhs) in rows.items():
            s = rel_slack(lhs, rhs)
            checks[name].append((lhs, rhs, s))
            ok[n] &= holds(s)
    return IterationTrace(
        k=float(k),
        mode=mode,
        levels=levels,
        Z=Z,
        Zt=Zt,
        Y=Z + Zt,
        measA=meas[:, 0],
        measG=meas[:, 1],
        checks=checks,
        chain_ok=ok,
    )


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RecursionReport:
    hypothesis_holds: bool
    hypothesis_first_violation: int | None
    threshold: float
    log_threshold: float
    threshold_met: bool
    conclusion_holds: bool | None
    conclusion_first_violation: int | None
    min_conclusion_slack: float | None
    status: str


def recursion_threshold_log(K: float, b: float, delta1: float, dps: int | None = None):
    """Natural log of ``(2K)^{-1/delta1} b^{-1/delta1^2}``.

    With ``dps`` the value is an ``mpmath.mpf`` computed at that precision.
    """
    if dps is not None:
        with mpmath.workdps(dps):
            d1 = mpmath.mpf(delta1)
            return -mpmath.log(2 * mpmath.mpf(K)) / d1 - mpmath.log(b) / d1**2
    return -math.log(2.0 * K) / delta1 - math.log(b) / delta1**2


def _log_values(Y, log: bool) -> np.ndarray:
    y = np.asarray(Y, dtype=float)
    if log:
        return y
    with np.errstate(divide="ignore"):
        return np.log(y)


def recursion_step_log(logY: float, n: int, K: float, b: float, delta1: float, delta2: float) -> float:
    """Log of ``K b^n (Y^{1+d1} + Y^{1+d2})`` given ``log Y``."""
    if logY == -math.inf:
        return -math.inf
    return math.log(K) + n * math.log(b) + np.logaddexp((1 + delta1) * logY, (1 + delta2) * logY)


def generate_recursion_log(
    logY0: float, n_max: int, K: float, b: float, delta1: float, delta2: float, dps: int = 60
) -> np.ndarray:
    """Log of the sequence obtained with equality in the recursion.

    The sequence is generated in ``dps``-digit arithmetic: on the threshold with
    ``delta1 == delta2`` the envelope is an unstable fixed point of the map, and
    double precision roundoff would be doubled at every step.  Pass ``logY0``
    as an ``mpf`` (see :func:`recursion_threshold_log`) to start exactly there.
    """
    with mpmath.workdps(dps):
        lK, lb = mpmath.log(K), mpmath.log(b)
        d1, d2 = mpmath.mpf(delta1), mpmath.mpf(delta2)
        cur = mpmath.mpf(logY0)
        out = [cur]
        for n in range(n_max):
            if mpmath.isinf(cur):
                out.append(cur)
                continue
            a, c = (1 + d1) * cur, (1 + d2) * cur
            m = max(a, c)
            cur = lK + n * lb + m + mpmath.log(mpmath.exp(a - m) + mpmath.exp(c - m))
            out.append(cur)
        return np.array([float(v) for v in out])


def check_recursion_lemma(
    Y, K: float, b: float, delta1: float, delta2: float, log: bool = False, tol: float = REL_TOL
) -> RecursionReport:
    """Check the recursion hypothesis on ``Y`` and, if the start is below the
    threshold, the geometric decay envelope.

    ``log=True`` means ``Y`` holds natural logarithms of the sequence.
    """
    if not b > 1:
        raise ValueError("b must exceed 1")
    if not K > 0:
        raise ValueError("K must be positive")
    if not (delta2 >= delta1 > 0):
        raise ValueError("need delta2 >= delta1 > 0")
    ly = _log_values(Y, log)
    if np.any(np.isnan(ly)):
        raise ValueError("sequence must be nonnegative")
    hyp_viol = None
    for n in range(len(ly) - 1):
        rhs = recursion_step_log(ly[n], n, K, b, delta1, delta2)
        if not holds(log_rel_slack(ly[n + 1], rhs), tol):
            hyp_viol = n
            break
    lth = recursion_threshold_log(K, b, delta1)
    met = bool(ly[0] <= lth + math.log1p(tol))
    conclusion = None
    first = None
    min_slack = None
    if met:
        slacks = [log_rel_slack(ly[n], lth - n * math.log(b) / delta1) for n in range(len(ly))]
        min_slack = float(min(slacks))
        bad = [n for n, s in enumerate(slacks) if not holds(s, tol)]
        conclusion = not bad
        first = bad[0] if bad else None
    if not met:
        status = "threshold not met"
    elif conclusion:
        status = "conclusion holds"
    else:
        status = f"conclusion violated at n={first}"
    return RecursionReport(
        hypothesis_holds=hyp_viol is None,
        hypothesis_first_violation=hyp_viol,
        threshold=math.exp(lth) if lth < 709 else math.inf,
        log_threshold=lth,
        threshold_met=met,
        conclusion_holds=conclusion,
        conclusion_first_violation=first,
        min_conclusion_slack=min_slack,
        status=status,
    )
