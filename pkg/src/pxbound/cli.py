"""Command-line front end: ``pxbound {solve|iterate|bound|verify|spaces}``."""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bound import BoundError, report_differences, theorem_bound
from .config import ConfigError, bound_options, build_problem, load_config, solver_options, spaces_expression
from .cover import CoverError
from .degiorgi import check_energy_estimate, iteration_trace
from .discrete import DiscreteFunction
from .exponents import DomainError, ExponentField
from .expressions import ExpressionError
from .fem import (
    NonConvergenceError,
    assemble_residual,
    solve,
    validate_structure,
    weak_residual_check,
    write_residuals_csv,
    write_solution_csv,
)
from .mesh import MeshError
from .vexp_norms import (
    boundary_modular,
    gradient_luxemburg_norm,
    luxemburg_norm,
    modular,
    sobolev_norm,
)

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
ENERGY_LEVELS = (1.0, 1.25, 1.5, 2.0, 4.0)
ENERGY_TOL = 1e-8
MIRROR_RTOL = 1e-12
USER_ERRORS = (ConfigError, DomainError, ExpressionError, MeshError, CoverError, BoundError, FileNotFoundError)


class CheckFailure(RuntimeError):
    pass


def _dump(obj, path: Path, timestamp: bool):
    if timestamp:
        obj = dict(obj, timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat())
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _solve(cfg):
    prob, data = build_problem(cfg)
    opts = solver_options(cfg)
    init = DiscreteFunction.constant(prob.mesh, cfg.get("solver.initial", 0.0))
    u, info = solve(prob, init=init, options=opts, return_info=True)
    prov = {"tol": opts.tol, "max_iter": opts.max_iter, "iterations": info.iterations, "residual": info.residual_norms[-1]}
    return prob, data, u, prov


def _modes(cfg):
    m = cfg.get("bound.mode", "sub")
    return ("sub", "super") if m == "both" else (m,)


def cmd_solve(cfg, out: Path, seed: int, timestamp: bool) -> int:
    prob, data, u, prov = _solve(cfg)
    write_solution_csv(u, out / "solution.csv")
    write_residuals_csv(assemble_residual(u, prob), out / "residuals.csv")
    msg = f"solved in {prov['iterations']} iterations, residual {prov['residual']:.3e}"
    if data is not None:
        err = float(np.max(np.abs(u.values - data.u(prob.mesh.vertices))))
        msg += f", nodal max error {err:.3e}"
    print(msg)
    return EXIT_OK


def cmd_iterate(cfg, out: Path, seed: int, timestamp: bool) -> int:
    prob, _, u, _ = _solve(cfg)
    k = cfg.get("bound.check_levels", [1.0])[0]
    n_max = cfg.get("bound.n_max", 40)
    ok = True
    for mode in _modes(cfg):
        tr = iteration_trace(u, prob, k, n_max, mode)
        name = "trace.csv" if mode == "sub" or len(_modes(cfg)) == 1 else f"trace_{mode}.csv"
        tr.write_csv(out / name)
        ok &= bool(np.all(tr.chain_ok))
        print(f"{mode}: k={k} Y_0={tr.Y[0]:.6e} Y_{n_max}={tr.Y[-1]:.6e} chain {'ok' if np.all(tr.chain_ok) else 'FAILED'}")
    return EXIT_OK if ok else EXIT_CHECK


def _bound_reports(cfg, prob, u, prov, seed, modes):
    opts = bound_options(cfg, seed)
    return {mode: theorem_bound(u, prob, mode, opts, prov) for mode in modes}


def _report_ok(rep) -> bool:
    return rep.chain_ok and rep.dominated and bool(rep.flags["z_decay"])


def cmd_bound(cfg, out: Path, seed: int, timestamp: bool) -> int:
    prob, _, u, prov = _solve(cfg)
    modes = _modes(cfg)
    reps = _bound_reports(cfg, prob, u, prov, seed, modes)
    for mode, rep in reps.items():
        name = "bound.json" if mode == modes[0] else f"bound_{mode}.json"
        _dump(rep.to_dict(), out / name, timestamp)
        print(_bound_line(rep))
    return EXIT_OK if all(_report_ok(r) for r in reps.values()) else EXIT_CHECK


def _bound_line(rep) -> str:
    d = rep.to_dict()
    fail = rep.first_chain_failure()
    state = "chain ok" if rep.chain_ok else f"chain FAILED at {fail}"
    return f"{rep.mode}: esssup={rep.esssup:.6g} bound={d['bound']} (log10 {d['log10']['bound']:.4f}) {state}"


def verify_problem(cfg, seed: int = 0) -> tuple[dict, dict]:
    """Run every check on one configuration; returns ``(checks, reports)``."""
    checks = {}
    prob, data, u, prov = _solve(cfg)
    n_struct = cfg.get("bound.structure_samples", 10_000)
    sr = validate_structure(prob, n_struct, seed)
    checks["structure"] = {"ok": sr.passed, "failures": sr.failures}
    rr = weak_residual_check(u, prob, 10 * prov["tol"], "solution")
    checks["residual"] = {"ok": rr.passed, "max_residual": rr.max_residual}
    energy = {}
    for mode in ("sub", "super"):
        for k in ENERGY_LEVELS:
            ec = check_energy_estimate(u, prob, k, mode)
            energy[f"{mode}@{k}"] = ec.rel_slack
    checks["energy_estimate"] = {"ok": all(s >= -ENERGY_TOL for s in energy.values()), "slacks": energy}
    reps = _bound_reports(cfg, prob, u, prov, seed, ("sub", "super"))
    sub, sup = reps["sub"], reps["super"]
    checks["domination"] = {
        "ok": bool(sub.dominated and sup.dominated),
        "max_u": float(u.values.max()),
        "min_u": float(u.values.min()),
        "bound_sub": sub.to_dict()["bound"],
        "bound_super": sup.to_dict()["bound"],
    }
    checks["z_decay"] = {"ok": bool(sub.flags["z_decay"] and sup.flags["z_decay"])}
    checks["chain"] = {
        "ok": bool(sub.chain_ok and sup.chain_ok),
        "first_failure_sub": _fmt_failure(sub),
        "first_failure_super": _fmt_failure(sup),
    }
    opts = bound_options(cfg, seed)
    mirror = theorem_bound(-u, prob.mirrored(), "super", opts, prov)
    diff = report_differences(sub, mirror, MIRROR_RTOL)
    checks["mirror"] = {"ok": not diff, "differences": {k: list(v) for k, v in diff.items()}}
    s = prob.structure
    scaled = prob.with_structure(replace(s, a0=10 * s.a0, a1=10 * s.a1, a2=10 * s.a2))
    alt = theorem_bound(u, scaled, "sub", opts, prov)
    same = json.dumps(alt.to_dict(), sort_keys=True) == json.dumps(sub.to_dict(), sort_keys=True)
    checks["constant_insensitivity"] = {"ok": same}
    if data is not None:
        err = float(np.max(np.abs(u.values - data.u(prob.mesh.vertices))))
        checks["manufactured_error"] = {"ok": True, "nodal_max_error": err}
    return checks, reps


def _fmt_failure(rep):
    f = rep.first_chain_failure()
    if f is None:
        return None
    k, (name, n, slack) = f
    return {"k": k, "inequality": name, "n": n, "slack": slack}


def cmd_verify(cfg, out: Path, seed: int, timestamp: bool) -> int:
    checks, reps = verify_problem(cfg, seed)
    _dump(reps["sub"].to_dict(), out / "bound.json", timestamp)
    _dump(reps["super"].to_dict(), out / "bound_super.json", timestamp)
    ok = all(c["ok"] for c in checks.values())
    _dump({"ok": ok, "checks": checks}, out / "verify.json", timestamp)
    for name, c in checks.items():
        print(f"{'PASS' if c['ok'] else 'FAIL'} {name}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_spaces(cfg, out: Path, seed: int, timestamp: bool) -> int:
    prob, _ = build_problem(cfg)
    mesh = prob.mesh
    expr = spaces_expression(cfg)
    u = DiscreteFunction.interpolate(mesh, expr)
    if "spaces.exponent" in cfg:
        src = cfg.get("spaces.exponent")
        try:
            fld = ExponentField(mesh, src, order=prob.order, name="spaces.exponent")
            bfld = ExponentField(mesh, src, domain="boundary", order=prob.order, name="spaces.exponent")
        except ValueError as exc:
            raise ConfigError(f"{cfg.where('spaces.exponent')}: {exc}") from None
    else:
        fld, bfld = prob.p, prob.q1
    rows = [
        ("modular", modular(u, fld, order=prob.order)),
        ("luxemburg", luxemburg_norm(u, fld, order=prob.order)),
        ("gradient_luxemburg", gradient_luxemburg_norm(u, fld, order=prob.order)),
        ("sobolev", sobolev_norm(u, fld, order=prob.order)),
        ("boundary_modular", boundary_modular(u, bfld, order=prob.order)),
    ]
    lines = ["quantity,value"] + [f"{k},{v!r}" for k, v in rows]
    (out / "spaces.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "iterate": cmd_iterate, "bound": cmd_bound, "verify": cmd_verify, "spaces": cmd_spaces}


def run_one(command: str, config: str, out: str, seed: int, timestamp: bool) -> int:
    try:
        cfg = load_config(config)
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[command](cfg, outdir, seed, timestamp)
    except USER_ERRORS as exc:
        print(f"error: {config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"error: {config}: solver failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pxbound", description="Global bounds for p(x)-Laplacian problems with nonlinear boundary conditions.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, nargs="+", help="problem configuration file(s)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized estimation")
    ap.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from JSON reports")
    ap.add_argument("--jobs", type=int, default=1, help="run several configuration files concurrently")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    ts = not args.no_timestamp
    configs = args.config
    if len(configs) == 1:
        return run_one(args.command, configs[0], args.out, args.seed, ts)
    stems = [Path(c).stem for c in configs]
    if len(set(stems)) != len(stems):
        print("error: configuration file names must be distinct", file=sys.stderr)
        return EXIT_CONFIG
    outs = [str(Path(args.out) / s) for s in stems]
    if args.jobs == 1:
        codes = [run_one(args.command, c, o, args.seed, ts) for c, o in zip(configs, outs)]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            codes = list(ex.map(run_one, [args.command] * len(configs), configs, outs, [args.seed] * len(configs), [ts] * len(configs)))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
