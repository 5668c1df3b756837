"""Command line interface.

Every subcommand accepts ``--config`` with a YAML or JSON file; command-line
flags override it. Example::

    problem: {name: osc2d, params: {k1: 25, k2: 5}}
    N: [128, 256, 512]
    boundary: mixed            # first | second | mixed | {xlo: second, ...}
    solver: {tol: 1.0e-12}
    checks: {order_min: 3.7, order_max: 4.3}
    output: {dir: out, formats: [csv, json], grid_dump: false}

The exit status is 0 only when every requested check passes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from . import derive, harness, problems
from .errors import CertificationError, ConfigurationError, DerivationError, NonConvergenceError

logger = logging.getLogger("hocbiharm")


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    if path.endswith(".json"):
        return json.loads(text)
    cfg = yaml.safe_load(text)
    return cfg or {}


def _problem_from_config(cfg: dict) -> problems.ManufacturedProblem:
    pc = cfg.get("problem", "smooth2d")
    if isinstance(pc, str):
        pc = {"name": pc}
    name = pc.get("name")
    if name == "poly":
        coeffs = {
            tuple(int(k) for k in str(e).split(",")): Fraction(str(c))
            for e, c in pc.get("coefficients", {}).items()
        }
        if not coeffs:
            raise ConfigurationError("poly problem needs coefficients like {'4,0': 1}")
        return problems.polynomial(coeffs)
    return problems.get_problem(name, **pc.get("params", {}))


def _ns(cfg: dict, default):
    ns = cfg.get("N", default)
    return [int(n) for n in (ns if isinstance(ns, (list, tuple)) else [ns])]


def _merge(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = dict(cfg)
    if getattr(args, "problem", None):
        cfg["problem"] = {"name": args.problem, "params": cfg.get("problem", {}).get("params", {}) if isinstance(cfg.get("problem"), dict) else {}}
    if getattr(args, "N", None):
        cfg["N"] = args.N
    if getattr(args, "boundary", None):
        cfg["boundary"] = args.boundary
    if getattr(args, "tol", None) is not None:
        cfg.setdefault("solver", {})["tol"] = args.tol
    if getattr(args, "out", None):
        cfg.setdefault("output", {})["dir"] = args.out
    return cfg


def _emit(report, cfg: dict, stem: str, solution=None) -> None:
    out = cfg.get("output", {})
    if out.get("dir"):
        paths = harness.emit_report(
            report, out["dir"], stem, out.get("formats", ["csv", "json"]),
            solution if out.get("grid_dump") else None,
        )
        for p in paths:
            print(f"wrote {p}")


def _order_check(orders, cfg: dict) -> bool:
    checks = cfg.get("checks", {})
    lo, hi = checks.get("order_min"), checks.get("order_max")
    ok = True
    for o in orders:
        if (lo is not None and o < lo) or (hi is not None and o > hi):
            ok = False
    if lo is not None or hi is not None:
        print(f"order check [{lo}, {hi}]: {'PASS' if ok else 'FAIL'}")
    return ok


def cmd_solve(cfg: dict) -> int:
    mp = _problem_from_config(cfg)
    N = _ns(cfg, 64)[0]
    spec = mp.to_problem(cfg.get("boundary", "first"), corner_v=cfg.get("corner_v", "exact"))
    tol = cfg.get("solver", {}).get("tol", 1e-12)
    sol = harness.solve_problem(spec, N, tol)
    mesh = sol.grid.mesh()
    eu, _ = harness.error_norms(sol.U, mp.u(*mesh), sol.grid)
    _, ev = harness.error_norms(sol.V, mp.lap(*mesh), sol.grid)
    print(f"{mp.name} N={N} {spec.boundary.layout()}")
    print(f"  |E_U|inf = {eu:.6e}   |E_V|L2 = {ev:.6e}")
    print(f"  {sol.stats.method}: {sol.stats.iterations} iterations, residual {sol.stats.residual:.2e}")
    report = harness.RefinementReport(
        [harness.LevelRow(N, eu, None, ev, None, sol.stats.iterations, sol.stats.residual, sol.stats.method)],
        {"problem": mp.name, "dim": mp.dim, "params": mp.params, "layout": spec.boundary.layout(), "tol": tol},
    )
    _emit(report, cfg, f"solve_{mp.name}_N{N}", sol)
    bound = cfg.get("checks", {}).get("max_error")
    if bound is not None:
        ok = eu <= bound
        print(f"error check <= {bound}: {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1
    return 0


def cmd_refine(cfg: dict) -> int:
    mp = _problem_from_config(cfg)
    report = harness.refine_study(
        mp,
        cfg.get("boundary", "first"),
        _ns(cfg, [32, 64, 128]),
        cfg.get("solver", {}).get("tol", 1e-12),
        corner_v=cfg.get("corner_v", "exact"),
    )
    print(report.to_text(), end="")
    _emit(report, cfg, f"refine_{mp.name}")
    ok = not report.partial and _order_check(report.orders_u(), cfg)
    return 0 if ok else 1


def cmd_cond(cfg: dict) -> int:
    scheme = cfg.get("scheme", "coupled")
    dim = int(cfg.get("dim", 2))
    rep = harness.cond_study(scheme, dim, _ns(cfg, [32, 64, 128]), cfg.get("cond_tol", 1e-3))
    print(rep.to_text(), end="")
    _emit(rep, cfg, f"cond_{scheme}_{dim}d")
    checks = cfg.get("checks", {})
    lo, hi = checks.get("rate_min"), checks.get("rate_max")
    ok = all(r.estimate is not None for r in rep.rows)
    for r in rep.rates():
        if (lo is not None and r < lo) or (hi is not None and r > hi):
            ok = False
    if lo is not None or hi is not None:
        print(f"rate check [{lo}, {hi}]: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_stokes(cfg: dict) -> int:
    Ns = _ns(cfg, [16, 32, 64])
    report, ref = harness.stokes_study(Ns, int(cfg.get("N_ref", 256)), cfg.get("solver", {}).get("tol", 1e-12))
    print(report.to_text(), end="")
    print(f"mirror symmetry defect of the reference solution: {harness.mirror_defect(ref.U):.2e}")
    _emit(report, cfg, "stokes", ref)
    return 0 if (not report.partial and _order_check(report.orders_u(), cfg)) else 1


def cmd_derive(cfg: dict) -> int:
    d = derive.solve_3d_boundary(
        symmetry=bool(cfg.get("symmetry", True)),
        footprint=cfg.get("footprint", "reference"),
    )
    rep = derive.derivation_report(d)
    print(derive.report_text(rep), end="")
    out = cfg.get("output", {}).get("dir")
    if out:
        path = Path(out) / "boundary_stencil_3d.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_verify(cfg: dict) -> int:
    """Exact stencil certification, load oracles and the M-matrix property."""
    from .assembly import assemble_coupled, m_matrix_check
    from .grid import UniformGrid
    from .stencils import HOC9_2D, HOC19_3D

    results = []

    def record(name, fn):
        try:
            ok = bool(fn())
            msg = ""
        except (CertificationError, DerivationError, NonConvergenceError, ConfigurationError) as exc:
            ok, msg = False, str(exc)
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + msg if msg else ''}")

    record("HOC9_2D exact through degree 5", lambda: derive.truncation_table(HOC9_2D, 5).exact_through() >= 5)
    record("HOC19_3D exact through degree 5", lambda: derive.truncation_table(HOC19_3D, 5).exact_through() >= 5)
    record("2D closure degree-5 residuals match the leading term", lambda: derive.verify_2d_boundary()["matches_leading_term"])
    record("2D closure equals the ghost-eliminated Neumann stencil", lambda: derive.ghost_identity_check()["matches"])
    record("3D closure derived and certified", lambda: derive.solve_3d_boundary().certified)
    for name in sorted(problems.PROBLEMS):
        record(f"load oracle {name}", lambda name=name: problems.check_load(problems.get_problem(name))["passed"])
    for dim, N in ((2, 4), (2, 8), (2, 16), (3, 4), (3, 8)):
        mp = problems.example_smooth_2d() if dim == 2 else problems.example_smooth_3d()
        record(
            f"M-matrix -A_h {dim}D N={N}",
            lambda mp=mp, dim=dim, N=N: m_matrix_check(assemble_coupled(UniformGrid.unit(dim, N), mp.to_problem("first")))["passed"],
        )
    return 0 if all(results) else 1


COMMANDS = {
    "solve": cmd_solve,
    "refine": cmd_refine,
    "cond": cmd_cond,
    "stokes": cmd_stokes,
    "derive-stencil": cmd_derive,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hocbiharm", description="Compact fourth-order biharmonic solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML or JSON config file")
        s.add_argument("--out", help="output directory for reports")
        if name in ("solve", "refine"):
            s.add_argument("--problem", choices=sorted(problems.PROBLEMS) + ["poly"])
            s.add_argument("--boundary", help="first | second | mixed")
        if name in ("solve", "refine", "cond", "stokes"):
            s.add_argument("--N", type=int, nargs="+")
            s.add_argument("--tol", type=float)
        if name == "cond":
            s.add_argument("--scheme", choices=["coupled", "13-point"])
            s.add_argument("--dim", type=int, choices=[2, 3])
        if name == "stokes":
            s.add_argument("--N-ref", dest="N_ref", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _merge(load_config(args.config), args)
        for key in ("scheme", "dim", "N_ref"):
            if getattr(args, key, None) is not None:
                cfg[key] = getattr(args, key)
        return COMMANDS[args.command](cfg)
    except (ConfigurationError, OSError, yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
