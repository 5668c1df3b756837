"""Solves, refinement and conditioning studies, the Stokes self-convergence study,
and report emission.

Reports are reproducible byte for byte: floats are written in scientific
notation with 6 significant digits (CSV) or as ``repr`` (JSON), and wall
times, which vary run to run, are logged but never written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .assembly import (
    BlockSystem,
    assemble_13point_2d,
    assemble_coupled,
    assemble_decoupled,
)
from .boundary import ProblemSpec, evaluate
from .errors import ConfigurationError, EstimationError, NonConvergenceError
from .grid import UniformGrid
from .linsolve import DENSE_LIMIT, SchurSolver, SolveStats, estimate_cond2, solve
from .problems import ManufacturedProblem, example_smooth_2d, example_smooth_3d, stokes_cavity

logger = logging.getLogger(__name__)

FLOAT_FMT = "{:.5e}"  # 6 significant digits


def fmt(x: Optional[float]) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return FLOAT_FMT.format(x)


# -- single solves -------------------------------------------------------------


@dataclass
class Solution:
    grid: UniformGrid
    U: np.ndarray
    V: np.ndarray
    stats: SolveStats
    problem: ProblemSpec = field(repr=False)


def solve_coupled(system: BlockSystem, tol: float = 1e-12, method: str = "auto"):
    """Solve a coupled block system: dense LU when small, else the Schur solver."""
    n = system.matrix.shape[0]
    if method == "auto":
        if n <= DENSE_LIMIT:
            method = "dense"
        elif len(set(system.grid.n)) == 1:
            method = "schur"
        else:
            method = "gmres-ilu"
    if method == "schur":
        return SchurSolver(system).solve(system.rhs, tol=tol)
    return solve(system.matrix, system.rhs, tol=tol, method=method)


def solve_problem(problem: ProblemSpec, N: int, tol: float = 1e-12, method: str = "auto") -> Solution:
    """Solve Δ²u = f on the unit box with N intervals per axis."""
    grid = UniformGrid.unit(problem.dim, N)
    if problem.boundary.first_kind():
        system = assemble_coupled(grid, problem)
        x, stats = solve_coupled(system, tol, method)
        U, V = system.unpack(x)
    else:
        dec = assemble_decoupled(grid, problem)
        xv, sv = solve(dec.v_system.matrix, dec.v_system.rhs, tol=tol, method=method)
        V = dec.v_system.unpack(xv)
        us = dec.u_system(V.ravel(order="F"))
        xu, su = solve(us.matrix, us.rhs, tol=tol, method=method)
        U = us.unpack(xu)
        stats = SolveStats(
            sv.iterations + su.iterations,
            max(sv.residual, su.residual),
            sv.wall_time + su.wall_time,
            f"decoupled/{sv.method}",
            max(sv.floor, su.floor),
        )
    logger.info(
        "%s N=%d: %s, %d iterations, residual %.2e, %.2fs",
        problem.name, N, stats.method, stats.iterations, stats.residual, stats.wall_time,
    )
    return Solution(grid, U, V, stats, problem)


# -- errors ---------------------------------------------------------------------


def error_norms(numeric, exact, grid: Optional[UniformGrid] = None, *, h=None, dim=None):
    """(∞-norm, discrete L2-norm) of ``numeric − exact`` over nodes where both are defined.

    The L2 norm is sqrt(h^dim · Σ e²). Give either ``grid`` or ``h`` and ``dim``.
    """
    if grid is not None:
        h, dim = grid.h, grid.dim
    if h is None or dim is None:
        raise ValueError("error_norms needs a grid or both h and dim")
    e = np.asarray(numeric, dtype=float) - np.asarray(exact, dtype=float)
    e = e[np.isfinite(e)]
    if e.size == 0:
        return 0.0, 0.0
    return float(np.abs(e).max()), float(np.sqrt(h**dim * np.sum(e * e)))


def observed_order(coarse: float, fine: float) -> Optional[float]:
    if coarse is None or fine is None or coarse <= 0 or fine <= 0:
        return None
    return float(math.log2(coarse / fine))


# -- reports --------------------------------------------------------------------


@dataclass
class LevelRow:
    N: int
    err_u: float
    order_u: Optional[float]
    err_v: Optional[float]
    order_v: Optional[float]
    iterations: int
    residual: float
    method: str
    wall_time: Optional[float] = field(default=None, compare=False)


CSV_COLUMNS = ("N", "err_u_inf", "order_u", "err_v_l2", "order_v", "iterations", "residual", "method")


@dataclass
class RefinementReport:
    rows: list
    meta: dict
    partial: bool = False
    error: Optional[str] = None

    def orders_u(self) -> list[float]:
        return [r.order_u for r in self.rows if r.order_u is not None]

    def orders_v(self) -> list[float]:
        return [r.order_v for r in self.rows if r.order_v is not None]

    def row(self, N: int) -> LevelRow:
        for r in self.rows:
            if r.N == N:
                return r
        raise KeyError(N)

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d.pop("wall_time")
            rows.append(d)
        return {"meta": self.meta, "partial": self.partial, "error": self.error, "rows": rows}

    @classmethod
    def from_dict(cls, d: dict) -> "RefinementReport":
        return cls(
            rows=[LevelRow(**r) for r in d["rows"]],
            meta=d["meta"],
            partial=d.get("partial", False),
            error=d.get("error"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RefinementReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [r.N, fmt(r.err_u), fmt(r.order_u), fmt(r.err_v), fmt(r.order_v), r.iterations, fmt(r.residual), r.method]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        title = self.meta.get("problem", "")
        lines = [f"{title} ({self.meta.get('layout', '')})", f"{'N':>6} {'|E_U|inf':>12} {'order':>6} {'|E_V|L2':>12} {'order':>6}"]
        for r in self.rows:
            o_u = f"{r.order_u:6.2f}" if r.order_u is not None else "    --"
            o_v = f"{r.order_v:6.2f}" if r.order_v is not None else "    --"
            e_v = f"{r.err_v:12.3e}" if r.err_v is not None else " " * 12
            lines.append(f"{r.N:>6} {r.err_u:12.3e} {o_u} {e_v} {o_v}")
        if self.partial:
            lines.append(f"aborted: {self.error}")
        return "\n".join(lines) + "\n"


def _check_doublings(Ns: Sequence[int]) -> list[int]:
    Ns = [int(n) for n in Ns]
    if not Ns:
        raise ConfigurationError("empty N list")
    for a, b in zip(Ns, Ns[1:]):
        if b != 2 * a:
            raise ConfigurationError(f"N list must double at every step, got {Ns}")
    return Ns


def refine_study(
    problem: ManufacturedProblem,
    layout: Union[str, dict] = "first",
    Ns: Sequence[int] = (32, 64, 128),
    tol: float = 1e-12,
    corner_v: str = "exact",
    method: str = "auto",
) -> RefinementReport:
    """Solve at each N and report ‖U−u‖∞ and ‖V−v‖_L2 with observed orders.

    A solver failure stops the study and returns the levels completed so far
    with ``partial=True``.
    """
    Ns = _check_doublings(Ns)
    spec = problem.to_problem(layout, corner_v=corner_v)
    meta = {
        "problem": problem.name,
        "dim": problem.dim,
        "params": problem.params,
        "layout": spec.boundary.layout(),
        "corner_v": corner_v,
        "tol": tol,
    }
    report = RefinementReport([], meta)
    prev = None
    for N in Ns:
        try:
            sol = solve_problem(spec, N, tol, method)
        except NonConvergenceError as exc:
            report.partial, report.error = True, f"N={N}: {exc}"
            logger.error("refinement aborted at N=%d: %s", N, exc)
            break
        mesh = sol.grid.mesh()
        eu, _ = error_norms(sol.U, evaluate(problem.u, mesh), sol.grid)
        _, ev = error_norms(sol.V, evaluate(problem.lap, mesh), sol.grid)
        row = LevelRow(
            N, eu,
            observed_order(prev.err_u, eu) if prev else None,
            ev,
            observed_order(prev.err_v, ev) if prev else None,
            sol.stats.iterations, sol.stats.residual, sol.stats.method, sol.stats.wall_time,
        )
        report.rows.append(row)
        prev = row
    return report


@dataclass
class CondRow:
    N: int
    estimate: Optional[float]
    rate: Optional[float]
    error: Optional[str] = None


@dataclass
class CondReport:
    scheme: str
    dim: int
    rows: list
    tol: float

    def rates(self) -> list[float]:
        return [r.rate for r in self.rows if r.rate is not None]

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "dim": self.dim, "tol": self.tol, "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CondReport":
        return cls(d["scheme"], d["dim"], [CondRow(**r) for r in d["rows"]], d["tol"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("N", "estimate", "rate", "error"))
        for r in self.rows:
            w.writerow([r.N, fmt(r.estimate), fmt(r.rate), r.error or ""])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{self.scheme} {self.dim}D condition estimates", f"{'N':>6} {'cond2':>12} {'rate':>7}"]
        for r in self.rows:
            est = f"{r.estimate:12.3e}" if r.estimate is not None else f"{'failed':>12}"
            rate = f"{r.rate:7.2f}" if r.rate is not None else "     --"
            lines.append(f"{r.N:>6} {est} {rate}")
        return "\n".join(lines) + "\n"


def system_matrix(scheme: str, dim: int, N: int):
    """Assembled matrix for the conditioning study (data does not affect it)."""
    grid = UniformGrid.unit(dim, N)
    if scheme == "coupled":
        prob = (example_smooth_2d() if dim == 2 else example_smooth_3d()).to_problem("first")
        return assemble_coupled(grid, prob)
    if scheme == "13-point":
        if dim != 2:
            raise ConfigurationError("the 13-point baseline is 2D only")
        return assemble_13point_2d(grid, example_smooth_2d().to_problem("first"))
    raise ConfigurationError(f"unknown scheme {scheme!r}; use 'coupled' or '13-point'")


def condition_number(system, tol: float = 1e-3) -> float:
    A = system.matrix
    n = A.shape[0]
    if isinstance(system, BlockSystem) and system.grid.dim == 3 and n > DENSE_LIMIT:
        # a sparse LU of a 3D coupled system fills in too much; reuse the Schur solver
        S = SchurSolver(system)
        return estimate_cond2(
            A,
            tol,
            solve_A=lambda y: S.solve(y, tol=1e-10)[0],
            solve_AT=lambda y: S.solve(y, tol=1e-10, transpose=True)[0],
        )
    return estimate_cond2(A, tol)


def cond_study(scheme: str = "coupled", dim: int = 2, Ns: Sequence[int] = (32, 64, 128), tol: float = 1e-3) -> CondReport:
    Ns = _check_doublings(Ns)
    rows = []
    prev = None
    for N in Ns:
        try:
            est = condition_number(system_matrix(scheme, dim, N), tol)
            err = None
        except (EstimationError, NonConvergenceError) as exc:
            est, err = None, str(exc)
            logger.error("%s N=%d: %s", scheme, N, exc)
        rate = est / prev if (est is not None and prev is not None) else None
        rows.append(CondRow(N, est, rate, err))
        prev = est
    return CondReport(scheme, dim, rows, tol)


# -- Stokes cavity -------------------------------------------------------------


def restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Values of a fine-grid field at the nodes of a grid ``factor`` times coarser."""
    sl = tuple(slice(None, None, factor) for _ in range(fine.ndim))
    return fine[sl]


def stokes_study(Ns: Sequence[int] = (16, 32, 64), N_ref: int = 256, tol: float = 1e-12, lid_sign: float = 1.0):
    """Self-convergence of the cavity streamfunction against an N_ref solution.

    Returns ``(report, reference_solution)``. Errors are measured at nodes
    shared with the reference grid.
    """
    Ns = _check_doublings(Ns)
    if N_ref < 4 * Ns[-1] or any(N_ref % N for N in Ns):
        raise ConfigurationError("N_ref must be a multiple of every N and at least 4·max(N)")
    spec = stokes_cavity(lid_sign)
    ref = solve_problem(spec, N_ref, tol)
    meta = {
        "problem": "stokes",
        "dim": 2,
        "layout": spec.boundary.layout(),
        "N_ref": N_ref,
        "lid_sign": lid_sign,
        "tol": tol,
    }
    report = RefinementReport([], meta)
    prev = None
    for N in Ns:
        try:
            sol = solve_problem(spec, N, tol)
        except NonConvergenceError as exc:
            report.partial, report.error = True, f"N={N}: {exc}"
            break
        k = N_ref // N
        eu, _ = error_norms(sol.U, restrict(ref.U, k), sol.grid)
        _, ev = error_norms(sol.V, restrict(ref.V, k), sol.grid)
        row = LevelRow(
            N, eu,
            observed_order(prev.err_u, eu) if prev else None,
            ev,
            observed_order(prev.err_v, ev) if prev else None,
            sol.stats.iterations, sol.stats.residual, sol.stats.method, sol.stats.wall_time,
        )
        report.rows.append(row)
        prev = row
    return report, ref


def mirror_defect(U: np.ndarray) -> float:
    """max |U(x, y) − U(1−x, y)| relative to max |U|."""
    scale = np.abs(U).max()
    return float(np.abs(U - U[::-1, :]).max() / scale) if scale > 0 else 0.0


def velocity(sol: Solution):
    """Velocity (−u_y, u_x) from the streamfunction by fourth-order differences.

    Interior nodes use centred 5-point formulas, the two nearest each wall
    one-sided 5-point ones.
    """
    from .boundary import fd_weights

    h = sol.grid.h
    U = sol.U

    def d1(axis):
        m = U.shape[axis]
        out = np.empty_like(U)
        for i in range(m):
            lo = min(max(i - 2, 0), m - 5)
            w = fd_weights(tuple(range(lo, lo + 5)), i, 1)
            acc = sum(float(c) * np.take(U, j, axis=axis) for c, j in zip(w, range(lo, lo + 5)))
            idx = [slice(None)] * U.ndim
            idx[axis] = i
            out[tuple(idx)] = acc / h
        return out

    return -d1(1), d1(0)


# -- output ---------------------------------------------------------------------


def grid_dump(sol: Solution) -> str:
    """One line ``x y [z] u v`` per node, x fastest."""
    cols = [c.ravel(order="F") for c in sol.grid.mesh()]
    cols += [sol.U.ravel(order="F"), sol.V.ravel(order="F")]
    data = np.column_stack(cols)
    buf = io.StringIO()
    np.savetxt(buf, data, fmt="%.5e")
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_report(
    report,
    outdir: Union[str, Path],
    stem: str = "report",
    formats: Sequence[str] = ("csv", "json"),
    solution: Optional[Solution] = None,
) -> list[Path]:
    """Write ``stem.csv`` / ``stem.json`` (and ``stem_grid.txt`` given a solution)."""
    outdir = Path(outdir)
    written = []
    for f in formats:
        if f == "csv":
            written.append(_write(outdir / f"{stem}.csv", report.to_csv()))
        elif f == "json":
            written.append(_write(outdir / f"{stem}.json", report.to_json()))
        elif f == "txt":
            written.append(_write(outdir / f"{stem}.txt", report.to_text()))
        else:
            raise ConfigurationError(f"unknown report format {f!r}")
    if solution is not None:
        written.append(_write(outdir / f"{stem}_grid.txt", grid_dump(solution)))
    return written
