"""Linear solvers and 2-norm condition estimates.

:func:`solve` is the general entry point: dense LU for small systems,
otherwise restarted GMRES preconditioned by an incomplete LU factorization.

:class:`SchurSolver` exploits the structure of the coupled system. With the
face V unknowns Γ split off, the remaining block is
``[[L, M], [0, L]]`` over interior U and interior V, where ``L`` and ``M``
are the interior compact stencils with homogeneous Dirichlet closure. Both are
diagonalized by the type-I discrete sine transform, so that block inverts
exactly in O(n log n) and GMRES only runs on the small Schur complement over Γ.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EstimationError, NonConvergenceError

logger = logging.getLogger(__name__)

DENSE_LIMIT = 5000


# A solve is accepted once its residual is within this multiple of the
# round-off floor, even if that floor sits above the requested tolerance.
FLOOR_FACTOR = 8.0


@dataclass
class SolveStats:
    iterations: int
    residual: float
    wall_time: float
    method: str
    floor: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def relative_residual(A, x: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return float(r / nb) if nb > 0 else float(r)


def roundoff_floor(A, x: np.ndarray, b: np.ndarray) -> float:
    """ε·‖|A||x| + |b|‖ / ‖b‖: the smallest relative residual rounding allows."""
    nb = np.linalg.norm(b)
    absA = abs(A) if sp.issparse(A) else np.abs(A)
    scale = np.linalg.norm(absA @ np.abs(x) + np.abs(b))
    return float(np.finfo(float).eps * scale / nb) if nb > 0 else 0.0


def converged(stats: SolveStats, tol: float) -> bool:
    return stats.residual <= max(tol, FLOOR_FACTOR * stats.floor)


def _check_square(A, b) -> None:
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if b.shape != (A.shape[0],):
        raise ValueError(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")


def _gmres(A, b, M, tol, max_iter, restart, x0=None):
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(
        A, b, x0=x0, M=M, rtol=tol, atol=0.0, restart=restart, maxiter=max_iter,
        callback=cb, callback_type="pr_norm",
    )
    return x, info, count[0]


def ilu_preconditioner(A: sp.spmatrix) -> spla.LinearOperator:
    """ILU preconditioner, tightening the drop tolerance on zero pivots.

    SuperLU's threshold ILU occasionally hits an exactly singular pivot on
    the coupled system; a drop tolerance of zero is the complete factorization.
    """
    A = sp.csc_matrix(A)
    last = None
    for drop in (1e-4, 1e-6, 0.0):
        try:
            if drop == 0.0:
                fac = spla.splu(A)
            else:
                fac = spla.spilu(A, drop_tol=drop, fill_factor=20)
        except RuntimeError as exc:
            last = exc
            logger.debug("ILU with drop_tol=%g failed: %s", drop, exc)
            continue
        return spla.LinearOperator(A.shape, fac.solve, dtype=float)
    raise NonConvergenceError(f"no usable factorization: {last}")


def solve(
    A,
    b: np.ndarray,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    method: str = "auto",
    restart: int = 100,
):
    """Solve ``A x = b`` to relative residual ``tol`` in the 2-norm.

    A residual within ``FLOOR_FACTOR`` times the round-off floor also counts
    as converged: below it no floating-point iterate can do better.

    ``method`` is ``"auto"`` (dense LU up to 5000 unknowns, else
    ``"gmres-ilu"``), ``"dense"`` or ``"gmres-ilu"``. Raises
    :class:`NonConvergenceError` carrying the best iterate when the residual
    target is missed.
    """
    b = np.asarray(b, dtype=float)
    _check_square(A, b)
    n = A.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "gmres-ilu"
    t0 = time.perf_counter()
    if method == "dense":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            x = scipy.linalg.lu_solve(scipy.linalg.lu_factor(dense, check_finite=False), b)
        except (ValueError, scipy.linalg.LinAlgError) as exc:
            raise NonConvergenceError(f"dense LU failed: {exc}") from exc
        iters = 0
    elif method == "gmres-ilu":
        M = ilu_preconditioner(A)
        x, info, iters = _gmres(A, b, M, tol, max_iter or 20 * restart, restart)
        if info < 0:
            raise NonConvergenceError(f"GMRES breakdown (info={info})", x=x)
    else:
        raise ValueError(f"unknown method {method!r}")
    stats = SolveStats(
        iters, relative_residual(A, x, b), time.perf_counter() - t0, method, roundoff_floor(A, x, b)
    )
    if not converged(stats, tol):
        raise NonConvergenceError(
            f"{method}: relative residual {stats.residual:.3e} > {tol:.1e}", x=x, stats=stats
        )
    return x, stats


def sine_symbol(weights: dict, n: int, dim: int, scale: float = 1.0) -> np.ndarray:
    """Eigenvalues of a reflection-symmetric stencil under the type-I sine basis.

    Grid index i = 1..n-1 per axis with zero Dirichlet values at 0 and n; the
    eigenvector for wave index k is ∏ sin(π k_a i_a / n).
    """
    k = np.arange(1, n)
    out = np.zeros((n - 1,) * dim)
    for o, c in weights.items():
        factors = np.meshgrid(*[np.cos(np.pi * k * abs(oa) / n) for oa in o], indexing="ij")
        out = out + float(c) * scale * np.prod(factors, axis=0)
    return out


class SchurSolver:
    """Exact interior elimination plus GMRES on the face V unknowns.

    ``system`` is a :class:`~hocbiharm.assembly.BlockSystem`. The interior
    blocks are checked against their sine-transform inverse on a random vector
    at construction.
    """

    def __init__(self, system, restart: int = 200, check: bool = True):
        from .stencils import interior_stencil

        grid = system.grid
        if len(set(grid.n)) != 1:
            raise ValueError("SchurSolver needs the same node count on every axis")
        A = sp.csr_matrix(system.matrix)
        self.A = A
        self.n = A.shape[0]
        self.restart = restart
        nu = system.n_u
        interior = system.u_map >= 0
        face = (system.v_map >= 0) & ~interior
        self.I = np.concatenate([np.arange(nu), system.v_map[interior]])
        self.G = system.v_map[face]
        self.nu = nu
        self.shape = tuple(m - 1 for m in grid.n)
        st = interior_stencil(grid.dim)
        n = grid.n[0]
        self.lam_u = sine_symbol(st.u_part, n, grid.dim, grid.h**-2)
        self.lam_v = sine_symbol(st.v_part, n, grid.dim)
        rows_I, rows_G = A[self.I], A[self.G]
        self.AII = rows_I[:, self.I]
        self.AIG = rows_I[:, self.G].tocsr()
        self.AGI = rows_G[:, self.I].tocsr()
        self.AGG = rows_G[:, self.G].tocsr()
        if check:
            z = np.random.default_rng(0).standard_normal(len(self.I))
            err = np.linalg.norm(self.AII @ self._interior_solve(z) - z) / np.linalg.norm(z)
            if err > 1e-8:
                raise ValueError(f"interior blocks are not the sine-diagonal stencils (err {err:.2e})")

    def _fwd(self, x):
        return scipy.fft.dstn(x.reshape(self.shape, order="F"), type=1)

    def _inv(self, y):
        return scipy.fft.idstn(y, type=1).ravel(order="F")

    def _interior_solve(self, r, transpose=False):
        ru, rv = self._fwd(r[: self.nu]), self._fwd(r[self.nu :])
        if transpose:
            # [[L, 0], [M, L]]
            yu = ru / self.lam_u
            yv = (rv - self.lam_v * yu) / self.lam_u
        else:
            # [[L, M], [0, L]]
            yv = rv / self.lam_u
            yu = (ru - self.lam_v * yv) / self.lam_u
        return np.concatenate([self._inv(yu), self._inv(yv)])

    def solve(self, b: np.ndarray, tol: float = 1e-12, max_iter: int = 20, transpose: bool = False):
        """Solve ``A x = b`` (or ``Aᵀ x = b``); ``max_iter`` counts GMRES restarts."""
        t0 = time.perf_counter()
        b = np.asarray(b, dtype=float)
        if transpose:
            AIG, AGI, AGG = self.AGI.T.tocsr(), self.AIG.T.tocsr(), self.AGG.T.tocsr()
            A = self.A.T
        else:
            AIG, AGI, AGG = self.AIG, self.AGI, self.AGG
            A = self.A

        def inner(r):
            return self._interior_solve(r, transpose)

        nG = len(self.G)
        S = spla.LinearOperator((nG, nG), lambda y: AGG @ y - AGI @ inner(AIG @ y), dtype=float)
        x = np.zeros(self.n)
        iters = 0
        floor = 0.0
        # GMRES on the Schur complement, then refinement on the full residual
        for _ in range(3):
            r = b - A @ x
            rel = np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300)
            if iters:
                floor = roundoff_floor(A, x, b)
            if rel <= max(tol, FLOOR_FACTOR * floor):
                break
            rI, rG = r[self.I], r[self.G]
            rhs = rG - AGI @ inner(rI)
            yG, info, k = _gmres(S, rhs, None, 0.1 * tol, max_iter, self.restart)
            iters += k
            if info < 0:
                raise NonConvergenceError(f"GMRES breakdown (info={info})", x=x)
            dx = np.zeros(self.n)
            dx[self.G] = yG
            dx[self.I] = inner(rI - AIG @ yG)
            x = x + dx
        stats = SolveStats(
            iters, relative_residual(A, x, b), time.perf_counter() - t0,
            "schur-gmres" + ("-T" if transpose else ""), roundoff_floor(A, x, b),
        )
        if not converged(stats, tol):
            raise NonConvergenceError(
                f"Schur GMRES: relative residual {stats.residual:.3e} > {tol:.1e}", x=x, stats=stats
            )
        return x, stats


def factorized(A) -> tuple[Callable, Callable]:
    """Callables solving with A and Aᵀ from one LU factorization."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(dense)
        if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
            raise EstimationError("matrix is numerically singular")
        return (lambda y: scipy.linalg.lu_solve(lu, y), lambda y: scipy.linalg.lu_solve(lu, y, trans=1))
    try:
        fac = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise EstimationError(f"sparse LU failed: {exc}") from exc
    return fac.solve, (lambda y: fac.solve(y, trans="T"))


def _largest_eigenvalue(apply, n, tol, max_iter, seed):
    """Largest eigenvalue of a symmetric positive operator.

    Lanczos, i.e. power iteration with Krylov acceleration: plain power
    iteration stalls on the clustered top of these spectra.
    """
    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    if n <= 2:
        dense = np.column_stack([apply(e) for e in np.eye(n)])
        return float(np.linalg.eigvalsh(0.5 * (dense + dense.T)).max())
    try:
        vals = spla.eigsh(op, k=1, which="LA", tol=0.1 * tol, v0=v0, maxiter=max_iter, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise EstimationError(f"Lanczos did not converge to {tol:g}") from exc
    return float(vals[0])


def estimate_cond2(
    A,
    tol: float = 1e-3,
    solve_A: Optional[Callable] = None,
    solve_AT: Optional[Callable] = None,
    max_iter: int = 5000,
    seed: int = 0,
) -> float:
    """2-norm condition number σ_max/σ_min.

    σ_max² is the top eigenvalue of AᵀA and σ_min⁻² the top eigenvalue of
    (AᵀA)⁻¹ = A⁻¹A⁻ᵀ (inverse iteration), both found by Lanczos. Pass ``solve_A``/``solve_AT`` to reuse a structured
    solver; by default one LU factorization serves both.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got {A.shape}")
    AT = A.T
    if solve_A is None or solve_AT is None:
        try:
            solve_A, solve_AT = factorized(A)
        except (RuntimeError, ValueError, scipy.linalg.LinAlgError) as exc:
            raise EstimationError(f"factorization failed: {exc}") from exc
    big = _largest_eigenvalue(lambda x: AT @ (A @ x), n, tol, max_iter, seed)
    try:
        small_inv = _largest_eigenvalue(lambda x: solve_A(solve_AT(x)), n, tol, max_iter, seed + 1)
    except NonConvergenceError as exc:
        raise EstimationError(f"inner solve failed: {exc}") from exc
    if big <= 0 or small_inv <= 0:
        raise EstimationError("matrix is numerically singular")
    return float(np.sqrt(big * small_inv))
