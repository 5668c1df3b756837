"""Sparse linear systems for the coupled scheme, the decoupled pair, and the 13-point baseline.

Unknown ordering is all U (lexicographic over interior nodes) followed by all
V (lexicographic over interior and first-kind face nodes), so the matrix is
literally ``[[A_h, B], [C, D_h]]``. Rows are scaled as the stencils are
written: u coefficients O(h⁻²), v coefficients O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .boundary import (
    FirstKind,
    ProblemSpec,
    dirichlet_u,
    dirichlet_v,
    evaluate,
    normal_data,
)
from .errors import ConfigurationError
from .grid import UniformGrid
from .stencils import boundary_stencil, interior_stencil, rotate_to_side


class _Triplets:
    """COO accumulator plus right-hand side."""

    def __init__(self, n: int):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(n)
        self.n = n

    def add(self, rows, cols, w):
        self.rows.append(rows)
        self.cols.append(cols)
        self.vals.append(np.broadcast_to(np.asarray(w, dtype=float), rows.shape))

    def couple(self, grid, rows, nodes, weights, scale, unknown_map, known):
        """Add ``scale·w`` for each offset: into the matrix where the neighbour is
        an unknown, into the rhs (negated) where its value is known."""
        for o, c in weights.items():
            flat = grid.flat(nodes + np.asarray(o))
            col = unknown_map[flat]
            w = float(c) * scale
            unk = col >= 0
            if unk.any():
                self.add(rows[unk], col[unk], w)
            if (~unk).any():
                vals = known[flat[~unk]]
                if np.isnan(vals).any():
                    raise ConfigurationError(f"offset {o}: neighbour neither unknown nor known")
                np.add.at(self.rhs, rows[~unk], -w * vals)

    def source(self, grid, rows, nodes, weights, scale, values):
        for o, c in weights.items():
            flat = grid.flat(nodes + np.asarray(o))
            np.add.at(self.rhs, rows, float(c) * scale * values[flat])

    def matrix(self) -> sp.csr_matrix:
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = np.zeros(0, dtype=int)
            v = np.zeros(0)
        m = sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return m


@dataclass
class BlockSystem:
    """Coupled system ``L [U; V] = [F1; F2]`` with its node ↔ unknown maps."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: UniformGrid
    problem: ProblemSpec
    u_map: np.ndarray
    v_map: np.ndarray
    u_known: np.ndarray
    v_known: np.ndarray

    @property
    def n_u(self) -> int:
        return int((self.u_map >= 0).sum())

    @property
    def n_v(self) -> int:
        return int((self.v_map >= 0).sum())

    def blocks(self):
        """``(A_h, B, C, D_h, F1, F2)``."""
        m, k = self.matrix, self.n_u
        return m[:k, :k], m[:k, k:], m[k:, :k], m[k:, k:], self.rhs[:k], self.rhs[k:]

    def unpack(self, x: np.ndarray):
        """Node-shaped U and V arrays with known boundary values filled in."""
        U = self.u_known.copy()
        V = self.v_known.copy()
        mu, mv = self.u_map >= 0, self.v_map >= 0
        U[mu] = x[self.u_map[mu]]
        V[mv] = x[self.v_map[mv]]
        shape = self.grid.shape
        return U.reshape(shape, order="F"), V.reshape(shape, order="F")


def _unknown_map(mask: np.ndarray, offset: int = 0) -> np.ndarray:
    out = np.full(mask.shape, -1, dtype=np.int64)
    out[mask] = offset + np.arange(int(mask.sum()))
    return out


def assemble_coupled(grid: UniformGrid, problem: ProblemSpec) -> BlockSystem:
    bnd = problem.boundary
    bnd.check(grid.dim)
    if not bnd.first_kind():
        raise ConfigurationError("no first-kind side: use assemble_decoupled")
    idx = grid.all_indices()
    count = grid.boundary_count(idx)
    interior = count == 0
    face_unknown = np.zeros(grid.size, dtype=bool)
    for s in bnd.first_kind():
        face_unknown |= grid.on_side(idx, s) & (count == 1)

    u_map = _unknown_map(interior)
    n_u = int(interior.sum())
    v_mask = interior | face_unknown
    v_map = _unknown_map(v_mask, n_u)
    n = n_u + int(v_mask.sum())

    u_known = dirichlet_u(bnd, grid)
    v_known = dirichlet_v(bnd, grid)
    f = evaluate(problem.f, grid.coords(idx))
    h = grid.h
    acc = _Triplets(n)

    inner = interior_stencil(grid.dim)
    nodes = idx[interior]
    # u-equation: Δu = v with v as source
    rows = u_map[interior]
    acc.couple(grid, rows, nodes, inner.u_part, h**-2, u_map, u_known)
    acc.couple(grid, rows, nodes, inner.v_part, 1.0, v_map, v_known)
    # v-equation: Δv = f
    rows = v_map[interior]
    acc.couple(grid, rows, nodes, inner.u_part, h**-2, v_map, v_known)
    acc.source(grid, rows, nodes, inner.v_part, -1.0, f)

    closure = boundary_stencil(grid.dim)
    for s in bnd.first_kind():
        st = rotate_to_side(closure, s)
        sel = grid.on_side(idx, s) & (count == 1)
        nodes = idx[sel]
        rows = v_map[sel]
        g = normal_data(bnd, grid, s)
        acc.couple(grid, rows, nodes, st.u_part, h**-2, u_map, u_known)
        acc.couple(grid, rows, nodes, st.v_part, 1.0, v_map, v_known)
        acc.source(grid, rows, nodes, st.f_part, h**2, f)
        acc.source(grid, rows, nodes, st.g_offsets(), 1.0 / h, g)

    return BlockSystem(acc.matrix(), acc.rhs, grid, problem, u_map, v_map, u_known, v_known)


@dataclass
class PoissonSystem:
    """HOC Poisson system on interior nodes with Dirichlet data on the boundary."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: UniformGrid
    node_map: np.ndarray
    known: np.ndarray

    def unpack(self, x: np.ndarray) -> np.ndarray:
        out = self.known.copy()
        m = self.node_map >= 0
        out[m] = x[self.node_map[m]]
        return out.reshape(self.grid.shape, order="F")


def hoc_poisson(grid: UniformGrid, known: np.ndarray, source: np.ndarray) -> PoissonSystem:
    """Fourth-order compact Poisson system Δw = source with w = known on ∂Ω."""
    idx = grid.all_indices()
    interior = grid.boundary_count(idx) == 0
    node_map = _unknown_map(interior)
    acc = _Triplets(int(interior.sum()))
    st = interior_stencil(grid.dim)
    rows = node_map[interior]
    acc.couple(grid, rows, idx[interior], st.u_part, grid.h**-2, node_map, known)
    acc.source(grid, rows, idx[interior], st.v_part, -1.0, np.asarray(source).ravel(order="F"))
    return PoissonSystem(acc.matrix(), acc.rhs, grid, node_map, known)


@dataclass
class DecoupledSystem:
    """Pure second-kind data: solve for V first, then U with V as the source."""

    v_system: PoissonSystem
    u_known: np.ndarray
    grid: UniformGrid
    problem: ProblemSpec = field(repr=False)

    def u_system(self, V: np.ndarray) -> PoissonSystem:
        return hoc_poisson(self.grid, self.u_known, V)


def assemble_decoupled(grid: UniformGrid, problem: ProblemSpec) -> DecoupledSystem:
    bnd = problem.boundary
    bnd.check(grid.dim)
    if bnd.first_kind():
        raise ConfigurationError("first-kind sides present: use assemble_coupled")
    idx = grid.all_indices()
    f = evaluate(problem.f, grid.coords(idx))
    v_known = dirichlet_v(bnd, grid)
    return DecoupledSystem(hoc_poisson(grid, v_known, f), dirichlet_u(bnd, grid), grid, problem)


BIHARMONIC_13 = {
    **{o: 20.0 for o in [(0, 0)]},
    **{o: -8.0 for o in [(1, 0), (-1, 0), (0, 1), (0, -1)]},
    **{o: 2.0 for o in [(1, 1), (1, -1), (-1, 1), (-1, -1)]},
    **{o: 1.0 for o in [(2, 0), (-2, 0), (0, 2), (0, -2)]},
}


def assemble_13point_2d(grid: UniformGrid, problem: ProblemSpec) -> PoissonSystem:
    """Second-order 13-point Δ² on interior nodes.

    A stencil point one node outside the box is a ghost; it is eliminated with
    the central difference of the normal derivative at the boundary node
    between it and its mirror: ``u_ghost = u_mirror + 2h·g_N``.
    """
    bnd = problem.boundary
    bnd.check(grid.dim)
    if grid.dim != 2:
        raise ConfigurationError("the 13-point baseline is 2D only")
    if any(not isinstance(c, FirstKind) for c in bnd.sides.values()):
        raise ConfigurationError("the 13-point baseline needs first-kind data on every side")
    idx = grid.all_indices()
    interior = grid.boundary_count(idx) == 0
    node_map = _unknown_map(interior)
    known = dirichlet_u(bnd, grid)
    f = evaluate(problem.f, grid.coords(idx))
    h = grid.h
    acc = _Triplets(int(interior.sum()))
    nodes = idx[interior]
    rows = node_map[interior]
    acc.rhs += f[interior]
    n = np.asarray(grid.n)
    gN = {s: normal_data(bnd, grid, s) for s in bnd.sides}
    for o, c in BIHARMONIC_13.items():
        w = c / h**4
        target = nodes + np.asarray(o)
        outside = np.any((target < 0) | (target > n), axis=1)
        inside = ~outside
        acc.couple(grid, rows[inside], nodes[inside], {o: 1}, w, node_map, known)
        if outside.any():
            axis = int(np.nonzero(o)[0][0])
            step = int(np.sign(o[axis]))
            src = nodes[outside]
            wall = src.copy()
            wall[:, axis] += step
            mirror = src.copy()
            mirror[:, axis] = src[:, axis]
            side = [s for s in bnd.sides if s.axis == axis and s.upper == (step > 0)][0]
            acc.couple(grid, rows[outside], mirror, {(0, 0): 1}, w, node_map, known)
            # ghost = mirror + 2h g_N(wall), so the g_N part moves to the rhs
            np.add.at(acc.rhs, rows[outside], -w * 2 * h * gN[side][grid.flat(wall)])
    return PoissonSystem(acc.matrix(), acc.rhs, grid, node_map, known)


def m_matrix_check(system: BlockSystem) -> dict:
    """Check that −A_h is an M-matrix (sign pattern plus nonnegative dense inverse)."""
    A = system.blocks()[0].toarray()
    M = -A
    off = M - np.diag(np.diag(M))
    inv = scipy.linalg.inv(M)
    tol = 1e-12 * np.abs(inv).max()
    report = {
        "size": M.shape[0],
        "offdiag_nonpositive": bool((off <= 0).all()),
        "diag_positive": bool((np.diag(M) > 0).all()),
        "inverse_nonnegative": bool((inv >= -tol).all()),
        "min_inverse_entry": float(inv.min()),
    }
    report["passed"] = (
        report["offdiag_nonpositive"] and report["diag_positive"] and report["inverse_nonnegative"]
    )
    return report


def export_matrix_market(matrix: sp.spmatrix, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), comment=comment)
