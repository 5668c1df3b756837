"""Boundary-condition data and the Dirichlet values of v = Δu it implies.

Fields are plain callables taking coordinate arrays ``(x, y[, z])`` and
returning values that broadcast against them. ``g_N`` is always the
derivative along the *outward* normal; build it with
:func:`outward_normal_derivative` so the sign convention lives in one place.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import Side, UniformGrid, sides

logger = logging.getLogger(__name__)

Field = Callable[..., np.ndarray]

# Relative disagreement above which a mixed corner logs a warning.
CORNER_MISMATCH_RTOL = 1e-8


@dataclass(frozen=True)
class FirstKind:
    """u = g_D and ∂ₙu = g_N on the side."""

    g_D: Field
    g_N: Field
    kind = "first"


@dataclass(frozen=True)
class SecondKind:
    """u = g_D and Δu = g_L on the side."""

    g_D: Field
    g_L: Field
    kind = "second"


SideCondition = Union[FirstKind, SecondKind]


@dataclass
class BoundarySpec:
    """One condition per side of the box, plus optional exact Δu for corners/edges."""

    sides: dict
    exact_v: Optional[Field] = None

    def __post_init__(self):
        self.sides = {
            (Side.from_name(k) if isinstance(k, str) else Side(*k)): c
            for k, c in self.sides.items()
        }

    def check(self, dim: int) -> None:
        missing = [s.name for s in sides(dim) if s not in self.sides]
        extra = [s.name for s in self.sides if s.axis >= dim]
        if missing or extra:
            raise ConfigurationError(
                f"boundary must cover every side exactly: missing {missing}, extra {extra}"
            )
        for s, c in self.sides.items():
            if not isinstance(c, (FirstKind, SecondKind)):
                raise ConfigurationError(f"side {s.name}: unsupported condition {c!r}")

    def first_kind(self) -> list[Side]:
        return [s for s in sorted(self.sides) if isinstance(self.sides[s], FirstKind)]

    def second_kind(self) -> list[Side]:
        return [s for s in sorted(self.sides) if isinstance(self.sides[s], SecondKind)]

    def layout(self) -> dict[str, str]:
        return {s.name: self.sides[s].kind for s in sorted(self.sides)}


@dataclass
class ProblemSpec:
    """Load ``f`` on the domain, boundary data, and optional exact fields."""

    dim: int
    f: Field
    boundary: BoundarySpec
    exact_u: Optional[Field] = None
    exact_v: Optional[Field] = None
    name: str = "problem"
    meta: dict = field(default_factory=dict)


def evaluate(fn: Field, coords) -> np.ndarray:
    """Evaluate a field on coordinate arrays, broadcasting constant results."""
    coords = tuple(np.asarray(c, dtype=float) for c in coords)
    out = np.asarray(fn(*coords), dtype=float)
    return np.broadcast_to(out, np.broadcast(*coords).shape).copy()


def outward_normal_derivative(gradient: Callable[..., tuple], side: Side) -> Field:
    """g_N for ``side`` from a gradient callable: ±∂u/∂x_axis with the outward sign."""
    sign = 1.0 if side.upper else -1.0

    def g_N(*x):
        return sign * np.asarray(gradient(*x)[side.axis], dtype=float)

    return g_N


@lru_cache(maxsize=None)
def fd_weights(nodes: tuple, x0: int, order: int) -> tuple:
    """Exact finite-difference weights for the ``order``-th derivative at ``x0``.

    ``nodes`` are integer sample positions in units of h. Fornberg's recursion
    in rational arithmetic.
    """
    n = len(nodes)
    c = [[Fraction(0)] * (order + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = Fraction(nodes[0] - x0)
    for i in range(1, n):
        mn = min(i, order)
        c2 = Fraction(1)
        c5 = c4
        c4 = Fraction(nodes[i] - x0)
        for j in range(i):
            c3 = Fraction(nodes[i] - nodes[j])
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return tuple(row[order] for row in c)


def numeric_tangential_d2(samples, h: float, position: Union[int, str] = "interior") -> float:
    """Second derivative from equally spaced samples, O(h⁴) accurate.

    ``position`` is the sample index where the derivative is wanted, or
    ``"endpoint"`` (index 0) / ``"interior"`` (middle sample). Uses the 5-point
    centred formula when two samples exist on each side, otherwise the nearest
    6-point one-sided window.
    """
    samples = np.asarray(samples, dtype=float)
    m = len(samples)
    if position == "endpoint":
        position = 0
    elif position == "interior":
        position = m // 2
    p = int(position)
    if not 0 <= p < m:
        raise DomainError(f"position {p} outside {m} samples")
    if 2 <= p <= m - 3:
        window = range(p - 2, p + 3)
    else:
        if m < 6:
            raise DomainError(f"one-sided O(h^4) second derivative needs 6 samples, got {m}")
        start = min(max(p - 2, 0), m - 6)
        window = range(start, start + 6)
    w = fd_weights(tuple(window), p, 2)
    return float(sum(float(c) * samples[i] for c, i in zip(w, window))) / h**2


def tangential_laplacian(spec: BoundarySpec, grid: UniformGrid, idx) -> float:
    """Δu at a corner/edge node from second derivatives of g_D along each axis.

    Along an axis where the node sits at an endpoint, the derivative is taken
    on a side that contains that axis direction; along the free axis of a 3D
    edge it is taken once, on the first adjacent side.
    """
    idx = tuple(int(i) for i in idx)
    node_sides = grid.classify(idx).sides
    if len(node_sides) < 2:
        raise DomainError(f"node {idx} is not a corner or edge node")
    total = 0.0
    for axis in range(grid.dim):
        holders = [s for s in node_sides if s.axis != axis]
        if not holders:
            raise DomainError(f"no side through {idx} contains axis {axis}")
        side = holders[0]
        cond = spec.sides[side]
        if not hasattr(cond, "g_D"):
            raise ConfigurationError(f"side {side.name} carries no g_D")
        pts = np.tile(np.asarray(idx, dtype=int), (grid.shape[axis], 1))
        pts[:, axis] = np.arange(grid.shape[axis])
        samples = evaluate(cond.g_D, grid.coords(pts))
        total += numeric_tangential_d2(samples, grid.h, idx[axis])
    return total


def _check_gd(spec: BoundarySpec, node_sides) -> None:
    for s in node_sides:
        c = spec.sides.get(s)
        if c is None or getattr(c, "g_D", None) is None:
            raise ConfigurationError(f"side {s.name} carries no g_D")


def corner_v_2d(spec: BoundarySpec, grid: UniformGrid, corner) -> float:
    """v = Δu at a 2D corner, given as a multi-index or an id like ``"xlo-ylo"``."""
    if grid.dim != 2:
        raise DomainError("corner_v_2d needs a 2D grid")
    idx = _corner_index(grid, corner)
    node = grid.classify(idx)
    if node.kind != "corner":
        raise DomainError(f"{idx} is not a corner")
    _check_gd(spec, node.sides)
    if spec.exact_v is not None:
        return float(evaluate(spec.exact_v, grid.node_coords(idx)))
    return tangential_laplacian(spec, grid, idx)


def edge_v_3d(spec: BoundarySpec, grid: UniformGrid, edge, node) -> float:
    """v = Δu at a node of a 3D edge (``edge`` is an id like ``"xlo-ylo"`` or None)."""
    if grid.dim != 3:
        raise DomainError("edge_v_3d needs a 3D grid")
    cls = grid.classify(node)
    if cls.kind != "edge" or (edge is not None and cls.id != edge):
        raise DomainError(f"node {tuple(node)} is not on edge {edge}")
    _check_gd(spec, cls.sides)
    if spec.exact_v is not None:
        return float(evaluate(spec.exact_v, grid.node_coords(node)))
    return tangential_laplacian(spec, grid, node)


def _corner_index(grid: UniformGrid, corner) -> tuple[int, ...]:
    if isinstance(corner, str):
        ends = {Side.from_name(p) for p in corner.split("-")}
        if len(ends) != grid.dim or {s.axis for s in ends} != set(range(grid.dim)):
            raise DomainError(f"bad corner id {corner!r}")
        return tuple(grid.n[s.axis] if s.upper else 0 for s in sorted(ends))
    return tuple(int(i) for i in corner)


def dirichlet_u(spec: BoundarySpec, grid: UniformGrid) -> np.ndarray:
    """Full-grid array of g_D on boundary nodes, NaN inside."""
    idx = grid.all_indices()
    out = np.full(grid.size, np.nan)
    for s in reversed(sides(grid.dim)):
        on = grid.on_side(idx, s)
        out[on] = evaluate(spec.sides[s].g_D, grid.coords(idx[on]))
    return out


def dirichlet_v(spec: BoundarySpec, grid: UniformGrid) -> np.ndarray:
    """Full-grid array of known v values, NaN where v is an unknown.

    v is known on second-kind sides (g_L, the lowest-numbered second-kind
    side wins at shared nodes) and at every corner, plus every edge in 3D.
    Where a second-kind side meets a first-kind one the tangential
    construction is computed too and a warning is logged on disagreement.
    """
    idx = grid.all_indices()
    out = np.full(grid.size, np.nan)
    second = spec.second_kind()
    for s in reversed(second):
        on = grid.on_side(idx, s)
        out[on] = evaluate(spec.sides[s].g_L, grid.coords(idx[on]))
    low_dim = np.nonzero(grid.boundary_count(idx) >= 2)[0]
    for flat in low_dim:
        node = tuple(idx[flat])
        node_sides = grid.classify(node).sides
        known = not np.isnan(out[flat])
        if known and all(s in second for s in node_sides):
            continue
        try:
            if spec.exact_v is not None:
                value = float(evaluate(spec.exact_v, grid.node_coords(node)))
            else:
                _check_gd(spec, node_sides)
                value = tangential_laplacian(spec, grid, node)
        except DomainError:
            if known:
                continue
            raise
        if not known:
            out[flat] = value
        elif abs(value - out[flat]) > CORNER_MISMATCH_RTOL * max(1.0, abs(value)):
            logger.warning(
                "v at %s: g_L gives %.12g, tangential g_D construction gives %.12g",
                node, out[flat], value,
            )
    return out


def normal_data(spec: BoundarySpec, grid: UniformGrid, side: Side) -> np.ndarray:
    """Full-grid array holding g_N of ``side`` on that side's nodes (NaN elsewhere)."""
    idx = grid.all_indices()
    out = np.full(grid.size, np.nan)
    on = grid.on_side(idx, side)
    out[on] = evaluate(spec.sides[side].g_N, grid.coords(idx[on]))
    return out
