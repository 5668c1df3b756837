"""Compact stencils with exact rational coefficients.

A stencil's residual at a node is

    R = h⁻² Σ u_part·U + Σ v_part·V − h² Σ f_part·f − h⁻¹ Σ g_part·g

where V approximates v = Δu, f = Δ²u is the load and g is the outward normal
derivative of u on the stencil's anchor side. Interior stencils double as
Poisson stencils for the v-equation by reading (U, V) as (V, f).

Boundary stencils are stored on their anchor side. The canonical anchor is
``xlo`` with offsets ``(normal, t1[, t2])``, normal pointing into the domain;
``g_part`` keys are tangential offsets along the remaining axes in increasing
axis order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError
from .grid import Side, UniformGrid

H_POWERS = {"u": -2, "v": 0, "f": 2, "g": -1}
PARTS = ("u", "v", "f", "g")
CANONICAL_SIDE = Side(0, False)


def _frac_dict(d) -> dict:
    return {tuple(int(i) for i in k): Fraction(v) for k, v in d.items() if Fraction(v) != 0}


@dataclass(frozen=True)
class Stencil:
    name: str
    dim: int
    u_part: dict
    v_part: dict = field(default_factory=dict)
    f_part: dict = field(default_factory=dict)
    g_part: dict = field(default_factory=dict)
    anchor: Optional[Side] = None

    def __post_init__(self):
        for p in PARTS:
            object.__setattr__(self, f"{p}_part", _frac_dict(getattr(self, f"{p}_part")))

    def part(self, name: str) -> dict:
        return getattr(self, f"{name}_part")

    @property
    def is_boundary(self) -> bool:
        return self.anchor is not None

    def is_compact(self) -> bool:
        offs = [o for p in ("u", "v", "f") for o in self.part(p)] + list(self.g_offsets())
        return all(len(o) == self.dim and all(c in (-1, 0, 1) for c in o) for o in offs)

    def u_sum(self) -> Fraction:
        return sum(self.u_part.values(), Fraction(0))

    def g_offsets(self) -> dict:
        """g_part keyed by full grid offsets (zero along the anchor's normal)."""
        if not self.g_part:
            return {}
        side = self.anchor or CANONICAL_SIDE
        tang = [a for a in range(self.dim) if a != side.axis]
        out = {}
        for t, c in self.g_part.items():
            o = [0] * self.dim
            for a, ti in zip(tang, t):
                o[a] = ti
            out[tuple(o)] = c
        return out

    def to_dict(self) -> dict:
        def enc(d):
            return [
                {"offset": list(k), "coef": [v.numerator, v.denominator]}
                for k, v in sorted(d.items())
            ]

        return {
            "name": self.name,
            "dim": self.dim,
            "anchor": self.anchor.name if self.anchor else None,
            "h_powers": dict(H_POWERS),
            "parts": {p: enc(self.part(p)) for p in PARTS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Stencil":
        def dec(items):
            return {tuple(e["offset"]): Fraction(*e["coef"]) for e in items}

        return cls(
            name=d["name"],
            dim=d["dim"],
            anchor=Side.from_name(d["anchor"]) if d["anchor"] else None,
            **{f"{p}_part": dec(d["parts"].get(p, [])) for p in PARTS},
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _to_canonical(o, side: Side):
    tang = [o[a] for a in range(len(o)) if a != side.axis]
    return (o[side.axis] * side.inward, *tang)


def _from_canonical(c, side: Side):
    dim = len(c)
    out = [0] * dim
    out[side.axis] = c[0] * side.inward
    for a, t in zip([a for a in range(dim) if a != side.axis], c[1:]):
        out[a] = t
    return tuple(out)


def rotate_to_side(st: Stencil, side) -> Stencil:
    """Re-anchor a boundary stencil on ``side`` (a Side or side name)."""
    if not st.is_boundary:
        raise DomainError(f"{st.name} is an interior stencil")
    side = Side.from_name(side) if isinstance(side, str) else Side(*side)
    if side.axis >= st.dim:
        raise DomainError(f"side {side.name} does not exist in {st.dim}D")

    def move(d):
        return {_from_canonical(_to_canonical(o, st.anchor), side): c for o, c in d.items()}

    return replace(
        st,
        anchor=side,
        u_part=move(st.u_part),
        v_part=move(st.v_part),
        f_part=move(st.f_part),
    )


def apply(st: Stencil, grid: UniformGrid, node, u, v=None, f=None, g=None) -> float:
    """Residual of ``st`` at ``node`` for full-grid field arrays.

    Arrays may be node-shaped (``grid.shape``) or flat in lexicographic order.
    Fields a stencil does not touch may be omitted.
    """
    node = np.asarray(node, dtype=int)
    h = grid.h
    total = 0.0
    fields = {"u": u, "v": v, "f": f, "g": g}
    for p in PARTS:
        entries = st.g_offsets() if p == "g" else st.part(p)
        if not entries:
            continue
        arr = fields[p]
        if arr is None:
            raise DomainError(f"{st.name} needs the {p} field")
        arr = np.asarray(arr, dtype=float).reshape(grid.shape, order="F")
        sign = -1.0 if p in ("f", "g") else 1.0
        acc = 0.0
        for o, c in entries.items():
            at = node + np.asarray(o)
            if np.any(at < 0) or np.any(at > np.asarray(grid.n)):
                raise DomainError(f"{st.name}: offset {o} from {tuple(node)} leaves the grid")
            val = arr[tuple(at)]
            if np.isnan(val):
                raise DomainError(f"{st.name}: {p} undefined at {tuple(at)}")
            acc += float(c) * val
        total += sign * acc * h ** H_POWERS[p]
    return total


def _sym2(d):
    """Expand a 2D canonical half-stencil given for t >= 0 to ±t."""
    out = {}
    for (n, t), c in d.items():
        out[(n, t)] = c
        out[(n, -t)] = c
    return out


F = Fraction

HOC9_2D = Stencil(
    "HOC9_2D",
    2,
    u_part={
        (i, j): F({0: -20, 1: 4, 2: 1}[abs(i) + abs(j)], 6)
        for i in (-1, 0, 1)
        for j in (-1, 0, 1)
    },
    v_part={(0, 0): F(-8, 12), (1, 0): F(-1, 12), (-1, 0): F(-1, 12), (0, 1): F(-1, 12), (0, -1): F(-1, 12)},
)

# Poisson Neumann closure whose source (the v field here) reaches the ghost column.
NEUMANN_HOC_2D = Stencil(
    "NEUMANN_HOC_2D",
    2,
    u_part=_sym2({(0, 1): F(4, 6), (1, 1): F(2, 6), (0, 0): F(-20, 6), (1, 0): F(8, 6)}),
    v_part={
        (0, -1): F(-1, 12),
        (-1, 0): F(1, 12),
        (0, 0): F(-8, 12),
        (1, 0): F(-3, 12),
        (0, 1): F(-1, 12),
    },
    g_part={(0,): F(-2)},
    anchor=CANONICAL_SIDE,
)

COUPLED_BOUNDARY_2D = Stencil(
    "COUPLED_BOUNDARY_2D",
    2,
    u_part=NEUMANN_HOC_2D.u_part,
    v_part=_sym2({(0, 1): F(-2, 12), (0, 0): F(-4, 12), (1, 0): F(-4, 12)}),
    f_part={(0, 0): F(-1, 12)},
    g_part={(0,): F(-2)},
    anchor=CANONICAL_SIDE,
)


def _hoc19_u(i, j, k):
    return {0: F(-4), 1: F(1, 3), 2: F(1, 6)}.get(abs(i) + abs(j) + abs(k), F(0))


HOC19_3D = Stencil(
    "HOC19_3D",
    3,
    u_part={
        (i, j, k): _hoc19_u(i, j, k)
        for i in (-1, 0, 1)
        for j in (-1, 0, 1)
        for k in (-1, 0, 1)
    },
    v_part={
        o: F(-6, 12) if o == (0, 0, 0) else F(-1, 12)
        for o in [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    },
)

# The 3D face closure exactly as typeset; kept to document that it fails
# constant consistency (its u coefficients sum to -1/2).
PRINTED_BOUNDARY_3D = Stencil(
    "PRINTED_BOUNDARY_3D",
    3,
    u_part={
        **{(0, j, k): F({0: -24, 1: 2, 2: 1}[abs(j) + abs(k)], 6) for j in (-1, 0, 1) for k in (-1, 0, 1)},
        (1, -1, 0): F(2, 6),
        (1, 0, -1): F(1, 6),
        (1, 0, 0): F(4, 6),
        (1, 1, 0): F(1, 6),
        (1, 0, 1): F(1, 6),
    },
    v_part={
        (0, -1, 0): F(-1, 12),
        (0, 0, -1): F(-1, 12),
        (0, 0, 0): F(-4, 12),
        (0, 1, 0): F(-1, 12),
        (0, 0, 1): F(-1, 12),
        (1, -1, 0): F(-1, 12),
        (1, 0, -1): F(-1, 12),
        (1, 1, 0): F(-1, 12),
        (1, 0, 1): F(-1, 12),
    },
    f_part={(0, 0, 0): F(-1, 12)},
    g_part={(0, 0): F(-2)},
    anchor=CANONICAL_SIDE,
)


@lru_cache(maxsize=None)
def coupled_boundary_3d() -> Stencil:
    """The certified 3D face closure, produced by :mod:`hocbiharm.derive`."""
    from .derive import solve_3d_boundary

    return solve_3d_boundary(symmetry=True).stencil


def interior_stencil(dim: int) -> Stencil:
    return {2: HOC9_2D, 3: HOC19_3D}[dim]


def boundary_stencil(dim: int) -> Stencil:
    return COUPLED_BOUNDARY_2D if dim == 2 else coupled_boundary_3d()


def catalog() -> dict[str, Stencil]:
    return {
        s.name: s
        for s in (HOC9_2D, NEUMANN_HOC_2D, COUPLED_BOUNDARY_2D, HOC19_3D, coupled_boundary_3d())
    }
