"""Uniform node-centred tensor grids on boxes in 2D and 3D.

Nodes are addressed by integer multi-indices ``idx`` with ``0 <= idx[a] <= n[a]``.
Flat (lexicographic) numbering runs with the x index fastest, which is the
Fortran order of an array of shape ``grid.shape``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError

AXIS_NAMES = "xyz"


class Side(NamedTuple):
    """One face of the box: the ``axis`` it is normal to and which end it sits on."""

    axis: int
    upper: bool

    @property
    def name(self) -> str:
        return AXIS_NAMES[self.axis] + ("hi" if self.upper else "lo")

    @property
    def inward(self) -> int:
        """Sign of the inward normal along ``axis``."""
        return -1 if self.upper else 1

    @classmethod
    def from_name(cls, name: str) -> "Side":
        key = SIDE_ALIASES.get(name, name)
        if len(key) != 3 or key[0] not in AXIS_NAMES or key[1:] not in ("lo", "hi"):
            raise DomainError(f"unknown side {name!r}")
        return cls(AXIS_NAMES.index(key[0]), key[1:] == "hi")

    def __str__(self) -> str:
        return self.name


# 2D conveniences; the canonical names are xlo/xhi/ylo/yhi(/zlo/zhi).
SIDE_ALIASES = {"left": "xlo", "right": "xhi", "bottom": "ylo", "top": "yhi"}


def sides(dim: int) -> list[Side]:
    """All sides of a ``dim``-dimensional box in canonical order."""
    return [Side(a, up) for a in range(dim) for up in (False, True)]


@dataclass(frozen=True)
class NodeClass:
    """Interior, face, edge (3D only) or corner.

    ``sides`` lists the box sides the node lies on, ordered by axis, so the
    id of an edge or corner is stable (e.g. ``"xlo-ylo"``).
    """

    kind: str
    sides: tuple[Side, ...] = ()

    @property
    def id(self) -> str:
        return "-".join(s.name for s in self.sides) if self.sides else "interior"

    def __str__(self) -> str:
        return f"{self.kind.capitalize()}({self.id})" if self.sides else "Interior"


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid on ``[lo, hi]`` with ``n[a]`` cells per axis and common spacing ``h``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]
    h: float = field(init=False)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        n = tuple(int(v) for v in self.n)
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (2, 3):
            raise DomainError("grid must be 2D or 3D with matching lo/hi/n lengths")
        if min(n) < 2:
            raise DomainError(f"need at least 2 cells per axis, got {n}")
        spacings = [(b - a) / m for a, b, m in zip(lo, hi, n)]
        h = spacings[0]
        if h <= 0 or any(abs(s - h) > math.ulp(h) for s in spacings):
            raise DomainError(f"axes have different spacings {spacings}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)

    @classmethod
    def unit(cls, dim: int, n: int) -> "UniformGrid":
        """The unit square/cube with ``n`` cells per axis."""
        return cls((0.0,) * dim, (1.0,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(m + 1 for m in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def _check(self, idx) -> tuple[int, ...]:
        idx = tuple(int(i) for i in idx)
        if len(idx) != self.dim or any(i < 0 or i > m for i, m in zip(idx, self.n)):
            raise DomainError(f"index {idx} outside grid with n={self.n}")
        return idx

    def classify(self, idx) -> NodeClass:
        idx = self._check(idx)
        on = tuple(
            Side(a, i == m) for a, (i, m) in enumerate(zip(idx, self.n)) if i in (0, m)
        )
        if len(on) == self.dim:
            return NodeClass("corner", on)
        return NodeClass({0: "interior", 1: "face", 2: "edge"}[len(on)], on)

    def node_coords(self, idx) -> tuple[float, ...]:
        idx = self._check(idx)
        return tuple(l + i * self.h for l, i in zip(self.lo, idx))

    def lex_index(self, idx) -> int:
        idx = self._check(idx)
        flat, stride = 0, 1
        for i, m in zip(idx, self.shape):
            flat += i * stride
            stride *= m
        return flat

    def lex_unindex(self, flat: int) -> tuple[int, ...]:
        flat = int(flat)
        if not 0 <= flat < self.size:
            raise DomainError(f"flat index {flat} outside [0, {self.size})")
        out = []
        for m in self.shape:
            flat, r = divmod(flat, m)
            out.append(r)
        return tuple(out)

    # Vectorised helpers used by assembly; ``idx`` arrays have shape (m, dim).

    def all_indices(self) -> np.ndarray:
        """Every node multi-index, in lexicographic order."""
        axes = [np.arange(m) for m in self.shape]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel(order="F") for g in mesh], axis=1)

    def flat(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(idx).T), self.shape, order="F")

    def coords(self, idx: np.ndarray) -> tuple[np.ndarray, ...]:
        idx = np.asarray(idx)
        return tuple(self.lo[a] + idx[:, a] * self.h for a in range(self.dim))

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape`` (``ij`` indexing)."""
        axes = [l + np.arange(m) * self.h for l, m in zip(self.lo, self.shape)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def boundary_count(self, idx: np.ndarray) -> np.ndarray:
        """Number of axes on which each index sits at an endpoint."""
        idx = np.asarray(idx)
        return ((idx == 0) | (idx == np.asarray(self.n))).sum(axis=1)

    def on_side(self, idx: np.ndarray, side: Side) -> np.ndarray:
        idx = np.asarray(idx)
        return idx[:, side.axis] == (self.n[side.axis] if side.upper else 0)


def class_counts(grid: UniformGrid) -> dict[str, int]:
    """Closed-form node counts per class, for cross-checking ``classify``."""
    inner = [m - 1 for m in grid.n]
    if grid.dim == 2:
        return {
            "interior": inner[0] * inner[1],
            "face": 2 * inner[0] + 2 * inner[1],
            "corner": 4,
        }
    x, y, z = inner
    return {
        "interior": x * y * z,
        "face": 2 * (x * y + y * z + x * z),
        "edge": 4 * (x + y + z),
        "corner": 8,
    }

