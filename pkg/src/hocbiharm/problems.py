"""Manufactured solutions and the modified lid-driven Stokes cavity.

Loads ``f = Δ²u`` are closed forms worked out by hand; :func:`check_load`
guards them against a sixth-order finite-difference Δ² of ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np

from .boundary import (
    BoundarySpec,
    FirstKind,
    ProblemSpec,
    SecondKind,
    fd_weights,
    outward_normal_derivative,
)
from .errors import ConfigurationError, DomainError
from .grid import Side, sides


@dataclass
class ManufacturedProblem:
    name: str
    dim: int
    u: Callable
    grad: Callable
    lap: Callable
    f: Callable
    params: dict = field(default_factory=dict)
    # length over which u varies; sets the finite-difference oracle step
    length_scale: float = 1.0

    def to_problem(self, layout: Union[str, dict] = "first", corner_v: str = "exact") -> ProblemSpec:
        """Boundary data restricted from the exact fields.

        ``layout`` is ``"first"``, ``"second"``, ``"mixed"`` (second kind on
        ``xlo`` only) or a mapping side name → ``"first"``/``"second"``.
        ``corner_v="exact"`` hands Δu to the corner/edge construction;
        ``"numeric"`` makes it differentiate g_D instead.
        """
        kinds = resolve_layout(layout, self.dim)
        conds = {}
        for s in sides(self.dim):
            if kinds[s] == "first":
                conds[s] = FirstKind(self.u, outward_normal_derivative(self.grad, s))
            else:
                conds[s] = SecondKind(self.u, self.lap)
        if corner_v not in ("exact", "numeric"):
            raise DomainError(f"corner_v must be 'exact' or 'numeric', got {corner_v!r}")
        bnd = BoundarySpec(conds, exact_v=self.lap if corner_v == "exact" else None)
        return ProblemSpec(
            dim=self.dim,
            f=self.f,
            boundary=bnd,
            exact_u=self.u,
            exact_v=self.lap,
            name=self.name,
            meta={"params": dict(self.params), "layout": bnd.layout()},
        )


def resolve_layout(layout: Union[str, dict], dim: int) -> dict:
    all_sides = sides(dim)
    if isinstance(layout, str):
        if layout == "first":
            return {s: "first" for s in all_sides}
        if layout == "second":
            return {s: "second" for s in all_sides}
        if layout == "mixed":
            return {s: "second" if s == Side(0, False) else "first" for s in all_sides}
        raise ConfigurationError(f"unknown boundary layout {layout!r}")
    kinds = {s: "first" for s in all_sides}
    for k, v in layout.items():
        s = Side.from_name(k) if isinstance(k, str) else Side(*k)
        if v not in ("first", "second"):
            raise ConfigurationError(f"side {s.name}: kind must be 'first' or 'second'")
        kinds[s] = v
    return kinds


def example_smooth_2d() -> ManufacturedProblem:
    def u(x, y):
        return x**2 + y**2 - x * np.exp(x) * np.cos(y)

    def grad(x, y):
        ex = np.exp(x)
        return (2 * x - ex * np.cos(y) - x * ex * np.cos(y), 2 * y + x * ex * np.sin(y))

    def lap(x, y):
        return 4 - 2 * np.exp(x) * np.cos(y)

    def f(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ManufacturedProblem("smooth2d", 2, u, grad, lap, f)


def example_osc_2d(k1: float = 25.0, k2: float = 5.0) -> ManufacturedProblem:
    if k1 <= 0 or k2 <= 0:
        raise DomainError("wave numbers must be positive")
    kk = k1**2 + k2**2

    def u(x, y):
        return np.sin(k1 * x) * np.cos(k2 * y)

    def grad(x, y):
        return (
            k1 * np.cos(k1 * x) * np.cos(k2 * y),
            -k2 * np.sin(k1 * x) * np.sin(k2 * y),
        )

    def lap(x, y):
        return -kk * u(x, y)

    def f(x, y):
        return kk**2 * u(x, y)

    return ManufacturedProblem(
        "osc2d", 2, u, grad, lap, f, params={"k1": k1, "k2": k2}, length_scale=1.0 / max(k1, k2)
    )


def example_smooth_3d() -> ManufacturedProblem:
    def u(x, y, z):
        return x * y * z * np.log(x + y + z + 1)

    def grad(x, y, z):
        s = x + y + z + 1
        L = np.log(s)
        return (
            y * z * (x / s + L),
            x * z * (y / s + L),
            x * y * (z / s + L),
        )

    def lap(x, y, z):
        s = x + y + z + 1
        num = (
            2 * x**2 * y + 2 * x**2 * z + 2 * x * y**2 + 3 * x * y * z + 2 * x * y
            + 2 * x * z**2 + 2 * x * z + 2 * y**2 * z + 2 * y * z**2 + 2 * y * z
        )
        return num / s**2

    def f(x, y, z):
        s = x + y + z + 1
        num = (
            4 * x**3 + 8 * x**2 + 15 * x * y * z + 4 * x * y + 4 * x * z + 4 * x
            + 4 * y**3 + 8 * y**2 + 4 * y * z + 4 * y + 4 * z**3 + 8 * z**2 + 4 * z
        )
        return -2 * num / s**4

    return ManufacturedProblem("smooth3d", 3, u, grad, lap, f)


def example_osc_3d(k1: float = 25.0, k2: float = 5.0, k3: float = 25.0) -> ManufacturedProblem:
    if min(k1, k2, k3) <= 0:
        raise DomainError("wave numbers must be positive")
    kk = k1**2 + k2**2 + k3**2

    def u(x, y, z):
        return np.sin(k1 * x) * np.cos(k2 * y) * np.sin(k3 * z)

    def grad(x, y, z):
        return (
            k1 * np.cos(k1 * x) * np.cos(k2 * y) * np.sin(k3 * z),
            -k2 * np.sin(k1 * x) * np.sin(k2 * y) * np.sin(k3 * z),
            k3 * np.sin(k1 * x) * np.cos(k2 * y) * np.cos(k3 * z),
        )

    def lap(x, y, z):
        return -kk * u(x, y, z)

    def f(x, y, z):
        return kk**2 * u(x, y, z)

    return ManufacturedProblem(
        "osc3d",
        3,
        u,
        grad,
        lap,
        f,
        params={"k1": k1, "k2": k2, "k3": k3},
        length_scale=1.0 / max(k1, k2, k3),
    )


def polynomial(coeffs: dict, name: Optional[str] = None) -> ManufacturedProblem:
    """Manufactured problem for a polynomial given as ``{exponents: coefficient}``."""
    from .derive import diff, laplacian

    poly = {tuple(e): Fraction(c) for e, c in coeffs.items()}
    dim = len(next(iter(poly)))
    grads = [diff(poly, a) for a in range(dim)]
    lap_p = laplacian(poly)
    bilap = laplacian(lap_p)

    def ev(p):
        items = [(float(c), e) for e, c in p.items()]

        def fn(*x):
            out = np.zeros(np.broadcast(*x).shape)
            for c, e in items:
                term = c
                for xa, k in zip(x, e):
                    term = term * xa**k
                out = out + term
            return out

        return fn

    gfns = [ev(g) for g in grads]
    label = name or "poly:" + "+".join(
        f"{c}*" + "".join(f"{'xyz'[a]}^{k}" for a, k in enumerate(e) if k) for e, c in poly.items()
    )
    return ManufacturedProblem(
        label,
        dim,
        ev(poly),
        lambda *x: tuple(g(*x) for g in gfns),
        ev(lap_p),
        ev(bilap),
        params={"coefficients": {str(e): str(c) for e, c in poly.items()}},
    )


def lid_profile(x):
    return x**6 * (x - 1) ** 6


def stokes_cavity(lid_sign: float = 1.0) -> ProblemSpec:
    """Streamfunction u for the cavity with velocity (−u_y, u_x).

    u = 0 on the walls; the velocity vanishes except on the lid y = 1, where it
    is (x⁶(x−1)⁶, 0). On the lid −u_y = x⁶(x−1)⁶, so the outward normal
    derivative is g_N = u_y = −x⁶(x−1)⁶. ``lid_sign=-1`` reverses the lid.
    """

    def zero(*x):
        return np.zeros(np.broadcast(*x).shape)

    def lid_gn(x, y):
        return -lid_sign * lid_profile(x) * np.ones_like(y)

    conds = {s: FirstKind(zero, zero) for s in sides(2)}
    conds[Side(1, True)] = FirstKind(zero, lid_gn)
    return ProblemSpec(
        dim=2,
        f=zero,
        boundary=BoundarySpec(conds),
        name="stokes",
        meta={"lid_sign": lid_sign, "layout": {s.name: "first" for s in sides(2)}},
    )


def fd_bilaplacian(u: Callable, points: np.ndarray, step: float) -> np.ndarray:
    """Sixth-order central-difference Δ²u at ``points`` (shape (m, dim))."""
    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    w4 = [float(c) for c in fd_weights(tuple(range(-4, 5)), 0, 4)]
    w2 = [float(c) for c in fd_weights(tuple(range(-3, 4)), 0, 2)]
    total = np.zeros(len(points))

    def at(shift):
        p = points + shift
        return u(*p.T)

    for a in range(dim):
        e = np.eye(dim)[a] * step
        total += sum(c * at(k * e) for c, k in zip(w4, range(-4, 5))) / step**4
    for a in range(dim):
        for b in range(a + 1, dim):
            ea, eb = np.eye(dim)[a] * step, np.eye(dim)[b] * step
            mixed = sum(
                ca * cb * at(ka * ea + kb * eb)
                for ca, ka in zip(w2, range(-3, 4))
                for cb, kb in zip(w2, range(-3, 4))
                if ca and cb
            )
            total += 2 * mixed / step**4
    return total


def check_load(problem: ManufacturedProblem, n_points: int = 100, seed: int = 0, rtol: float = 1e-5) -> dict:
    """Compare the closed-form load with the finite-difference Δ² at random points."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.1, 0.9, size=(n_points, problem.dim))
    step = 0.05 * problem.length_scale
    fd = fd_bilaplacian(problem.u, pts, step)
    exact = np.asarray(problem.f(*pts.T), dtype=float) * np.ones(n_points)
    scale = max(np.abs(exact).max(), np.abs(problem.u(*pts.T)).max() / problem.length_scale**4)
    err = float(np.abs(fd - exact).max() / scale)
    return {"problem": problem.name, "max_scaled_error": err, "passed": err <= rtol}


PROBLEMS = {
    "smooth2d": example_smooth_2d,
    "osc2d": example_osc_2d,
    "smooth3d": example_smooth_3d,
    "osc3d": example_osc_3d,
}


def get_problem(name: str, **params) -> ManufacturedProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
