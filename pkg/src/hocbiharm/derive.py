"""Exact Taylor matching for compact stencils.

Everything here runs in :class:`fractions.Fraction` arithmetic. Polynomials
are dicts mapping exponent tuples to rational coefficients.

Truncation residuals are homogeneous in h: for a monomial of total degree d
every part of a stencil contributes a multiple of h^(d-2) (U carries h⁻²,
V = Δu drops two degrees, f = Δ²u four degrees against h², g = ∂ₙu one
degree against h⁻¹). The residual is therefore computed once at h = 1 about
the origin and reported as ``coefficient · h^(d-2)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import CertificationError, DerivationError, DomainError
from .grid import AXIS_NAMES
from .stencils import (
    CANONICAL_SIDE,
    COUPLED_BOUNDARY_2D,
    NEUMANN_HOC_2D,
    PRINTED_BOUNDARY_3D,
    Stencil,
)

MAX_DEGREE = 8


# -- polynomials ------------------------------------------------------------


def monomial(exps) -> dict:
    return {tuple(exps): Fraction(1)}


def monomials(dim: int, max_degree: int, min_degree: int = 0) -> list[tuple]:
    """Exponent tuples ordered by total degree, then lexicographically descending."""
    out = []
    for d in range(min_degree, max_degree + 1):
        block = [e for e in itertools.product(range(d + 1), repeat=dim) if sum(e) == d]
        out.extend(sorted(block, reverse=True))
    return out


def diff(poly: dict, axis: int, times: int = 1) -> dict:
    out = dict(poly)
    for _ in range(times):
        nxt = {}
        for e, c in out.items():
            if e[axis] == 0:
                continue
            e2 = list(e)
            e2[axis] -= 1
            e2 = tuple(e2)
            nxt[e2] = nxt.get(e2, Fraction(0)) + c * e[axis]
        out = {e: c for e, c in nxt.items() if c != 0}
    return out


def laplacian(poly: dict) -> dict:
    dim = len(next(iter(poly))) if poly else 0
    out: dict = {}
    for a in range(dim):
        for e, c in diff(poly, a, 2).items():
            out[e] = out.get(e, Fraction(0)) + c
    return {e: c for e, c in out.items() if c != 0}


def peval(poly: dict, point) -> Fraction:
    total = Fraction(0)
    for e, c in poly.items():
        term = c
        for p, k in zip(point, e):
            term *= Fraction(p) ** k
        total += term
    return total


def monomial_name(exps) -> str:
    parts = []
    for a, k in enumerate(exps):
        if k == 1:
            parts.append(AXIS_NAMES[a])
        elif k > 1:
            parts.append(f"{AXIS_NAMES[a]}^{k}")
    return "*".join(parts) or "1"


# -- truncation tables -------------------------------------------------------


@dataclass
class TruncationTable:
    """Residual of a stencil on each monomial: ``entries[exps] = (coef, h_power)``."""

    stencil: str
    entries: dict

    def residual(self, exps) -> Fraction:
        return self.entries[tuple(exps)][0]

    def nonzero(self) -> dict:
        return {e: v for e, v in self.entries.items() if v[0] != 0}

    def exact_through(self) -> int:
        """Largest degree d with every residual of degree <= d equal to zero."""
        bad = [sum(e) for e, (c, _) in self.entries.items() if c != 0]
        top = max(sum(e) for e in self.entries)
        return (min(bad) - 1) if bad else top

    def rows(self) -> list[dict]:
        return [
            {
                "monomial": monomial_name(e),
                "exponents": list(e),
                "residual": str(c),
                "h_power": p,
            }
            for e, (c, p) in self.entries.items()
        ]


def stencil_residual(st: Stencil, poly: dict, dim: int) -> Fraction:
    """Residual of ``st`` at the origin, h = 1, for u = ``poly``."""
    side = st.anchor or CANONICAL_SIDE
    v = laplacian(poly)
    f = laplacian(v)
    # outward normal derivative = -(derivative along the inward normal)
    g = {e: -side.inward * c for e, c in diff(poly, side.axis).items()}
    total = Fraction(0)
    total += sum((c * peval(poly, o) for o, c in st.u_part.items()), Fraction(0))
    total += sum((c * peval(v, o) for o, c in st.v_part.items()), Fraction(0))
    total -= sum((c * peval(f, o) for o, c in st.f_part.items()), Fraction(0))
    total -= sum((c * peval(g, o) for o, c in st.g_offsets().items()), Fraction(0))
    return total


def truncation_table(st: Stencil, max_degree: int) -> TruncationTable:
    if not 0 <= max_degree <= MAX_DEGREE:
        raise DomainError(f"max_degree must be in [0, {MAX_DEGREE}], got {max_degree}")
    entries = {}
    for e in monomials(st.dim, max_degree):
        entries[e] = (stencil_residual(st, monomial(e), st.dim), sum(e) - 2)
    return TruncationTable(st.name, entries)


def closure_leading_term(exps) -> Fraction:
    """h³/36·u_xyyyy − 7h³/180·u_xxxxx for u = x^a y^b, evaluated at the origin."""
    m = monomial(exps)
    xyyyy = peval(diff(diff(m, 0, 1), 1, 4), (0, 0))
    xxxxx = peval(diff(m, 0, 5), (0, 0))
    return Fraction(1, 36) * xyyyy - Fraction(7, 180) * xxxxx


def verify_2d_boundary() -> dict:
    """Degree-5 residuals of the 2D coupled closure against its expected leading term."""
    table = truncation_table(COUPLED_BOUNDARY_2D, 5)
    low = {e: c for e, (c, _) in table.entries.items() if sum(e) <= 4 and c != 0}
    if low:
        raise CertificationError(f"COUPLED_BOUNDARY_2D not exact through degree 4: {low}")
    rows = []
    for e in monomials(2, 5, 5):
        got = table.residual(e)
        rows.append(
            {
                "monomial": monomial_name(e),
                "residual": got,
                "leading_term": closure_leading_term(e),
                "h_power": 3,
            }
        )
    checks = {(1, 4): Fraction(2, 3), (5, 0): Fraction(-14, 3)}
    for e, want in checks.items():
        if table.residual(e) != want or closure_leading_term(e) != want:
            raise CertificationError(
                f"residual on {monomial_name(e)} is {table.residual(e)}, expected {want}"
            )
    return {
        "stencil": COUPLED_BOUNDARY_2D.name,
        "exact_through": table.exact_through(),
        "degree5": rows,
        "matches_leading_term": all(r["residual"] == r["leading_term"] for r in rows),
    }


def eliminate_ghost(st: Stencil) -> Stencil:
    """Replace V at the ghost node (-1, 0) using the 5-point Poisson identity for v.

    V₋₁ = h²f₀ − (V_{0,-1} − 4V₀ + V₁ + V_{0,1}).
    """
    ghost = (-1, 0)
    c = st.v_part.get(ghost)
    if c is None:
        raise DomainError(f"{st.name} has no ghost V entry")
    v_part = {o: w for o, w in st.v_part.items() if o != ghost}
    for o, w in {(0, -1): 1, (0, 0): -4, (1, 0): 1, (0, 1): 1}.items():
        v_part[o] = v_part.get(o, Fraction(0)) - c * w
    f_part = dict(st.f_part)
    # c·h²·f enters the residual with a plus sign; f_part is subtracted.
    f_part[(0, 0)] = f_part.get((0, 0), Fraction(0)) - c
    return Stencil(
        st.name + "+ghost",
        st.dim,
        u_part=st.u_part,
        v_part=v_part,
        f_part=f_part,
        g_part=st.g_part,
        anchor=st.anchor,
    )


def ghost_identity_check() -> dict:
    """Certify that eliminating the ghost V reproduces COUPLED_BOUNDARY_2D exactly."""
    # The identity itself: 5-point Laplacian of v is exact for cubic v, so the
    # ghost value is O(h⁴) accurate.
    for e in monomials(2, 3):
        v = monomial(e)
        lhs = peval(v, (-1, 0))
        rhs = peval(laplacian(v), (0, 0)) - (
            peval(v, (0, -1)) - 4 * peval(v, (0, 0)) + peval(v, (1, 0)) + peval(v, (0, 1))
        )
        if lhs != rhs:
            raise CertificationError(f"ghost identity fails on v = {monomial_name(e)}")
    got = eliminate_ghost(NEUMANN_HOC_2D)
    target = COUPLED_BOUNDARY_2D
    diffs = {}
    for p in ("u", "v", "f", "g"):
        a, b = got.part(p), target.part(p)
        for o in set(a) | set(b):
            if a.get(o, 0) != b.get(o, 0):
                diffs[(p, o)] = (a.get(o, 0), b.get(o, 0))
    if diffs:
        raise CertificationError(f"ghost elimination differs from COUPLED_BOUNDARY_2D: {diffs}")
    return {
        "v_part": {str(o): str(c) for o, c in sorted(got.v_part.items())},
        "f_part": {str(o): str(c) for o, c in sorted(got.f_part.items())},
        "matches": True,
    }


# -- 3D undetermined coefficients --------------------------------------------

FACE_OFFSETS = [(i, j, k) for i in (0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)]
TANGENT_OFFSETS = [(j, k) for j in (-1, 0, 1) for k in (-1, 0, 1)]


@dataclass
class CoefficientSystem:
    """Homogeneous equations ``rows · x = 0``, one per monomial of degree ≤ 4.

    Unknowns are ``("u", offset)`` ×18, ``("v", offset)`` ×18, ``("g", tangent)`` ×9
    and the load weight ``("f", (0, 0, 0))``. The load weight is carried as an
    unknown so the system stays homogeneous; normalisation happens in
    :func:`solve_3d_boundary`.
    """

    unknowns: list
    monomials: list
    rows: list

    @property
    def n_equations(self) -> int:
        return len(self.rows)

    @property
    def n_unknowns(self) -> int:
        return len(self.unknowns)

    def rank(self) -> int:
        _, pivots = rref([list(r) + [Fraction(0)] for r in self.rows], self.n_unknowns)
        return len(pivots)


def build_3d_system(max_degree: int = 4) -> CoefficientSystem:
    unknowns = (
        [("u", o) for o in FACE_OFFSETS]
        + [("v", o) for o in FACE_OFFSETS]
        + [("g", t) for t in TANGENT_OFFSETS]
        + [("f", (0, 0, 0))]
    )
    mons = monomials(3, max_degree)
    rows = []
    for e in mons:
        m = monomial(e)
        v = laplacian(m)
        f = laplacian(v)
        mx = diff(m, 0)
        row = []
        for part, o in unknowns:
            if part == "u":
                row.append(peval(m, o))
            elif part == "v":
                row.append(peval(v, o))
            elif part == "g":
                # residual term −γ·g with g = −u_x on x = x_lo
                row.append(peval(mx, (0, *o)))
            else:
                row.append(-peval(f, o))
        rows.append(row)
    return CoefficientSystem(unknowns, mons, rows)


def rref(rows, ncols: int):
    """Reduced row echelon form of an augmented rational matrix (last column = rhs)."""
    a = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(a)) if a[i][c] != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        p = a[r][c]
        a[r] = [x / p for x in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c] != 0:
                fac = a[i][c]
                a[i] = [x - fac * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == len(a):
            break
    return a, pivots


def _consistent(rows, ncols) -> bool:
    a, _ = rref(rows, ncols)
    return not any(all(x == 0 for x in row[:ncols]) and row[ncols] != 0 for row in a)


def _symmetry_images(o):
    if len(o) == 3:
        i, j, k = o
        return [(i, -j, k), (i, j, -k), (i, k, j)]
    j, k = o
    return [(-j, k), (j, -k), (k, j)]


def affine_solution(constraints, n: int):
    """Particular solution and null-space basis of ``A x = b`` (rows are [A | b])."""
    a, pivots = rref(constraints, n)
    if any(all(x == 0 for x in row[:n]) and row[n] != 0 for row in a):
        return None
    x0 = [Fraction(0)] * n
    for r, c in enumerate(pivots):
        x0[c] = a[r][n]
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * n
        vec[fc] = Fraction(1)
        for r, c in enumerate(pivots):
            vec[c] = -a[r][fc]
        basis.append(vec)
    return x0, basis


def min_norm(x0, basis):
    """Point of the affine set ``x0 + span(basis)`` with least Euclidean norm."""
    k = len(basis)
    if k == 0:
        return list(x0)
    gram = [[sum(p * q for p, q in zip(basis[i], basis[j])) for j in range(k)] for i in range(k)]
    rhs = [-sum(p * q for p, q in zip(basis[i], x0)) for i in range(k)]
    sol, piv = rref([gram[i] + [rhs[i]] for i in range(k)], k)
    t = [Fraction(0)] * k
    for r, c in enumerate(piv):
        t[c] = sol[r][k]
    return [x + sum(ti * b[i] for ti, b in zip(t, basis)) for i, x in enumerate(x0)]


@dataclass
class Derivation:
    stencil: Stencil
    system: CoefficientSystem
    constraints: list
    free_dimension: int
    solution: dict
    table: TruncationTable
    certified: bool
    options: dict = field(default_factory=dict)


def solve_3d_boundary(
    symmetry: bool = True,
    footprint: str = "reference",
    g_weight: Fraction = Fraction(-2),
    system: Optional[CoefficientSystem] = None,
) -> Derivation:
    """Solve the 3D face-closure system and certify the result.

    Constraints on top of the 35 Taylor equations:

    * normalisation: the g weights sum to ``g_weight`` (−2, as in the 2D closure);
    * ``symmetry``: invariance under t1 → −t1, t2 → −t2 and t1 ↔ t2;
    * ``footprint="reference"``: only offsets used by the typeset closure may be
      nonzero; ``"full"`` allows all 46 unknowns.

    Remaining freedom, if any, is fixed by the minimum-norm choice.
    """
    if Fraction(g_weight) == 0:
        raise DomainError("g_weight = 0 admits the trivial all-zero stencil")
    system = system or build_3d_system()
    unknowns = system.unknowns
    n = len(unknowns)
    pos = {u: i for i, u in enumerate(unknowns)}
    labelled = []
    for e, row in zip(system.monomials, system.rows):
        labelled.append((f"taylor {monomial_name(e)}", list(row) + [Fraction(0)]))
    norm = [Fraction(1) if part == "g" else Fraction(0) for part, _ in unknowns]
    labelled.append(("normalise sum(g) = %s" % g_weight, norm + [Fraction(g_weight)]))
    if symmetry:
        seen = set()
        for u in unknowns:
            part, o = u
            for img in _symmetry_images(o):
                key = frozenset([u, (part, img)])
                if (part, img) == u or key in seen:
                    continue
                seen.add(key)
                row = [Fraction(0)] * (n + 1)
                row[pos[u]] += 1
                row[pos[(part, img)]] -= 1
                labelled.append((f"symmetry {part}{o}={part}{img}", row))
    if footprint == "reference":
        allowed = {("u", o) for o in PRINTED_BOUNDARY_3D.u_part}
        allowed |= {("v", o) for o in PRINTED_BOUNDARY_3D.v_part}
        allowed |= {("g", t) for t in PRINTED_BOUNDARY_3D.g_part}
        allowed |= {("f", o) for o in PRINTED_BOUNDARY_3D.f_part}
        for u in unknowns:
            if u not in allowed:
                row = [Fraction(0)] * (n + 1)
                row[pos[u]] = Fraction(1)
                labelled.append((f"footprint {u[0]}{u[1]}=0", row))
    elif footprint != "full":
        raise DomainError(f"footprint must be 'reference' or 'full', got {footprint!r}")

    rows = [r for _, r in labelled]
    sol = affine_solution(rows, n)
    if sol is None:
        # first constraint whose addition breaks feasibility (prefix
        # feasibility is monotone, so bisect)
        lo, hi = 0, len(rows)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _consistent(rows[:mid], n):
                lo = mid
            else:
                hi = mid
        raise DerivationError(
            f"constraints infeasible at {labelled[hi - 1][0]}",
            violated_rows=[labelled[hi - 1][0]],
        )
    x0, basis = sol
    x = min_norm(x0, basis)
    parts = {"u": {}, "v": {}, "f": {}, "g": {}}
    for (part, o), val in zip(unknowns, x):
        parts[part][o] = val
    st = Stencil(
        "COUPLED_BOUNDARY_3D",
        3,
        u_part=parts["u"],
        v_part=parts["v"],
        f_part=parts["f"],
        g_part=parts["g"],
        anchor=CANONICAL_SIDE,
    )
    table = truncation_table(st, 5)
    certify_stencil(st, 4, table)
    return Derivation(
        stencil=st,
        system=system,
        constraints=[name for name, _ in labelled],
        free_dimension=len(basis),
        solution={f"{p}{o}": v for (p, o), v in zip(unknowns, x) if v != 0},
        table=table,
        certified=True,
        options={"symmetry": symmetry, "footprint": footprint, "g_weight": str(g_weight)},
    )


def certify_stencil(st: Stencil, degree: int, table: Optional[TruncationTable] = None) -> None:
    """Raise unless Σ u_part = 0 and every residual through ``degree`` vanishes."""
    if st.u_sum() != 0:
        raise CertificationError(f"{st.name}: u coefficients sum to {st.u_sum()}, not 0")
    table = table or truncation_table(st, degree)
    bad = {e: c for e, (c, _) in table.entries.items() if sum(e) <= degree and c != 0}
    if bad:
        raise CertificationError(f"{st.name}: nonzero residuals through degree {degree}: {bad}")


def collapse_axis(st: Stencil, axis: int) -> Stencil:
    """Sum a 3D stencil over one tangential axis: its action on fields independent of that axis."""
    if st.dim != 3 or (st.anchor is not None and st.anchor.axis == axis):
        raise DomainError("can only collapse a tangential axis of a 3D stencil")

    def fold(d, drop):
        out = {}
        for o, c in d.items():
            k = tuple(x for a, x in enumerate(o) if a != drop)
            out[k] = out.get(k, Fraction(0)) + c
        return out

    side = st.anchor or CANONICAL_SIDE
    tang = [a for a in range(3) if a != side.axis]
    from .grid import Side

    new_side = Side(side.axis if side.axis < axis else side.axis - 1, side.upper)
    return Stencil(
        st.name + f"/{AXIS_NAMES[axis]}",
        2,
        u_part=fold(st.u_part, axis),
        v_part=fold(st.v_part, axis),
        f_part=fold(st.f_part, axis),
        g_part=fold(st.g_part, tang.index(axis)),
        anchor=new_side if st.anchor else None,
    )


def derivation_report(d: Derivation) -> dict:
    sys_ = d.system
    eqs = []
    for e, row in zip(sys_.monomials, sys_.rows):
        terms = {f"{p}{o}": str(c) for (p, o), c in zip(sys_.unknowns, row) if c != 0}
        eqs.append({"monomial": monomial_name(e), "terms": terms})
    return {
        "equations": len(sys_.rows),
        "unknowns": len(sys_.unknowns),
        "rank": sys_.rank(),
        "options": d.options,
        "free_dimension_after_constraints": d.free_dimension,
        "system": eqs,
        "solution": {k: str(v) for k, v in d.solution.items()},
        "stencil": d.stencil.to_dict(),
        "u_sum": str(d.stencil.u_sum()),
        "residuals": [r for r in d.table.rows() if r["residual"] != "0"],
        "exact_through": d.table.exact_through(),
        "printed_u_sum": str(PRINTED_BOUNDARY_3D.u_sum()),
    }


def report_text(rep: dict) -> str:
    lines = [
        f"3D face closure: {rep['equations']} equations, {rep['unknowns']} unknowns, rank {rep['rank']}",
        f"options: {rep['options']}; free dimension after constraints: "
        f"{rep['free_dimension_after_constraints']}",
        "",
        "solution (nonzero weights; u scaled by 1/h^2, g by 1/h, f by h^2):",
    ]
    for k, v in rep["solution"].items():
        lines.append(f"  {k:>16} = {v}")
    lines.append(f"sum of u weights = {rep['u_sum']} (typeset closure: {rep['printed_u_sum']})")
    lines.append(f"exact through degree {rep['exact_through']}; degree-5 residuals (x h^3):")
    for r in rep["residuals"]:
        lines.append(f"  {r['monomial']:>12}: {r['residual']}")
    return "\n".join(lines) + "\n"
