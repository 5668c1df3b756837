import json
from fractions import Fraction

import numpy as np
import pytest

from hocbiharm.errors import DomainError
from hocbiharm.grid import Side, UniformGrid
from hocbiharm.stencils import (
    COUPLED_BOUNDARY_2D,
    HOC9_2D,
    HOC19_3D,
    NEUMANN_HOC_2D,
    PRINTED_BOUNDARY_3D,
    Stencil,
    apply,
    catalog,
    coupled_boundary_3d,
    rotate_to_side,
)


def test_catalog_coefficients():
    assert HOC9_2D.u_part[(0, 0)] == Fraction(-20, 6)
    assert HOC9_2D.u_part[(1, 1)] == Fraction(1, 6)
    assert HOC9_2D.u_part[(0, 1)] == Fraction(4, 6)
    assert HOC19_3D.u_part[(0, 0, 0)] == -4
    assert HOC19_3D.u_part[(1, 0, 0)] == Fraction(1, 3)
    assert HOC19_3D.u_part[(1, 1, 0)] == Fraction(1, 6)
    assert len(HOC19_3D.u_part) == 19
    assert COUPLED_BOUNDARY_2D.v_part[(0, 0)] == Fraction(-4, 12)
    assert COUPLED_BOUNDARY_2D.v_part[(1, 0)] == Fraction(-4, 12)
    assert COUPLED_BOUNDARY_2D.f_part == {(0, 0): Fraction(-1, 12)}


@pytest.mark.parametrize("name", sorted(catalog()))
def test_catalog_invariants(name):
    st = catalog()[name]
    assert st.u_sum() == 0
    assert st.is_compact()


def test_printed_3d_fails_consistency():
    assert PRINTED_BOUNDARY_3D.u_sum() == Fraction(-1, 2)


def test_rotation_right_side():
    r = rotate_to_side(COUPLED_BOUNDARY_2D, "right")
    assert r.anchor == Side(0, True)
    assert r.u_part[(-1, 0)] == COUPLED_BOUNDARY_2D.u_part[(1, 0)]
    assert r.v_part[(-1, 0)] == COUPLED_BOUNDARY_2D.v_part[(1, 0)]
    assert r.v_part[(0, 1)] == COUPLED_BOUNDARY_2D.v_part[(0, 1)]
    assert sorted(r.u_part.values()) == sorted(COUPLED_BOUNDARY_2D.u_part.values())


def test_rotation_top_and_involution():
    top = rotate_to_side(COUPLED_BOUNDARY_2D, "top")
    assert top.u_part[(0, -1)] == COUPLED_BOUNDARY_2D.u_part[(1, 0)]
    for p in ("u", "v", "f"):
        assert sorted(top.part(p).values()) == sorted(COUPLED_BOUNDARY_2D.part(p).values())
    back = rotate_to_side(rotate_to_side(COUPLED_BOUNDARY_2D, "right"), "left")
    assert back == COUPLED_BOUNDARY_2D


def test_rotation_interior_refused():
    with pytest.raises(DomainError):
        rotate_to_side(HOC9_2D, "left")


def test_rotation_3d_preserves_invariants():
    st = coupled_boundary_3d()
    for side in ("xhi", "ylo", "yhi", "zlo", "zhi"):
        r = rotate_to_side(st, side)
        assert r.u_sum() == 0 and r.is_compact()


def _fields(grid, u, v, f=None):
    m = grid.mesh()
    return u(*m), v(*m) * np.ones(grid.shape), (f(*m) * np.ones(grid.shape) if f else np.zeros(grid.shape))


@pytest.mark.parametrize("h_n", [4, 7, 16])
def test_apply_hoc9_quadratic(h_n):
    g = UniformGrid.unit(2, h_n)
    U, V, _ = _fields(g, lambda x, y: x**2 + y**2, lambda x, y: 4.0 + 0 * x)
    assert abs(apply(HOC9_2D, g, (2, 2), U, V)) < 1e-13 * h_n**2


def test_apply_hoc9_quartic():
    g = UniformGrid.unit(2, 10)
    U, V, _ = _fields(g, lambda x, y: x**4, lambda x, y: 12 * x**2)
    assert abs(apply(HOC9_2D, g, (4, 5), U, V)) < 1e-12


def test_apply_boundary_closure():
    g = UniformGrid.unit(2, 8)
    U, V, F = _fields(g, lambda x, y: x**2 + y**2, lambda x, y: 4.0 + 0 * x)
    G = np.full(g.shape, np.nan)
    G[0, :] = -2 * 0.0  # g_N = -u_x at x = 0
    r = apply(COUPLED_BOUNDARY_2D, g, (0, 3), U, V, F, G)
    assert abs(r) < 1e-12


def test_apply_errors():
    g = UniformGrid.unit(2, 4)
    U = np.zeros(g.shape)
    with pytest.raises(DomainError):
        apply(HOC9_2D, g, (0, 2), U, U)
    with pytest.raises(DomainError):
        apply(HOC9_2D, g, (2, 2), U)
    V = np.full(g.shape, np.nan)
    with pytest.raises(DomainError):
        apply(HOC9_2D, g, (2, 2), U, V)


def test_json_roundtrip():
    for st in catalog().values():
        back = Stencil.from_dict(json.loads(st.to_json()))
        assert back == st
    d = COUPLED_BOUNDARY_2D.to_dict()
    assert d["h_powers"] == {"u": -2, "v": 0, "f": 2, "g": -1}


def test_neumann_stencil_ghost_entry():
    # its source weights reach the ghost column (-1, 0)
    assert NEUMANN_HOC_2D.v_part[(-1, 0)] == Fraction(1, 12)
    assert NEUMANN_HOC_2D.u_sum() == 0
