import numpy as np
import pytest
import scipy.sparse as sp

from hocbiharm.assembly import assemble_coupled
from hocbiharm.errors import EstimationError, NonConvergenceError
from hocbiharm.grid import UniformGrid
from hocbiharm.linsolve import SchurSolver, estimate_cond2, relative_residual, sine_symbol, solve
from hocbiharm.problems import example_smooth_2d, example_smooth_3d


def test_identity():
    b = np.arange(1.0, 8.0)
    x, st = solve(sp.identity(7, format="csr"), b)
    assert np.allclose(x, b) and st.iterations <= 1


def _poisson1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


@pytest.mark.parametrize("method", ["dense", "gmres-ilu"])
def test_poisson_1d(method):
    A = _poisson1d(200)
    b = A @ np.ones(200)
    x, st = solve(A, b, tol=1e-12, method=method)
    assert relative_residual(A, x, b) <= 1e-12
    assert np.allclose(x, 1.0, atol=1e-8)


def test_gmres_ilu_large_auto():
    A = _poisson1d(6000)
    b = A @ np.linspace(0, 1, 6000)
    x, st = solve(A, b)
    assert st.method == "gmres-ilu" and st.residual <= 1e-12


def test_coupled_2d_n32_residual():
    s = assemble_coupled(UniformGrid.unit(2, 32), example_smooth_2d().to_problem("first"))
    x, st = solve(s.matrix, s.rhs, tol=1e-12, method="gmres-ilu")
    assert np.linalg.norm(s.rhs - s.matrix @ x) / np.linalg.norm(s.rhs) <= 1e-12


def test_deterministic():
    s = assemble_coupled(UniformGrid.unit(2, 40), example_smooth_2d().to_problem("first"))
    a, _ = solve(s.matrix, s.rhs, method="gmres-ilu")
    b, _ = solve(s.matrix, s.rhs, method="gmres-ilu")
    assert np.array_equal(a, b)


@pytest.mark.filterwarnings("ignore")
def test_nonconvergence_carries_iterate():
    # inconsistent singular system: no iterate reaches the target
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NonConvergenceError) as exc:
        solve(A, np.array([1.0, -1.0]), method="dense")
    assert exc.value.x is not None and exc.value.stats is not None


def test_shape_checks():
    with pytest.raises(ValueError):
        solve(sp.identity(3), np.ones(4))


@pytest.mark.parametrize("dim,N", [(2, 16), (2, 24), (3, 8)])
def test_schur_matches_direct(dim, N):
    mp = example_smooth_2d() if dim == 2 else example_smooth_3d()
    s = assemble_coupled(UniformGrid.unit(dim, N), mp.to_problem("mixed"))
    S = SchurSolver(s)
    x, st = S.solve(s.rhs)
    ref, _ = solve(s.matrix, s.rhs, method="dense")
    assert np.allclose(x, ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())
    xt, _ = S.solve(s.rhs, transpose=True)
    assert relative_residual(s.matrix.T, xt, s.rhs) <= 1e-12


def test_sine_symbol_is_eigenvalue():
    from hocbiharm.stencils import HOC9_2D

    n = 6
    lam = sine_symbol(HOC9_2D.u_part, n, 2)
    i = np.arange(1, n)
    k = (2, 3)
    vec = np.outer(np.sin(np.pi * k[0] * i / n), np.sin(np.pi * k[1] * i / n))
    pad = np.zeros((n + 1, n + 1))
    pad[1:-1, 1:-1] = vec
    out = np.zeros_like(vec)
    for (a, b), c in HOC9_2D.u_part.items():
        out += float(c) * pad[1 + a : n + a, 1 + b : n + b]
    assert np.allclose(out, lam[k[0] - 1, k[1] - 1] * vec)


def test_cond_identity_and_diag():
    assert estimate_cond2(sp.identity(10, format="csr")) == pytest.approx(1.0, rel=1e-3)
    assert estimate_cond2(sp.diags([1.0, 10.0])) == pytest.approx(10.0, rel=1e-3)


def test_cond_matches_svd():
    s = assemble_coupled(UniformGrid.unit(2, 12), example_smooth_2d().to_problem("first"))
    sv = np.linalg.svd(s.matrix.toarray(), compute_uv=False)
    assert estimate_cond2(s.matrix) == pytest.approx(sv[0] / sv[-1], rel=1e-3)


def test_cond_scale_invariant():
    s = assemble_coupled(UniformGrid.unit(2, 10), example_smooth_2d().to_problem("first"))
    a = estimate_cond2(s.matrix)
    b = estimate_cond2(-3.5 * s.matrix)
    assert b == pytest.approx(a, rel=2e-3)


def test_cond_singular():
    A = sp.csr_matrix(np.array([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 1.0]]))
    with pytest.raises(EstimationError):
        estimate_cond2(A)
