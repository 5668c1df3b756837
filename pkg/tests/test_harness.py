import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hocbiharm.errors import ConfigurationError
from hocbiharm.harness import (
    CondReport,
    CSV_COLUMNS,
    RefinementReport,
    cond_study,
    emit_report,
    error_norms,
    fmt,
    mirror_defect,
    observed_order,
    refine_study,
    restrict,
    solve_problem,
    velocity,
)
from hocbiharm.problems import example_smooth_2d, polynomial, stokes_cavity


def test_error_norms_examples():
    assert error_norms(np.array([3.0, 4.0]), np.zeros(2), h=1.0, dim=1) == (4.0, 5.0)
    assert error_norms(np.zeros((3, 3)), np.zeros((3, 3)), h=0.5, dim=2) == (0.0, 0.0)
    inf, l2 = error_norms(np.full((5, 5), 2.0), np.ones((5, 5)), h=0.25, dim=2)
    assert inf == 1.0 and l2 == pytest.approx(np.sqrt(25 * 0.0625))


def test_error_norms_skip_undefined():
    num = np.array([1.0, np.nan, 3.0])
    assert error_norms(num, np.zeros(3), h=1.0, dim=1) == (3.0, pytest.approx(np.sqrt(10)))
    with pytest.raises(ValueError):
        error_norms(num, num)


@given(st.floats(1e-12, 1.0), st.integers(0, 8))
def test_observed_order_recovers_power(e, p):
    assert observed_order(e, e / 2**p) == pytest.approx(p)


def test_observed_order_degenerate():
    assert observed_order(0.0, 1.0) is None and observed_order(1.0, None) is None


def test_fmt_six_significant_digits():
    assert fmt(1.0 / 3.0) == "3.33333e-01"
    assert fmt(None) == ""


@pytest.fixture(scope="module")
def report():
    return refine_study(example_smooth_2d(), "first", [8, 16, 32])


def test_refine_report(report):
    assert [r.N for r in report.rows] == [8, 16, 32]
    assert report.rows[0].order_u is None
    assert all(3.5 < o < 4.5 for o in report.orders_u())
    assert report.row(16).N == 16
    with pytest.raises(KeyError):
        report.row(64)


def test_csv_rows(report):
    lines = report.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 4


def test_json_round_trip(report):
    back = RefinementReport.from_json(report.to_json())
    assert back == report
    assert back.to_json() == report.to_json()
    assert "wall_time" not in json.loads(report.to_json())["rows"][0]


def test_rerun_byte_identical(tmp_path):
    paths = []
    for k in range(2):
        rep = refine_study(example_smooth_2d(), "mixed", [8, 16])
        paths.append(emit_report(rep, tmp_path / str(k), "r", ("csv", "json", "txt")))
    for a, b in zip(*paths):
        assert a.read_bytes() == b.read_bytes()


def test_grid_dump_lines(tmp_path):
    sol = solve_problem(example_smooth_2d().to_problem("first"), 8)
    rep = refine_study(example_smooth_2d(), "first", [8])
    paths = emit_report(rep, tmp_path, "s", ("json",), solution=sol)
    dump = paths[-1].read_text().splitlines()
    assert len(dump) == 81
    x, y, u, v = map(float, dump[1].split())
    assert (x, y) == (0.125, 0.0)


def test_unknown_format(tmp_path, report):
    with pytest.raises(ConfigurationError):
        emit_report(report, tmp_path, "r", ("xml",))


def test_unwritable_output(tmp_path, report):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write"):
        emit_report(report, blocker / "sub", "r")


@pytest.mark.parametrize("Ns", [[16, 32, 48], [32, 16], []])
def test_doubling_validation(Ns):
    with pytest.raises(ConfigurationError):
        refine_study(example_smooth_2d(), "first", Ns)


def test_partial_report(monkeypatch):
    import hocbiharm.harness as h
    from hocbiharm.errors import NonConvergenceError

    real = h.solve_problem

    def flaky(spec, N, *a, **k):
        if N > 8:
            raise NonConvergenceError("forced")
        return real(spec, N, *a, **k)

    monkeypatch.setattr(h, "solve_problem", flaky)
    rep = refine_study(example_smooth_2d(), "first", [8, 16])
    assert rep.partial and len(rep.rows) == 1 and "N=16" in rep.error
    assert "aborted" in rep.to_text()


def test_polynomial_exact_all_layouts():
    mp = polynomial({(4, 0): 1, (2, 2): -1, (1, 3): 2})
    for layout in ("first", "second", "mixed"):
        for cv in ("exact", "numeric"):
            sol = solve_problem(mp.to_problem(layout, corner_v=cv), 8)
            err = np.abs(sol.U - mp.u(*sol.grid.mesh())).max()
            assert err <= 1e-10 * np.abs(sol.U).max(), (layout, cv, err)


def test_cond_report_small():
    rep = cond_study("coupled", 2, [8, 16])
    assert len(rep.rows) == 2 and len(rep.rates()) == 1
    assert CondReport.from_dict(json.loads(rep.to_json())).to_json() == rep.to_json()
    assert len(rep.to_csv().splitlines()) == 3


def test_restrict_and_mirror():
    a = np.arange(25.0).reshape(5, 5)
    assert np.array_equal(restrict(a, 2), a[::2, ::2])
    sym = np.add.outer(np.array([1.0, 2.0, 1.0]), np.zeros(3))
    assert mirror_defect(sym) == 0.0


def test_cavity_velocity_matches_lid():
    sol = solve_problem(stokes_cavity(), 32)
    vx, vy = velocity(sol)
    x = sol.grid.mesh()[0][:, -1]
    assert np.allclose(vx[:, -1], x**6 * (x - 1) ** 6, atol=1e-5)
    assert np.abs(vy[:, -1]).max() < 1e-5
    assert mirror_defect(sol.U) < 1e-12
