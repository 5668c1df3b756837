"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference magnitudes live in ``REFERENCE`` so the comparisons are
visible in one place. Tolerances are the stated ones; nothing is relaxed.
"""

import time

import numpy as np
import pytest

from hocbiharm import derive
from hocbiharm.assembly import assemble_coupled, m_matrix_check
from hocbiharm.grid import UniformGrid
from hocbiharm.harness import cond_study, emit_report, refine_study, solve_problem, stokes_study
from hocbiharm.problems import (
    PROBLEMS,
    check_load,
    example_osc_2d,
    example_smooth_2d,
    example_smooth_3d,
    get_problem,
    polynomial,
)
from hocbiharm.stencils import HOC9_2D, HOC19_3D, PRINTED_BOUNDARY_3D

REFERENCE = {
    "ex1_N64": 8.53e-05,
    "ex2_first_N128": 3.23e-05,
    "ex2_mixed_N128": 4.53e-05,
    "ex4_N16": 7.36e-08,
    "stokes": {16: 3.88e-07, 32: 3.81e-08, 64: 2.27e-09},
}


@pytest.fixture
def verdict(capsys):
    def report(k: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail

    return report


def _in(values, lo, hi):
    return all(lo <= v <= hi for v in values)


def _within(value, target, factor=3.0):
    return target / factor <= value <= target * factor


def _orders(values):
    return "[" + ", ".join(f"{v:.2f}" for v in values) + "]"


def test_criterion_1_stencil_certification(verdict):
    t0 = time.perf_counter()
    e9 = derive.truncation_table(HOC9_2D, 5)
    e19 = derive.truncation_table(HOC19_3D, 5)
    b = derive.verify_2d_boundary()
    dt = time.perf_counter() - t0
    ok = (
        e9.nonzero() == {}
        and e19.nonzero() == {}
        and b["exact_through"] == 4
        and b["matches_leading_term"]
        and dt < 10
    )
    verdict(
        1, ok,
        f"HOC9/HOC19 zero residual through degree 5, 2D closure exact through "
        f"{b['exact_through']} with degree-5 residuals matching={b['matches_leading_term']} ({dt:.1f}s)",
    )


def test_criterion_2_3d_derivation(verdict):
    t0 = time.perf_counter()
    sysm = derive.build_3d_system()
    d = derive.solve_3d_boundary()
    dt = time.perf_counter() - t0
    printed_sum = PRINTED_BOUNDARY_3D.u_sum()
    ok = (
        sysm.n_equations == 35
        and sysm.n_unknowns == 46
        and d.certified
        and d.stencil.u_sum() == 0
        and d.table.exact_through() >= 4
        and printed_sum != 0
        and dt < 30
    )
    verdict(
        2, ok,
        f"{sysm.n_equations} equations in {sysm.n_unknowns} unknowns, derived stencil certified with "
        f"sum(alpha)={d.stencil.u_sum()}, typeset stencil sum(alpha)={printed_sum} ({dt:.1f}s)",
    )


POLYS_2D = {
    "x^4": {(4, 0): 1},
    "x^3 y": {(3, 1): 1},
    "x^2 y^2": {(2, 2): 1},
    "x^2": {(2, 0): 1},
    "xy": {(1, 1): 1},
    "quadratic": {(2, 0): 3, (1, 1): -2, (0, 2): 1, (1, 0): 1, (0, 0): 2},
}
LAYOUTS = ["first", "second", "mixed", {"ylo": "second", "yhi": "second"}, {"xhi": "second"}]


def test_criterion_3_polynomial_exactness(verdict):
    worst = 0.0
    for coeffs in POLYS_2D.values():
        mp = polynomial(coeffs)
        for layout in LAYOUTS:
            for cv in ("exact", "numeric"):
                for N in (8, 16, 32):
                    sol = solve_problem(mp.to_problem(layout, corner_v=cv), N)
                    u = mp.u(*sol.grid.mesh())
                    worst = max(worst, np.abs(sol.U - u).max() / np.abs(u).max())
    ok = worst <= 1e-9
    verdict(3, ok, f"worst relative inf-error {worst:.2e} over {len(POLYS_2D)} polynomials, "
                   f"{len(LAYOUTS)} layouts, both corner modes, N in (8, 16, 32) (<= 1e-9)")


def test_criterion_4_smooth2d(verdict):
    t0 = time.perf_counter()
    rep = refine_study(example_smooth_2d(), "first", [32, 64, 128, 256])
    dt = time.perf_counter() - t0
    orders = rep.orders_u()
    e64 = rep.row(64).err_u
    ok_order = not rep.partial and _in(orders, 3.7, 4.3)
    ok_mag = _within(e64, REFERENCE["ex1_N64"])
    verdict(
        4, ok_order and ok_mag and dt < 120,
        f"orders {_orders(orders)} in [3.7, 4.3]: {ok_order}; |E_U| at N=64 = {e64:.3e} "
        f"vs reference {REFERENCE['ex1_N64']:.2e} within x3: {ok_mag} ({dt:.1f}s)",
    )


@pytest.mark.parametrize("layout,key", [("first", "ex2_first_N128"), ("mixed", "ex2_mixed_N128")])
def test_criterion_5_osc2d(verdict, layout, key):
    t0 = time.perf_counter()
    rep = refine_study(example_osc_2d(25, 5), layout, [128, 256, 512])
    dt = time.perf_counter() - t0
    orders = rep.orders_u()
    e = rep.row(128).err_u
    ok = not rep.partial and _in(orders, 3.7, 4.3) and _within(e, REFERENCE[key]) and dt < 600
    verdict(
        5, ok,
        f"{layout}: orders {_orders(orders)} in [3.7, 4.3]; |E_U| at N=128 = {e:.3e} "
        f"vs reference {REFERENCE[key]:.2e} within x3 ({dt:.1f}s)",
    )


def test_criterion_6_v_accuracy(verdict):
    rep = refine_study(example_smooth_2d(), "first", [32, 64, 128])
    orders = rep.orders_v()
    verdict(6, not rep.partial and _in(orders, 3.5, 4.5),
            f"|E_V|_L2 orders {_orders(orders)} in [3.5, 4.5]")


def test_criterion_7_conditioning_2d(verdict):
    t0 = time.perf_counter()
    coupled = cond_study("coupled", 2, [32, 64, 128])
    base = cond_study("13-point", 2, [32, 64, 128])
    dt = time.perf_counter() - t0
    rc, rb = coupled.rates(), base.rates()
    ok = len(rc) == 2 and len(rb) == 2 and _in(rc, 3.4, 4.6) and _in(rb, 13, 19) and dt < 600
    verdict(7, ok, f"coupled rates {_orders(rc)} in [3.4, 4.6]; 13-point rates {_orders(rb)} in [13, 19] ({dt:.1f}s)")


@pytest.mark.parametrize("layout", ["first", "mixed"])
def test_criterion_8_smooth3d(verdict, layout):
    t0 = time.perf_counter()
    rep = refine_study(example_smooth_3d(), layout, [16, 32, 64])
    dt = time.perf_counter() - t0
    orders = rep.orders_u()
    e = rep.row(16).err_u
    ok = not rep.partial and _in(orders, 3.6, 4.3) and _within(e, REFERENCE["ex4_N16"]) and dt < 900
    verdict(
        8, ok,
        f"{layout}: orders {_orders(orders)} in [3.6, 4.3]; |E_U| at N=16 = {e:.3e} "
        f"vs reference {REFERENCE['ex4_N16']:.2e} within x3 ({dt:.1f}s)",
    )


def test_criterion_9_conditioning_3d(verdict):
    # same band as the 2D rate check
    t0 = time.perf_counter()
    rep = cond_study("coupled", 3, [8, 16, 32])
    dt = time.perf_counter() - t0
    rates = rep.rates()
    ok = len(rates) == 2 and _in(rates, 3.4, 4.6)
    verdict(9, ok, f"3D coupled rates {_orders(rates)} over N=8->16->32 in [3.4, 4.6] ({dt:.1f}s)")


def test_criterion_10_stokes(verdict):
    rep, ref = stokes_study([16, 32, 64], 256)
    order = rep.row(64).order_u
    ratios = {N: rep.row(N).err_u / REFERENCE["stokes"][N] for N in (16, 32, 64)}
    ok_order = order is not None and order >= 3.3
    ok_mag = all(0.1 <= r <= 10 for r in ratios.values())
    detail = ", ".join(f"N={N}: {rep.row(N).err_u:.2e} (x{r:.2f})" for N, r in ratios.items())
    verdict(10, ok_order and ok_mag,
            f"order 32->64 = {order:.2f} (>= 3.3): {ok_order}; errors vs reference within "
            f"one order of magnitude: {ok_mag} [{detail}]")


def test_criterion_11_properties(verdict, tmp_path):
    mm = []
    for dim, N in ((2, 4), (2, 8), (2, 16), (3, 4), (3, 8), (3, 16)):
        mp = example_smooth_2d() if dim == 2 else example_smooth_3d()
        mm.append(m_matrix_check(assemble_coupled(UniformGrid.unit(dim, N), mp.to_problem("first")))["passed"])
    loads = {name: check_load(get_problem(name))["passed"] for name in sorted(PROBLEMS)}
    written = []
    for k in range(2):
        rep = refine_study(example_smooth_2d(), "mixed", [16, 32])
        sol = solve_problem(example_smooth_2d().to_problem("mixed"), 16)
        written.append(emit_report(rep, tmp_path / f"run{k}", "refine", ("csv", "json", "txt"), sol))
        cond = cond_study("coupled", 2, [8, 16])
        written[-1] += emit_report(cond, tmp_path / f"run{k}", "cond", ("csv", "json"))
    identical = all(a.read_bytes() == b.read_bytes() for a, b in zip(*written))
    ok = all(mm) and all(loads.values()) and identical
    verdict(11, ok, f"M-matrix N<=16 in 2D/3D: {all(mm)}; load oracles {loads}; "
                    f"byte-identical reruns over {len(written[0])} files: {identical}")
