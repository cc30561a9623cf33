"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

The lines are repeated in the "acceptance" section of the pytest summary.
"""

import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ipgkit.audit import audit_AP, audit_P_relaxed, audit_SP
from ipgkit.bench import halving_ratios, run_sweep
from ipgkit.dual import DualProblem, reference_solve, restarted_apg
from ipgkit.instance import InstanceParams, build_instance, f0_grad
from ipgkit.ipg import IpgConfig, near_stationary_recovery, solve
from ipgkit.properties import (
    check_function_bounds,
    check_gradients,
    check_prox,
    check_span_bounds,
    check_spectral,
    check_support_lemmas,
)

SMALL = InstanceParams(2, 1, 5, 0.1)
DESK = InstanceParams(2, 2, 5, 0.1, L_f=1.0)
SPAN = InstanceParams(2, 2, 7, 0.1)


def report(n: int, title: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {n:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert passed, detail


def test_c01_gradient_consistency():
    start = time.perf_counter()
    ok, detail = check_gradients(SMALL, points=100, rtol=1e-6)
    elapsed = time.perf_counter() - start
    report(1, "gradient consistency", ok and elapsed < 5.0, f"{detail}, {elapsed:.2f} s (limit 5 s)")


def test_c02_bound_suite():
    ok, detail = check_function_bounds(SMALL, samples=10_000)
    report(2, "bound suite", ok, detail)


def test_c03_spectral_closed_forms():
    ok, detail = check_spectral((6, 12, 24), rtol=1e-9)
    report(3, "spectral closed forms", ok, detail)


def test_c04_prox_oracles():
    ok, detail = check_prox(samples=200, m=6, bd=5)
    report(4, "prox oracles", ok, detail)


def test_c05_support_combinatorics():
    ok, detail = check_support_lemmas(SMALL, samples=100)
    report(5, "support combinatorics", ok, detail)


def test_c06_span_bounds():
    ok, detail = check_span_bounds(SPAN)
    report(6, "span bounds", ok, detail)


def test_c07_inner_certificate():
    params = SMALL.resolved()
    problem = build_instance(params)
    rng = np.random.default_rng(0)
    x = rng.normal(0, 3, params.d) / params.arg_scale
    dp = DualProblem.from_problem(problem, x, f0_grad(x, params), 2 * params.L_f)
    z0 = np.zeros(problem.dim_y + problem.dim_z2)
    z_ref = reference_solve(dp, z0, max_steps=100_000)
    d_star = dp.value(z_ref)
    gap = dp.value(z0) - d_star
    # below this floor the gap is rounding noise and cannot halve
    floor = 1e-12 * max(1.0, abs(d_star))
    lines, ok = [], True
    halved = total = 0
    for delta in (1e-3, 1e-5):
        z, cert = restarted_apg(dp, z0, delta, mode="strongly_convex",
                                gap_estimate=gap, record_values=True)
        dist = float(np.linalg.norm(z - z_ref))
        gaps = np.asarray(cert.cycle_values) - d_star
        for a, b in zip(gaps, gaps[1:]):
            if a > floor:
                total += 1
                halved += b <= a / 2
        ok &= dist <= delta and cert.dist_bound <= delta
        lines.append(f"delta={delta:g}: dist={dist:.2e}, schedule bound={cert.dist_bound:.2e}")
    frac = halved / total if total else 0.0
    ok &= frac >= 0.95
    report(7, "inner-solver certificate", ok,
           "; ".join(lines) + f"; gap halved in {halved}/{total} cycles ({frac:.0%})")


@pytest.fixture(scope="module")
def desk_solve():
    problem = build_instance(DESK)
    config = IpgConfig(eps=0.1, tau=2.0, sigma=1.0)
    start = time.perf_counter()
    result = solve(problem, config)
    return problem, config, result, time.perf_counter() - start


def test_c08_end_to_end_solve(desk_solve):
    problem, config, result, elapsed = desk_solve
    consts = result.constants
    rep = audit_SP(problem, result.x, result.y, result.z1, result.z2, 0.1)
    ok = rep.certified and result.outer_iters <= consts.K_eps and elapsed < 60.0
    # feasibility after each step is within B1 delta; the inner bound gives the step bound
    drift = max(r["split_feas"] + r["affine_feas"] for r in result.trace) / (consts.B1 * result.delta)
    inner = max(r["inner_bound"] for r in result.trace) / result.delta
    z1_excess = max(r["z1_norm"] for r in result.trace) - (consts.l_g + result.delta)
    ok &= drift <= 1.0 and inner <= 1.0 and z1_excess <= 0.0
    report(8, "end-to-end solve", ok,
           f"certified={rep.certified} at k={result.outer_iters} <= K={consts.K_eps}, "
           f"max residual {rep.max_residual:.4f}, drift/(B1 delta)={drift:.3f}, "
           f"inner/delta={inner:.3f}, max ||z1|| - l_g={z1_excess:.3e}, {elapsed:.1f} s (limit 60 s)")


def test_c09_near_stationarity_chain(desk_solve):
    problem, _, _, _ = desk_solve
    config = IpgConfig(eps=0.1, tau=2.0, sigma=1.0, delta_mode="theory_near_eps")
    result = solve(problem, config)
    delta_bar = result.constants.delta_bar_eps
    x_bar, _, cert = near_stationary_recovery(problem, result, delta_bar, config)
    omega = float(np.linalg.norm(result.x - x_bar))
    p_rep = audit_P_relaxed(problem, x_bar, 0.1)
    ap_bar = audit_AP(problem, x_bar, 0.1)
    ap_x = audit_AP(problem, result.x, 0.2)
    ok = (result.certified and omega <= 0.1 / 12 and p_rep.certified
          and ap_bar.certified and ap_x.certified)
    report(9, "near-stationarity chain", ok,
           f"||x - xbar||={omega:.2e} (limit {0.1 / 12:.2e}), P residual {p_rep.max_residual:.2e}, "
           f"AP at xbar {ap_bar.max_residual:.2e}, AP at x {ap_x.max_residual:.2e} (limit 0.2)")


def test_c10_scaling():
    workers = int(os.environ.get("IPGKIT_WORKERS", "3"))
    rows = run_sweep(InstanceParams(2, 2, 5, 0.1), [0.2, 0.1, 0.05],
                     IpgConfig(eps=0.1, tau=2.0, sigma=1.0), workers=workers)
    ratios = halving_ratios(rows)
    ok = len(ratios) == 2 and all(2 <= r <= 16 for r in ratios)
    steps = ", ".join(f"eps={r['eps']:g}: {r.get('apg_steps')}" for r in rows)
    report(10, "scaling", ok, f"{steps}; ratios {[round(r, 3) for r in ratios]} (interval [2, 16])")
