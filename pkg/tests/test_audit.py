import math

import numpy as np
import pytest

from ipgkit.audit import (
    StationarityReport,
    audit_AP,
    audit_P_relaxed,
    audit_SP,
    block_average_lower_bound,
    small_coordinate_certificate,
)
from ipgkit.instance import InstanceParams, build_instance


@pytest.fixture(scope="module")
def problem():
    return build_instance(InstanceParams(2, 1, 5, 0.1))


def test_certified_uses_absolute_floor():
    assert StationarityReport("SP", {"a": 5e-13}, 0.0).certified
    assert not StationarityReport("SP", {"a": 2e-12}, 0.0).certified
    with pytest.raises(ValueError):
        StationarityReport("XX", {}, 0.1)


def test_origin_is_not_stationary(problem):
    x = np.zeros(problem.dim_x)
    rep = audit_AP(problem, x, 0.1)
    assert rep.residuals["consensus_feas"] == 0.0
    # every block average coordinate is below the threshold at the origin
    cert = small_coordinate_certificate(problem, x)
    assert cert["violating_j"] == 1 and cert["bound"] > 0.1
    assert rep.residuals["projected_grad"] >= block_average_lower_bound(problem, x) * (1 - 1e-12)


def test_projected_gradient_closed_form(problem):
    # compare with an explicit projection onto the null space of H
    rng = np.random.default_rng(0)
    x = rng.normal(size=problem.dim_x) / problem.params.arg_scale
    H = problem.H.todense()
    P = np.eye(H.shape[1]) - np.linalg.pinv(H) @ H
    g = problem.grad_f0(x)
    assert math.isclose(audit_AP(problem, x, 0.1).residuals["projected_grad"],
                        float(np.linalg.norm(P @ g)), rel_tol=1e-9)


def test_sp_residuals_at_start(problem):
    x, y = problem.feasible_start()
    z1, z2 = np.zeros(problem.dim_y), np.zeros(problem.dim_z2)
    rep = audit_SP(problem, x, y, z1, z2, 0.1)
    assert rep.residuals["split_feas"] == 0.0 and rep.residuals["affine_feas"] == 0.0
    assert math.isclose(rep.residuals["grad_residual"], float(np.linalg.norm(problem.grad_f0(x))))


def test_relaxed_audit_is_an_upper_bound(problem):
    rng = np.random.default_rng(1)
    x = rng.normal(size=problem.dim_x) / problem.params.arg_scale
    rep = audit_P_relaxed(problem, x, 0.1)
    g = problem.grad_f0(x)
    u, gamma = rep.multipliers["u"], rep.multipliers["gamma"]
    direct = np.linalg.norm(g + problem.A.rmatvec(gamma) + problem.Abar.rmatvec(u))
    assert rep.upper_bound
    assert math.isclose(rep.residuals["stationarity"], float(direct), rel_tol=1e-8, abs_tol=1e-12)
    assert np.all(np.abs(u) <= problem.gbar.weight * (1 + 1e-12))
