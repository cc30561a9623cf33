import numpy as np
import pytest

from ipgkit.instance import InstanceParams, build_instance
from ipgkit.ipg import IpgConfig, compute_constants, initial_state, ipg_step, solve
from ipgkit.instance import default_gap_bounds


@pytest.fixture(scope="module")
def problem():
    return build_instance(InstanceParams(2, 1, 5, 0.1))


def test_config_validation():
    with pytest.raises(ValueError):
        IpgConfig(eps=0.0)
    with pytest.raises(ValueError):
        IpgConfig(eps=0.1, delta_mode="explicit")
    with pytest.raises(ValueError, match="tau"):
        IpgConfig(eps=0.1, tau=0.5).resolved(1.0)


def test_zero_budget_reports_start(problem):
    result = solve(problem, IpgConfig(eps=0.1, max_outer=0))
    assert result.trace == [] and result.k_best == -1
    assert np.array_equal(result.x, np.zeros(problem.dim_x))
    assert result.report.residuals["split_feas"] == 0.0


def test_step_identity(problem):
    # grad f0(x_k) + H^T z + tau (x_{k+1} - x_k) = 0 by construction
    cfg = IpgConfig(eps=0.1, delta_mode="explicit", delta=1e-6)
    rng = np.random.default_rng(0)
    x0 = rng.normal(0, 1, problem.dim_x) / problem.params.arg_scale
    state = initial_state(problem)
    state.x[:] = x0
    state.grad = problem.grad_f0(x0)
    nxt = ipg_step(problem, cfg, state, 1e-6)
    # the multiplier is ordered (z1, z2) against [Abar; A]
    stacked = problem.Abar.rmatvec(nxt.z1) + problem.A.rmatvec(nxt.z2)
    res = state.grad + stacked + 2.0 * (nxt.x - state.x)
    assert np.linalg.norm(res) <= 1e-10 * max(1.0, np.linalg.norm(state.grad))


def test_reference_oracle_feasibility(problem):
    cfg = IpgConfig(eps=0.1, delta_mode="explicit", delta=1e-9, inner_mode="reference_oracle",
                    max_outer=3, early_exit=False)
    result = solve(problem, cfg)
    consts = compute_constants(problem, cfg, *default_gap_bounds(problem))
    for row in result.trace:
        assert row["split_feas"] + row["affine_feas"] <= consts.B1 * 1e-9


def test_counters_and_determinism(problem):
    cfg = IpgConfig(eps=0.1, max_outer=15, early_exit=False)
    a, b = solve(problem, cfg), solve(problem, cfg)
    assert a.counter.grad_f0_calls == a.outer_iters + 1
    assert a.total_inner_steps == sum(r["inner_steps"] for r in a.trace)
    assert a.trace == b.trace and np.array_equal(a.x, b.x)


def test_constants_formulas(problem):
    consts = compute_constants(problem, IpgConfig(eps=0.1), 10.0, 20.0)
    assert consts.K_eps == int(np.ceil(12 * 10.0 / 0.01))
    assert consts.K_bar_eps == int(np.ceil(192 * 20.0 / 0.01))
    assert consts.delta_bar_eps <= consts.delta_eps
    assert consts.delta_bar_eps <= 0.1 / (6 * consts.norm_stacked)
