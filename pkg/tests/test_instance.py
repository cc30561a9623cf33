import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipgkit.instance import (
    PSI_ONE,
    InstanceParams,
    block_group,
    build_instance,
    f0_value,
    g_value,
    grad_h,
    h,
    instance_summary,
    psi,
    suboptimality_bound,
    varphi,
)


def test_h_at_origin():
    # every weighted link vanishes at zero, leaving the first link
    expected = -(1 - math.exp(-1)) * 2 * math.pi
    for i in range(1, 7):
        assert math.isclose(h(i, np.zeros(5), 6), expected, rel_tol=1e-14)
        assert np.allclose(grad_h(i, np.zeros(5), 6), [-4 * (1 - math.exp(-1)), 0, 0, 0, 0])


def test_psi_one():
    assert math.isclose(PSI_ONE, 1 - math.exp(-1), rel_tol=1e-15)
    assert psi(-2.0) == 0.0


def test_block_groups_are_thirds():
    assert [block_group(i, 6) for i in range(1, 7)] == [1, 1, 2, 2, 3, 3]


def test_link_one_is_first_coordinate_only():
    z = np.array([0.3, -1.0, 2.0])
    assert varphi(z, 1) == pytest.approx(-PSI_ONE * (4 * math.atan(0.3) + 2 * math.pi))


def test_group_two_is_flat_beyond_first_coordinate():
    z = np.random.default_rng(0).normal(size=7)
    g = grad_h(3, z, 6)
    assert np.all(g[1:] == 0.0)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        (dict(m1=3, m2=1, bd=5, eps=0.1), "m1"),
        (dict(m1=2, m2=1, bd=4, eps=0.1), "odd"),
        (dict(m1=2, m2=1, bd=5, eps=1.5), "eps"),
        (dict(m1=2, m2=1, bd=5, eps=0.1, beta=1e-3), "beta"),
    ],
)
def test_params_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        InstanceParams(**kwargs)


def test_dimensions_and_rows():
    p = InstanceParams(2, 2, 5, 0.1)
    assert (p.m, p.d, p.n, p.nbar) == (12, 60, 30, 25)
    assert p.coupled_rows == (2, 4, 6, 8, 10)
    assert set(p.coupled_rows).isdisjoint(p.constraint_rows)
    assert sorted(p.coupled_rows + p.constraint_rows) == list(range(1, 12))


def test_summary_m6():
    s = instance_summary(build_instance(InstanceParams(2, 1, 5, 0.1)))
    assert s["dimensions"] == {"m": 6, "d": 30, "n": 15, "nbar": 10}
    assert math.isclose(s["kappa"], 3.7320508075688772, rel_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_regularizer_is_pairwise_l1(seed):
    p = InstanceParams(2, 1, 5, 0.1).resolved()
    x = np.random.default_rng(seed).normal(size=p.d)
    X = x.reshape(p.m, p.bd)
    direct = p.beta * sum(np.abs(X[i] - X[i - 1]).sum() for i in p.coupled_rows)
    assert math.isclose(g_value(x, p), direct, rel_tol=1e-12)


def test_consensus_gap_within_bound():
    p = InstanceParams(2, 1, 5, 0.1).resolved()
    unit = 1.0 / p.arg_scale
    drop = f0_value(np.zeros(p.d), p) - f0_value(np.full(p.d, 10 * unit), p)
    assert 0 < drop <= suboptimality_bound(p)


def test_gradient_spot_check_catches_wrong_gradient():
    from ipgkit.instance import CompositeProblem

    p = InstanceParams(2, 1, 5, 0.1).resolved()
    good = build_instance(p)
    with pytest.raises(ValueError, match="finite differences"):
        CompositeProblem(
            f0=good.f0, grad_f0=lambda x: -good.grad_f0(x), L_f=1.0, l_f=good.l_f,
            gbar=good.gbar, A=good.A, Abar=good.Abar, b=good.b, bbar=good.bbar, params=p,
        )
