import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipgkit.instance import InstanceParams
from ipgkit.properties import (
    central_difference,
    check_gradients,
    check_stationarity_lemmas,
    pair_prox_oracle,
    run_suite,
    subdiff_grid_oracle,
)

import numpy as np


def test_central_difference_on_quadratic():
    z = np.array([1.0, -2.0])
    assert np.allclose(central_difference(lambda v: v @ v, z, 1e-4), 2 * z)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(0, 3))
def test_pair_oracle_optimality(a, b, c):
    u, v = pair_prox_oracle(a, b, c)
    obj = lambda p, q: 0.5 * (p - a) ** 2 + 0.5 * (q - b) ** 2 + c * abs(p - q)
    base = obj(u, v)
    for du, dv in ((1e-4, 0), (0, 1e-4), (-1e-4, 0), (0, -1e-4), (1e-4, 1e-4)):
        assert obj(u + du, v + dv) >= base - 1e-12


def test_grid_oracle_known_distance():
    # z = (3, 0.5, 0) against c=1 at y = (1, 0, -2): distances (2, 0, 1)
    assert math.isclose(subdiff_grid_oracle([1.0, 0.0, -2.0], [3.0, 0.5, 0.0], 1.0),
                        math.sqrt(5), rel_tol=1e-9)


def test_fault_is_detected():
    ok, _ = check_gradients(InstanceParams(2, 1, 5, 0.1), points=3, fault="negate_grad_branch")
    assert not ok


def test_stationarity_lemmas():
    ok, detail = check_stationarity_lemmas(InstanceParams(2, 1, 5, 0.1), samples=50)
    assert ok, detail


@pytest.mark.parametrize("seed", [0, 7])
def test_suite_passes_for_any_seed(seed):
    results = run_suite(seed=seed, quick=True)
    assert all(r.passed for r in results), [r.to_dict() for r in results if not r.passed]


def test_unknown_fault():
    with pytest.raises(ValueError):
        run_suite(fault="flip_everything")
