import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipgkit.properties import pair_prox_oracle, subdiff_grid_oracle
from ipgkit.prox import (
    PairGeometry,
    ProxSpec,
    project_linf_ball,
    prox_conjugate,
    prox_pairwise_l1,
    prox_weighted_l1,
    subdiff_distance_weighted_l1,
)

floats = st.floats(-10, 10, allow_nan=False)


def test_soft_threshold_values():
    assert np.array_equal(prox_weighted_l1([3.0, -0.5, -2.0], 1.0), [2.0, 0.0, -1.0])


def test_pairwise_prox_merge_and_shift():
    g = PairGeometry(2, 1, (1,))
    assert np.allclose(prox_pairwise_l1([1.0, 0.0], 1.0, g), [0.5, 0.5])
    assert np.allclose(prox_pairwise_l1([3.0, 0.0], 1.0, g), [2.0, 1.0])


def test_pair_geometry_rejects_overlap():
    with pytest.raises(ValueError):
        PairGeometry(4, 1, (1, 2))


@settings(max_examples=200, deadline=None)
@given(a=floats, b=floats, c=st.floats(0, 5, allow_nan=False))
def test_pairwise_prox_matches_scalar_oracle(a, b, c):
    got = prox_pairwise_l1([a, b], c, PairGeometry(2, 1, (1,)))
    assert np.allclose(got, pair_prox_oracle(a, b, c), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(z=st.lists(floats, min_size=1, max_size=6), c=st.floats(0.01, 3), eta=st.floats(0.05, 20))
def test_moreau_identity_weighted_l1(z, c, eta):
    spec = ProxSpec("weighted_l1", weight=c)
    z = np.array(z)
    assert np.allclose(spec.conj_prox(z, eta), prox_conjugate(spec.prox, z, eta), atol=1e-12)
    assert np.allclose(spec.conj_prox(z, eta), project_linf_ball(z, c))


@settings(max_examples=60, deadline=None)
@given(y=st.lists(st.sampled_from([-1.0, 0.0, 2.0]), min_size=3, max_size=3),
       z=st.lists(floats, min_size=3, max_size=3), c=st.floats(0.1, 2))
def test_subdiff_distance_matches_grid(y, z, c):
    assert abs(subdiff_distance_weighted_l1(y, z, c) - subdiff_grid_oracle(y, z, c)) <= 1e-6


def test_prox_is_nonexpansive():
    rng = np.random.default_rng(1)
    g = PairGeometry(6, 3, (2, 4))
    for _ in range(100):
        u, v = rng.normal(size=18), rng.normal(size=18)
        pu, pv = prox_pairwise_l1(u, 0.3, g), prox_pairwise_l1(v, 0.3, g)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12


def test_spec_validation():
    with pytest.raises(ValueError):
        ProxSpec("pairwise_l1", weight=1.0)
    with pytest.raises(ValueError):
        ProxSpec("weighted_l1", weight=-1.0)
    with pytest.raises(ValueError):
        ProxSpec("weighted_l1", weight=1.0).prox(np.zeros(2), 0.0)
