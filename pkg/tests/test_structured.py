import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipgkit.structured import (
    BlockVector,
    CapacityError,
    ChainOperator,
    DimensionError,
    full_chain_gram_eigs,
    min_gram_eig,
    operator_norms,
    stacked_condition_number,
)


def dense_chain(p, rows, scale):
    J = np.zeros((len(rows), p))
    for k, r in enumerate(rows):
        J[k, r - 1], J[k, r] = -scale, scale
    return J


def test_block_indexing_is_one_based():
    v = BlockVector(3, 2, np.arange(6.0))
    assert np.array_equal(v.block(1), [0.0, 1.0])
    assert np.array_equal(v.block(3), [4.0, 5.0])
    with pytest.raises(IndexError):
        v.block(0)


def test_block_vector_rejects_bad_length():
    with pytest.raises(DimensionError):
        BlockVector(3, 2, np.zeros(5))


def test_chain_matvec_is_scaled_forward_difference():
    op = ChainOperator(2.0, 3, 1, (1, 2))
    assert np.array_equal(op.matvec([1.0, 4.0, 9.0]), [6.0, 10.0])


def test_rows_validated():
    with pytest.raises(ValueError):
        ChainOperator(1.0, 4, 2, (2, 1))
    with pytest.raises(ValueError):
        ChainOperator(1.0, 4, 2, (4,))


@settings(max_examples=50, deadline=None)
@given(p=st.integers(2, 9), bd=st.integers(1, 4), seed=st.integers(0, 2**31 - 1))
def test_adjoint_identity(p, bd, seed):
    rng = np.random.default_rng(seed)
    rows = tuple(sorted(rng.choice(np.arange(1, p), size=rng.integers(1, p), replace=False)))
    op = ChainOperator(float(rng.uniform(0.5, 3)), p, bd, rows)
    x, y = rng.normal(size=p * bd), rng.normal(size=len(rows) * bd)
    assert math.isclose(op.matvec(x) @ y, x @ op.rmatvec(y), rel_tol=1e-12, abs_tol=1e-12)
    assert np.allclose(op.todense() @ x, op.matvec(x))


@pytest.mark.parametrize("m", [2, 6, 12, 24, 48])
def test_full_chain_eigs_match_dense(m):
    J = dense_chain(m, range(1, m), float(m))
    assert np.allclose(full_chain_gram_eigs(m), np.linalg.eigvalsh(J @ J.T), rtol=1e-10)


def test_condition_number_m6():
    # sin(5 pi/12) / sin(pi/12) = 2 + sqrt(3)
    assert math.isclose(stacked_condition_number(6), 2 + math.sqrt(3), rel_tol=1e-12)
    assert math.isclose(stacked_condition_number(6), 3.7320508075688772, rel_tol=1e-15)


@pytest.mark.parametrize("m", [6, 12, 24, 96])
def test_condition_number_range(m):
    assert m / 4 <= stacked_condition_number(m) < m


def test_operator_norms_full_chain():
    m, bd = 6, 3
    norms = operator_norms(ChainOperator.full(m, bd, float(m)))
    eigs = full_chain_gram_eigs(m)
    assert math.isclose(norms["spectral_norm"], math.sqrt(eigs[-1]), rel_tol=1e-12)
    assert math.isclose(norms["min_pos_gram_eig"], eigs[0], rel_tol=1e-10)


def test_min_gram_eig_of_disjoint_rows():
    # non-adjacent rows give Abar Abar^T = 2 scale^2 I
    assert math.isclose(min_gram_eig(ChainOperator(6.0, 6, 2, (2, 4))), 72.0, rel_tol=1e-12)


def test_todense_capacity():
    with pytest.raises(CapacityError):
        ChainOperator.full(50, 100, 1.0).todense()
