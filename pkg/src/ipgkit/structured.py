"""Block vectors and scaled chain-difference operators.

A chain operator is ``scale * (J_S kron I_bd)`` where ``J`` is the
``(p-1) x p`` forward-difference matrix and ``S`` selects a subset of its
rows.  Row ``i`` (1-based) maps a block vector ``x`` to
``scale * (x_{i+1} - x_i)``.  Public signatures use 1-based block and row
indices; arrays are 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DENSE_CAPACITY = 4000


class DimensionError(ValueError):
    """Raised when a vector does not conform to an operator."""


class CapacityError(RuntimeError):
    """Raised when a dense computation would exceed the desk-scale cap."""


@dataclass(frozen=True)
class BlockVector:
    """A vector of ``p`` blocks, each of length ``bd``.

    Block ``i`` (1-based) occupies entries ``[(i-1)*bd, i*bd)`` of ``data``.
    """

    p: int
    bd: int
    data: np.ndarray

    def __post_init__(self):
        if self.p < 0 or self.bd < 1:
            raise DimensionError(f"invalid block shape p={self.p}, bd={self.bd}")
        arr = np.array(self.data, dtype=float).reshape(-1)
        if arr.size != self.p * self.bd:
            raise DimensionError(
                f"data length {arr.size} != p*bd = {self.p}*{self.bd}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, p: int, bd: int) -> "BlockVector":
        return cls(p, bd, np.zeros(p * bd))

    @classmethod
    def from_blocks(cls, blocks) -> "BlockVector":
        arr = np.atleast_2d(np.asarray(blocks, dtype=float))
        return cls(arr.shape[0], arr.shape[1], arr.reshape(-1))

    def block(self, i: int) -> np.ndarray:
        """Return block ``i`` (1-based)."""
        if not 1 <= i <= self.p:
            raise IndexError(f"block index {i} outside [1, {self.p}]")
        return self.data[(i - 1) * self.bd : i * self.bd]

    def blocks(self) -> np.ndarray:
        """Read-only ``(p, bd)`` view."""
        return self.data.reshape(self.p, self.bd)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)


def as_flat(x, p: int, bd: int, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a flat float array of ``p`` blocks of size ``bd``."""
    if isinstance(x, BlockVector):
        if (x.p, x.bd) != (p, bd):
            raise DimensionError(
                f"{name}: expected (p, bd) = ({p}, {bd}), got ({x.p}, {x.bd})"
            )
        return x.data
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size != p * bd:
        raise DimensionError(
            f"{name}: expected (p, bd) = ({p}, {bd}) i.e. length {p * bd}, "
            f"got length {arr.size}"
        )
    return arr


@dataclass(frozen=True)
class ChainOperator:
    """Implicit ``scale * (J_S kron I_bd)`` with ``S`` a set of 1-based rows."""

    scale: float
    p: int
    bd: int
    rows: tuple

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.p < 1 or self.bd < 1:
            raise DimensionError(f"invalid shape p={self.p}, bd={self.bd}")
        rows = tuple(int(r) for r in self.rows)
        if any(b <= a for a, b in zip(rows, rows[1:])):
            raise ValueError(f"rows must be strictly increasing: {rows}")
        if rows and (rows[0] < 1 or rows[-1] > self.p - 1):
            raise ValueError(f"rows must lie in [1, {self.p - 1}]: {rows}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_idx", np.asarray(rows, dtype=int) - 1)

    @classmethod
    def full(cls, p: int, bd: int, scale: float) -> "ChainOperator":
        return cls(scale, p, bd, tuple(range(1, p)))

    @property
    def out_blocks(self) -> int:
        return len(self.rows)

    @property
    def shape(self) -> tuple:
        return (len(self.rows) * self.bd, self.p * self.bd)

    def matvec(self, x) -> np.ndarray:
        X = as_flat(x, self.p, self.bd).reshape(self.p, self.bd)
        idx = self._idx
        return (self.scale * (X[idx + 1] - X[idx])).reshape(-1)

    def rmatvec(self, y) -> np.ndarray:
        Y = as_flat(y, len(self.rows), self.bd, name="y").reshape(-1, self.bd)
        out = np.zeros((self.p, self.bd))
        idx = self._idx
        # rows are distinct, so each fancy-index update touches distinct blocks
        out[idx] -= self.scale * Y
        out[idx + 1] += self.scale * Y
        return out.reshape(-1)

    def reduced_matrix(self) -> np.ndarray:
        """The ``|S| x p`` matrix ``scale * J_S`` (without the identity factor)."""
        J = np.zeros((len(self.rows), self.p))
        for k, r in enumerate(self.rows):
            J[k, r - 1] = -self.scale
            J[k, r] = self.scale
        return J

    def todense(self, max_dim: int = DENSE_CAPACITY) -> np.ndarray:
        rows, cols = self.shape
        if max(rows, cols) > max_dim:
            raise CapacityError(
                f"dense chain operator {rows}x{cols} exceeds capacity {max_dim}"
            )
        return np.kron(self.reduced_matrix(), np.eye(self.bd))


class DenseOperator:
    """Explicit matrix with the same interface as :class:`ChainOperator`."""

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.matrix.setflags(write=False)

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.shape[1]:
            raise DimensionError(f"expected length {self.shape[1]}, got {x.size}")
        return self.matrix @ x

    def rmatvec(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != self.shape[0]:
            raise DimensionError(f"expected length {self.shape[0]}, got {y.size}")
        return self.matrix.T @ y

    def todense(self, max_dim: int = DENSE_CAPACITY) -> np.ndarray:
        if max(self.shape) > max_dim:
            raise CapacityError(f"dense operator {self.shape} exceeds capacity {max_dim}")
        return np.array(self.matrix)


def chain_matvec(op: ChainOperator, x) -> BlockVector:
    """Apply ``op`` to ``x``; returns a block vector with ``|S|`` blocks."""
    return BlockVector(op.out_blocks, op.bd, op.matvec(x))


def chain_rmatvec(op: ChainOperator, y) -> BlockVector:
    """Apply the transpose of ``op`` to ``y``."""
    return BlockVector(op.p, op.bd, op.rmatvec(y))


def full_chain_gram_eigs(m: int, L_f: float = 1.0) -> np.ndarray:
    """Ascending eigenvalues of ``H H^T`` for the full chain with scale ``m*L_f``.

    ``lambda_i = 4 m^2 L_f^2 sin^2(i pi / (2m))`` for ``i = 1..m-1``.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    i = np.arange(1, m)
    return 4.0 * m**2 * L_f**2 * np.sin(i * np.pi / (2 * m)) ** 2


def stacked_condition_number(m: int) -> float:
    """Condition number of the full chain, ``sin((m-1)pi/2m) / sin(pi/2m)``."""
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    return float(np.sin((m - 1) * np.pi / (2 * m)) / np.sin(np.pi / (2 * m)))


def _gram_eigs(op) -> np.ndarray:
    if isinstance(op, ChainOperator):
        rows, cols = op.shape
        if max(rows, cols) > DENSE_CAPACITY:
            raise CapacityError(
                f"operator {rows}x{cols} exceeds dense capacity {DENSE_CAPACITY}"
            )
        # (J_S kron I)(J_S kron I)^T = (J_S J_S^T) kron I shares its spectrum
        R = op.reduced_matrix()
        return np.linalg.eigvalsh(R @ R.T)
    M = op.todense()
    return np.linalg.eigvalsh(M @ M.T)


def operator_norms(op) -> dict:
    """Spectral norm and smallest positive eigenvalue of ``M M^T``."""
    eigs = _gram_eigs(op)
    if eigs.size == 0:
        return {"spectral_norm": 0.0, "min_pos_gram_eig": 0.0}
    top = float(eigs[-1])
    tol = max(top, 1.0) * 1e-12 * max(eigs.size, 1)
    pos = eigs[eigs > tol]
    return {
        "spectral_norm": float(np.sqrt(max(top, 0.0))),
        "min_pos_gram_eig": float(pos[0]) if pos.size else 0.0,
    }


def min_gram_eig(op) -> float:
    """Smallest eigenvalue of ``M M^T`` (zero when ``M`` is rank deficient)."""
    eigs = _gram_eigs(op)
    return float(eigs[0]) if eigs.size else 0.0


class StackedOperator:
    """Row stack ``[top; bottom]`` of two operators acting on the same space."""

    def __init__(self, top, bottom):
        if top.shape[1] != bottom.shape[1]:
            raise DimensionError(
                f"stacked operators disagree on input size: {top.shape[1]} vs {bottom.shape[1]}"
            )
        self.top = top
        self.bottom = bottom

    @property
    def shape(self) -> tuple:
        return (self.top.shape[0] + self.bottom.shape[0], self.top.shape[1])

    def matvec(self, x) -> np.ndarray:
        return np.concatenate([self.top.matvec(x), self.bottom.matvec(x)])

    def rmatvec(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        k = self.top.shape[0]
        return self.top.rmatvec(z[:k]) + self.bottom.rmatvec(z[k:])

    def todense(self, max_dim: int = DENSE_CAPACITY) -> np.ndarray:
        return np.vstack([self.top.todense(max_dim), self.bottom.todense(max_dim)])


def stack_operators(top, bottom):
    """Stack two operators; chain operators with a common scale stay implicit."""
    if (
        isinstance(top, ChainOperator)
        and isinstance(bottom, ChainOperator)
        and (top.p, top.bd, top.scale) == (bottom.p, bottom.bd, bottom.scale)
        and not set(top.rows) & set(bottom.rows)
    ):
        # the row order of the stack does not change any norm or spectrum
        return ChainOperator(top.scale, top.p, top.bd, tuple(sorted(top.rows + bottom.rows)))
    return StackedOperator(top, bottom)


def rows_complement(p: int, rows: Sequence[int]) -> tuple:
    chosen = set(rows)
    return tuple(r for r in range(1, p) if r not in chosen)
