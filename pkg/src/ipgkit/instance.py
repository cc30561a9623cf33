"""The zero-chain worst-case instance and the generic composite problem container.

The smooth part is a sum of per-block chain functions ``f_i``; block ``i``
falls in one of three groups (first, middle, last third of the blocks) that
decide which links of the chain the block can advance.  All gradients are
assembled term by term so that coordinates that must vanish are exact zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .prox import ProxSpec
from .structured import (
    ChainOperator,
    DimensionError,
    as_flat,
    operator_norms,
    rows_complement,
    stack_operators,
)

PI = math.pi


def psi(u):
    """``0`` for ``u <= 0`` and ``1 - exp(-u^2)`` otherwise."""
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, -np.expm1(-u * u), 0.0)
    return out if out.ndim else float(out)


def psi_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, 2.0 * u * np.exp(-u * u), 0.0)
    return out if out.ndim else float(out)


def phi(v):
    """``4 arctan(v) + 2 pi``."""
    v = np.asarray(v, dtype=float)
    out = 4.0 * np.arctan(v) + 2.0 * PI
    return out if out.ndim else float(out)


def phi_prime(v):
    v = np.asarray(v, dtype=float)
    out = 4.0 / (1.0 + v * v)
    return out if out.ndim else float(out)


PSI_ONE = psi(1.0)


def varphi(z, j: int) -> float:
    """Chain link ``j`` (1-based) evaluated at ``z``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if not 1 <= j <= z.size:
        raise IndexError(f"link index {j} outside [1, {z.size}]")
    if j == 1:
        return float(-PSI_ONE * phi(z[0]))
    a, b = z[j - 2], z[j - 1]
    return float(psi(-a) * phi(-b) - psi(a) * phi(b))


def block_group(i: int, m: int) -> int:
    """Group of block ``i`` (1-based): 1, 2 or 3 for each third of ``1..m``."""
    if not 1 <= i <= m:
        raise IndexError(f"block index {i} outside [1, {m}]")
    if 3 * i <= m:
        return 1
    if 3 * i <= 2 * m:
        return 2
    return 3


def _link_indices(bd: int, group: int):
    """0-based ``(a, b)`` coordinate pairs of the weighted links of a group."""
    half = bd // 2
    if group == 1:
        a = np.arange(0, 2 * half - 1, 2)  # links j = 2, 4, ..., 2*half
    elif group == 3:
        a = np.arange(1, 2 * half, 2)  # links j = 3, 5, ..., 2*half + 1
    else:
        a = np.arange(0)
    return a, a + 1


def _links(a, b):
    """Values and partials of ``Psi(-a)Phi(-b) - Psi(a)Phi(b)``."""
    pa, pna = psi(a), psi(-a)
    val = pna * phi(-b) - pa * phi(b)
    da = -psi_prime(-a) * phi(-b) - psi_prime(a) * phi(b)
    db = -pna * phi_prime(-b) - pa * phi_prime(b)
    return val, da, db


def _h_rows(Z: np.ndarray, groups: np.ndarray):
    """Values and gradients of ``h_i`` for each row of ``Z``."""
    Z = np.atleast_2d(Z)
    vals = -PSI_ONE * phi(Z[:, 0])
    grads = np.zeros_like(Z)
    grads[:, 0] = -PSI_ONE * phi_prime(Z[:, 0])
    for g in (1, 3):
        rows = np.flatnonzero(groups == g)
        if rows.size == 0:
            continue
        ia, ib = _link_indices(Z.shape[1], g)
        if ia.size == 0:
            continue
        val, da, db = _links(Z[np.ix_(rows, ia)], Z[np.ix_(rows, ib)])
        vals[rows] += 3.0 * val.sum(axis=1)
        # links of one group touch disjoint coordinate pairs
        grads[np.ix_(rows, ia)] += 3.0 * da
        grads[np.ix_(rows, ib)] += 3.0 * db
    return vals, grads


def _check_link_dim(z, bd_min: int = 1) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size < bd_min:
        raise DimensionError(f"block vector too short: {z.size}")
    return z


def h(i: int, z, m: int) -> float:
    """Chain function of block ``i`` (1-based) among ``m`` blocks."""
    z = _check_link_dim(z)
    vals, _ = _h_rows(z[None, :], np.array([block_group(i, m)]))
    return float(vals[0])


def grad_h(i: int, z, m: int) -> np.ndarray:
    z = _check_link_dim(z)
    _, grads = _h_rows(z[None, :], np.array([block_group(i, m)]))
    return grads[0]


@dataclass(frozen=True)
class InstanceParams:
    """Knobs of the worst-case instance.

    ``m = 3*m1*m2`` blocks of size ``bd``.  ``beta`` may be ``None`` and is
    then resolved to 1.01 times the admissibility threshold.
    """

    m1: int
    m2: int
    bd: int
    eps: float
    L_f: float = 1.0
    beta: Optional[float] = None

    def __post_init__(self):
        if self.m1 < 2 or self.m1 % 2:
            raise ValueError(f"m1 must be an even integer >= 2, got {self.m1}")
        if self.m2 < 1:
            raise ValueError(f"m2 must be a positive integer, got {self.m2}")
        if self.bd < 5 or self.bd % 2 == 0:
            raise ValueError(f"bd must be an odd integer >= 5, got {self.bd}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.L_f > 0:
            raise ValueError(f"L_f must be positive, got {self.L_f}")
        if self.beta is not None and not self.beta > self.beta_threshold():
            raise ValueError(
                f"beta = {self.beta} violates beta > (50 pi + 1 + ||A||) sqrt(m) eps "
                f"= {self.beta_threshold()}"
            )

    @property
    def m(self) -> int:
        return 3 * self.m1 * self.m2

    @property
    def d(self) -> int:
        return self.m * self.bd

    @property
    def n(self) -> int:
        return (self.m - 3 * self.m2) * self.bd

    @property
    def nbar(self) -> int:
        return (3 * self.m2 - 1) * self.bd

    @property
    def coupled_rows(self) -> tuple:
        """Rows handled by the regularizer: multiples of ``m1`` below ``m``."""
        return tuple(i * self.m1 for i in range(1, 3 * self.m2))

    @property
    def constraint_rows(self) -> tuple:
        return rows_complement(self.m, self.coupled_rows)

    @property
    def op_scale(self) -> float:
        return self.m * self.L_f

    @property
    def arg_scale(self) -> float:
        """Factor mapping a block to the argument of ``h_i``."""
        return math.sqrt(self.m) * self.L_f / (150 * PI * self.eps)

    @property
    def value_scale(self) -> float:
        return 300 * PI * self.eps**2 / (self.m * self.L_f)

    @property
    def grad_scale(self) -> float:
        return 2 * self.eps / math.sqrt(self.m)

    def constraint_operator(self) -> ChainOperator:
        return ChainOperator(self.op_scale, self.m, self.bd, self.constraint_rows)

    def coupling_operator(self) -> ChainOperator:
        return ChainOperator(self.op_scale, self.m, self.bd, self.coupled_rows)

    def full_operator(self) -> ChainOperator:
        return ChainOperator.full(self.m, self.bd, self.op_scale)

    def norm_A(self) -> float:
        return operator_norms(self.constraint_operator())["spectral_norm"]

    def beta_threshold(self) -> float:
        return (50 * PI + 1 + self.norm_A()) * math.sqrt(self.m) * self.eps

    def resolved(self) -> "InstanceParams":
        if self.beta is not None:
            return self
        return replace(self, beta=1.01 * self.beta_threshold())

    @property
    def gbar_weight(self) -> float:
        if self.beta is None:
            raise ValueError("beta is unresolved; call resolved() first")
        return self.beta / (self.m * self.L_f)

    def groups(self) -> np.ndarray:
        return np.array([block_group(i, self.m) for i in range(1, self.m + 1)])


def f(i: int, z, params: InstanceParams) -> float:
    z = np.asarray(z, dtype=float).reshape(-1)
    return params.value_scale * h(i, params.arg_scale * z, params.m)


def grad_f(i: int, z, params: InstanceParams) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    return params.grad_scale * grad_h(i, params.arg_scale * z, params.m)


def _blocks(x, params: InstanceParams) -> np.ndarray:
    return as_flat(x, params.m, params.bd).reshape(params.m, params.bd)


def f0_value(x, params: InstanceParams) -> float:
    vals, _ = _h_rows(params.arg_scale * _blocks(x, params), params.groups())
    return float(params.value_scale * vals.sum())


def f0_grad(x, params: InstanceParams) -> np.ndarray:
    _, grads = _h_rows(params.arg_scale * _blocks(x, params), params.groups())
    return (params.grad_scale * grads).reshape(-1)


def _weight(params_or_weight) -> float:
    if isinstance(params_or_weight, InstanceParams):
        return params_or_weight.resolved().gbar_weight
    return float(params_or_weight)


def gbar_value(y, params_or_weight) -> float:
    """``(beta / (m L_f)) * ||y||_1``; a bare float is taken as the weight."""
    return float(_weight(params_or_weight) * np.abs(np.asarray(y, dtype=float)).sum())


def g_value(x, params: InstanceParams) -> float:
    """``beta * sum over coupled rows i of ||x_i - x_{i+1}||_1``."""
    params = params.resolved()
    X = _blocks(x, params)
    idx = np.asarray(params.coupled_rows) - 1
    return float(params.beta * np.abs(X[idx] - X[idx + 1]).sum())


def _spot_check_gradient(value, grad, dim: int, scale: float, rtol: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(3):
        x = scale * rng.uniform(-2, 2, dim)
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        step = 1e-6 * scale
        fd = (value(x + step * u) - value(x - step * u)) / (2 * step)
        g = grad(x)
        ref = max(np.linalg.norm(g), 1e-12)
        if abs(fd - g @ u) > rtol * ref:
            raise ValueError(
                f"gradient oracle disagrees with finite differences: {fd} vs {g @ u}"
            )


@dataclass
class CompositeProblem:
    """``min f0(x) + gbar(y)  s.t.  A x + b = 0,  y = Abar x + bbar``."""

    f0: Callable
    grad_f0: Callable
    L_f: float
    l_f: float
    gbar: ProxSpec
    A: object
    Abar: object
    b: np.ndarray
    bbar: np.ndarray
    l_g: Optional[float] = None
    params: Optional[InstanceParams] = None
    check_gradient: bool = True
    name: str = "composite"
    H: object = field(default=None, repr=False)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.bbar = np.asarray(self.bbar, dtype=float).reshape(-1)
        if self.A.shape[1] != self.Abar.shape[1]:
            raise DimensionError(
                f"A and Abar act on different spaces: {self.A.shape[1]} vs {self.Abar.shape[1]}"
            )
        if self.b.size != self.A.shape[0]:
            raise DimensionError(f"b has length {self.b.size}, A has {self.A.shape[0]} rows")
        if self.bbar.size != self.Abar.shape[0]:
            raise DimensionError(
                f"bbar has length {self.bbar.size}, Abar has {self.Abar.shape[0]} rows"
            )
        if self.l_g is None:
            self.l_g = self.gbar.lipschitz_constant(self.dim_y)
        if self.H is None:
            self.H = stack_operators(self.Abar, self.A)
        if self.check_gradient:
            scale = 1.0 / self.params.arg_scale if self.params is not None else 1.0
            _spot_check_gradient(self.f0, self.grad_f0, self.dim_x, scale, 1e-5)

    @property
    def dim_x(self) -> int:
        return self.A.shape[1]

    @property
    def dim_y(self) -> int:
        return self.Abar.shape[0]

    @property
    def dim_z2(self) -> int:
        return self.A.shape[0]

    def objective(self, x, y) -> float:
        """Split objective ``f0(x) + gbar(y)``."""
        return float(self.f0(x) + self.gbar.value(y))

    def composite_objective(self, x) -> float:
        """Original objective ``f0(x) + gbar(Abar x + bbar)``."""
        return float(self.f0(x) + self.gbar.value(self.Abar.matvec(x) + self.bbar))

    def feasible_start(self):
        """``(x, y)`` with ``x`` the least-norm solution of ``A x + b = 0``."""
        if not np.any(self.b):
            x = np.zeros(self.dim_x)
        else:
            M = self.A.todense()
            x = -np.linalg.lstsq(M, self.b, rcond=None)[0]
        return x, self.Abar.matvec(x) + self.bbar


def build_instance(params: InstanceParams, check_gradient: bool = True) -> CompositeProblem:
    """Assemble the worst-case instance as a split composite problem."""
    params = params.resolved()
    A = params.constraint_operator()
    Abar = params.coupling_operator()
    gbar = ProxSpec("weighted_l1", weight=params.gbar_weight)
    return CompositeProblem(
        f0=lambda x: f0_value(x, params),
        grad_f0=lambda x: f0_grad(x, params),
        L_f=params.L_f,
        l_f=50 * PI * params.eps * math.sqrt(params.m * params.bd),
        gbar=gbar,
        A=A,
        Abar=Abar,
        b=np.zeros(params.n),
        bbar=np.zeros(params.nbar),
        l_g=math.sqrt(params.nbar) * params.gbar_weight,
        params=params,
        check_gradient=check_gradient,
        name="worst_case_instance",
        H=params.full_operator(),
    )


def suboptimality_bound(params: InstanceParams) -> float:
    """Upper bound ``3000 pi^2 bd eps^2 / L_f`` on ``f0(0) - inf f0``."""
    return 3000 * PI**2 * params.bd * params.eps**2 / params.L_f


def default_gap_bounds(problem: CompositeProblem, x0=None, y0=None):
    """Upper bounds on the initial optimality gaps of the split and original problems.

    Only available for the worst-case instance, where ``inf f0`` is bounded
    below by ``f0(0) - 3000 pi^2 bd eps^2 / L_f`` and the regularizer is
    non-negative.
    """
    if problem.params is None:
        raise ValueError("default gap bounds need the worst-case instance; supply them")
    params = problem.params
    if x0 is None:
        x0, y0 = problem.feasible_start()
    floor = f0_value(np.zeros(params.d), params) - suboptimality_bound(params)
    delta_F = problem.objective(x0, y0) - floor
    delta_F0 = problem.composite_objective(x0) - floor
    return float(delta_F), float(delta_F0)


def instance_summary(problem: CompositeProblem) -> dict:
    """JSON-ready description of a worst-case instance."""
    from .structured import stacked_condition_number

    params = problem.params
    if params is None:
        raise ValueError("instance_summary needs the worst-case instance")
    norms_A = operator_norms(problem.A)
    norms_Abar = operator_norms(problem.Abar)
    norms_H = operator_norms(problem.H)
    return {
        "params": {
            "m1": params.m1,
            "m2": params.m2,
            "bd": params.bd,
            "eps": params.eps,
            "L_f": params.L_f,
            "beta": params.beta,
        },
        "dimensions": {
            "m": params.m,
            "d": params.d,
            "n": params.n,
            "nbar": params.nbar,
        },
        "coupled_rows": list(params.coupled_rows),
        "constraint_rows": list(params.constraint_rows),
        "beta_threshold": params.beta_threshold(),
        "gbar_weight": params.gbar_weight,
        "l_f": problem.l_f,
        "l_g": problem.l_g,
        "norms": {
            "A": norms_A["spectral_norm"],
            "Abar": norms_Abar["spectral_norm"],
            "stacked": norms_H["spectral_norm"],
            "stacked_min_gram_eig": norms_H["min_pos_gram_eig"],
        },
        "kappa": stacked_condition_number(params.m),
    }
