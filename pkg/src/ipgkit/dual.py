"""Negative Lagrangian dual of the IPG subproblem and its restarted APG solver.

For an anchor ``x_k`` with gradient ``g_k`` the dual is

    D(z) = ||Abar^T z1 + A^T z2 + g_k - tau x_k||^2 / (2 tau)
           + gbar^*(z1) - <z1, bbar> - <z2, b>

over the stacked multiplier ``z = (z1, z2)``.  Multipliers are stored
concatenated; ``z1`` occupies the first ``dim_y`` entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .structured import CapacityError, StackedOperator, operator_norms

MODES = ("strongly_convex", "quadratic_growth", "reference_oracle", "adaptive")


class InnerSolveError(RuntimeError):
    """Raised when the inner solve cannot certify the requested accuracy."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class DualGeometry:
    """Anchor-independent data of the dual: stacked operator, spectrum, optional dense gram."""

    stacked: object
    dim_y: int
    dim_z2: int
    lambda_max: float
    lambda_min: float
    offsets: np.ndarray
    matrix: Optional[np.ndarray] = None
    gram: Optional[np.ndarray] = None

    @classmethod
    def from_problem(cls, problem, dense: bool = True) -> "DualGeometry":
        stacked = StackedOperator(problem.Abar, problem.A)
        matrix = gram = None
        if dense:
            try:
                matrix = stacked.todense()
            except CapacityError:
                matrix = None
        if matrix is not None:
            gram = matrix @ matrix.T
            eigs = np.linalg.eigvalsh(gram)
            lam_max, lam_min = float(eigs[-1]), float(eigs[0])
        else:
            norms = operator_norms(problem.H)
            lam_max = norms["spectral_norm"] ** 2
            lam_min = norms["min_pos_gram_eig"]
        lam_min = lam_min if lam_min > 1e-12 * lam_max else 0.0
        offsets = np.concatenate([problem.bbar, problem.b])
        return cls(stacked, problem.dim_y, problem.dim_z2, lam_max, lam_min, offsets, matrix, gram)

    @property
    def size(self) -> int:
        return self.dim_y + self.dim_z2

    @property
    def condition_number(self) -> float:
        if self.lambda_min <= 0:
            return math.inf
        return math.sqrt(self.lambda_max / self.lambda_min)

    def rmatvec(self, z) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.T @ z
        return self.stacked.rmatvec(z)

    def matvec(self, x) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ x
        return self.stacked.matvec(x)


class DualProblem:
    """The dual ``D`` for one outer iterate.

    ``L_D = lambda_max / tau``; ``mu_D = lambda_min / tau`` is positive when
    the stacked operator has full row rank.
    """

    def __init__(self, anchor_x, grad_anchor, tau: float, gbar, geometry: DualGeometry):
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau}")
        self.anchor_x = np.asarray(anchor_x, dtype=float).reshape(-1)
        self.grad_anchor = np.asarray(grad_anchor, dtype=float).reshape(-1)
        self.tau = float(tau)
        self.gbar = gbar
        self.geometry = geometry
        self.shift = self.grad_anchor - self.tau * self.anchor_x
        self.L_D = geometry.lambda_max / self.tau
        if not self.L_D > 0:
            raise ValueError("the stacked operator is zero; the dual has no curvature")
        self.mu_D = geometry.lambda_min / self.tau
        self.grad_evals = 0
        self.prox_evals = 0
        if geometry.gram is not None:
            self._gram = geometry.gram / self.tau
            self._lin = geometry.matvec(self.shift) / self.tau - geometry.offsets
        else:
            self._gram = None

    @classmethod
    def from_problem(cls, problem, anchor_x, grad_anchor, tau, geometry=None):
        geometry = geometry or DualGeometry.from_problem(problem)
        return cls(anchor_x, grad_anchor, tau, problem.gbar, geometry)

    @property
    def dim_y(self) -> int:
        return self.geometry.dim_y

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[: self.dim_y], z[self.dim_y :]

    def join(self, z1, z2) -> np.ndarray:
        return np.concatenate([np.asarray(z1, float).reshape(-1), np.asarray(z2, float).reshape(-1)])

    def residual_vector(self, z) -> np.ndarray:
        """``Abar^T z1 + A^T z2 + g_k - tau x_k``."""
        return self.geometry.rmatvec(z) + self.shift

    def primal_of(self, z) -> np.ndarray:
        """Primal recovery ``x_k - (Abar^T z1 + A^T z2 + g_k) / tau``."""
        return self.anchor_x - (self.geometry.rmatvec(z) + self.grad_anchor) / self.tau

    def smooth_grad(self, z) -> np.ndarray:
        self.grad_evals += 1
        if self._gram is not None:
            return self._gram @ z + self._lin
        return self.geometry.matvec(self.residual_vector(z)) / self.tau - self.geometry.offsets

    def smooth_value(self, z) -> float:
        w = self.residual_vector(z)
        return float(w @ w / (2 * self.tau) - z @ self.geometry.offsets)

    def value(self, z) -> float:
        """Dual value; ``inf`` outside the domain of the conjugate."""
        z1, _ = self.split(z)
        conj = self.gbar.conj_value(z1)
        if not np.isfinite(conj):
            return math.inf
        return self.smooth_value(z) + conj

    def prox_step(self, z, grad=None) -> np.ndarray:
        """One proximal-gradient step with step ``1 / L_D``."""
        if grad is None:
            grad = self.smooth_grad(z)
        u = z - grad / self.L_D
        self.prox_evals += 1
        u[: self.dim_y] = self.gbar.conj_prox(u[: self.dim_y], 1.0 / self.L_D)
        return u

    def z_init(self, x0, y0, A) -> np.ndarray:
        """The fixed inner start ``(y0, A x0)``."""
        return self.join(y0, A.matvec(x0))


def dual_value(dp: DualProblem, z) -> float:
    return dp.value(z)


@dataclass
class DualState:
    """APG iterate ``z``, extrapolated point ``zhat`` and momentum ``alpha``."""

    z: np.ndarray
    zhat: np.ndarray
    dim_y: int
    alpha: float = 1.0
    cycle_index: int = 0
    step_index: int = 0

    @classmethod
    def start(cls, z, dim_y: int) -> "DualState":
        z = np.array(z, dtype=float)
        return cls(z, z.copy(), dim_y)

    @property
    def z1(self):
        return self.z[: self.dim_y]

    @property
    def z2(self):
        return self.z[self.dim_y :]

    @property
    def zhat1(self):
        return self.zhat[: self.dim_y]

    @property
    def zhat2(self):
        return self.zhat[self.dim_y :]

    def restarted(self) -> "DualState":
        return DualState(self.z.copy(), self.z.copy(), self.dim_y, 1.0, self.cycle_index + 1, 0)


def apg_cycle(dp: DualProblem, start: DualState, steps: int) -> DualState:
    """Run exactly ``steps`` accelerated proximal-gradient steps from ``start``."""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    z, zhat, alpha = start.z.copy(), start.zhat.copy(), start.alpha
    for _ in range(steps):
        z_next = dp.prox_step(zhat)
        alpha_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha))
        zhat = z_next + ((alpha - 1.0) / alpha_next) * (z_next - z)
        z, alpha = z_next, alpha_next
    return DualState(z, zhat, start.dim_y, alpha, start.cycle_index, start.step_index + steps)


@dataclass
class InnerCertificate:
    """How an inner solution was certified.

    ``dist_bound`` bounds the distance to the dual solution set; under the
    scheduled modes it is the schedule's guarantee, under ``adaptive`` a
    computed a-posteriori bound.
    """

    mode: str
    mu_or_rho: float
    dist_bound: float
    steps_used: int
    cycles: int = 0
    cycle_length: int = 0
    delta: float = math.nan
    cycle_values: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.dist_bound <= self.delta


def cycle_length(L_D: float, curvature: float) -> int:
    """``ceil(2 sqrt(2 L_D / curvature))``; equals ``ceil(2 sqrt 2 kappa)`` for ``curvature = mu_D``."""
    if not curvature > 0:
        raise ValueError(f"curvature constant must be positive, got {curvature}")
    return max(1, math.ceil(2.0 * math.sqrt(2.0 * L_D / curvature)))


def cycle_count(gap: float, curvature: float, delta: float) -> int:
    """``ceil(log2(2 gap / (curvature delta^2)))``, at least zero."""
    if not gap > 0:
        raise ValueError(f"gap estimate must be positive, got {gap}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return max(0, math.ceil(math.log2(2.0 * gap / (curvature * delta * delta))))


def adaptive_bound(dp: DualProblem, z, curvature: float, growth: str = "strongly_convex"):
    """Prox-gradient step ``z_plus`` from ``z`` and a bound on its distance to the solution set.

    ``G - grad(z) + grad(z_plus)`` with ``G = L_D (z - z_plus)`` is a
    subgradient of ``D`` at ``z_plus``.  Strong convexity turns its norm
    ``s`` into ``dist <= s / mu``; quadratic growth into ``dist <= 2 s / rho``.
    """
    if not curvature > 0:
        raise ValueError(f"curvature constant must be positive, got {curvature}")
    grad = dp.smooth_grad(z)
    z_plus = dp.prox_step(z, grad)
    sub = dp.L_D * (z - z_plus) - grad + dp.smooth_grad(z_plus)
    factor = 1.0 if growth == "strongly_convex" else 2.0
    return z_plus, factor * float(np.linalg.norm(sub)) / curvature


def adaptive_stop_check(dp: DualProblem, z, mu: float, delta: float, growth: str = "strongly_convex"):
    """``(accepted, z_plus, bound)``; accepted iff the certified distance of ``z_plus`` is at most ``delta``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    z_plus, bound = adaptive_bound(dp, z, mu, growth)
    return bound <= delta, z_plus, bound


def reference_solve(dp: DualProblem, z0, max_steps: int = 100_000) -> np.ndarray:
    """Plain proximal gradient from ``z0``; stops early only at an exact fixed point."""
    z = np.array(z0, dtype=float)
    for _ in range(max_steps):
        z_next = dp.prox_step(z)
        if np.array_equal(z_next, z):
            break
        z = z_next
    return z


def restarted_apg(
    dp: DualProblem,
    z_init,
    delta: float,
    mode: str = "adaptive",
    curvature: Optional[float] = None,
    gap_estimate: Optional[float] = None,
    max_cycles: int = 10_000,
    record_values: bool = False,
):
    """Restarted APG to accuracy ``delta``; returns ``(z, certificate)``.

    ``curvature`` is ``mu_D`` (strongly convex) or ``rho`` (quadratic growth)
    and defaults to ``dp.mu_D``.  The scheduled modes need ``gap_estimate``,
    an upper bound on ``D(z_init) - D*``.  ``adaptive`` certifies after every
    cycle and restarts from the certificate point.
    """
    if mode not in MODES:
        raise ValueError(f"unknown inner mode {mode!r}; expected one of {MODES}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if curvature is None:
        curvature = dp.mu_D
    if not curvature > 0:
        raise ValueError(
            f"curvature constant must be positive, got {curvature}; supply rho for quadratic growth"
        )
    z0 = np.array(z_init, dtype=float)
    if not dp.gbar.in_conj_domain(z0[: dp.dim_y]):
        z0[: dp.dim_y] = dp.gbar.conj_prox(z0[: dp.dim_y], 1.0 / dp.L_D)
    growth = "quadratic_growth" if mode == "quadratic_growth" else "strongly_convex"

    if mode == "reference_oracle":
        z = reference_solve(dp, z0)
        _, bound = adaptive_bound(dp, z, curvature, growth)
        cert = InnerCertificate(mode, curvature, bound, 100_000, delta=delta)
        return z, cert

    j_k = cycle_length(dp.L_D, curvature)
    values = [dp.value(z0)] if record_values else []
    state = DualState.start(z0, dp.dim_y)
    steps = 0

    if mode in ("strongly_convex", "quadratic_growth"):
        if gap_estimate is None:
            raise ValueError("scheduled modes need gap_estimate")
        i_k = cycle_count(gap_estimate, curvature, delta)
        for _ in range(i_k):
            state = apg_cycle(dp, state, j_k).restarted()
            steps += j_k
            if record_values:
                values.append(dp.value(state.z))
        cert = InnerCertificate(
            mode, curvature, math.sqrt(2.0 * gap_estimate / curvature) * 2.0 ** (-i_k / 2.0),
            steps, i_k, j_k, delta, values,
        )
        return state.z, cert

    # adaptive
    z = state.z
    for cycle in range(max_cycles + 1):
        accepted, z_plus, bound = adaptive_stop_check(dp, z, curvature, delta, growth)
        steps += 1
        if accepted:
            cert = InnerCertificate("adaptive", curvature, bound, steps, cycle, j_k, delta, values)
            return z_plus, cert
        if cycle == max_cycles:
            break
        state = apg_cycle(dp, DualState.start(z_plus, dp.dim_y), j_k)
        steps += j_k
        z = state.z
        if record_values:
            values.append(dp.value(z))
    cert = InnerCertificate("adaptive", curvature, bound, steps, max_cycles, j_k, delta, values)
    raise InnerSolveError(
        f"inner solve did not certify dist <= {delta} within {max_cycles} cycles (bound {bound})",
        cert,
    )
