"""Inexact proximal gradient for the split problem.

Each outer step solves the dual of a proximal linearization to accuracy
``delta`` and recovers the primal iterate in closed form:

    x+ = x - (Abar^T z1 + A^T z2 + grad f0(x)) / tau
    y+ = prox_{gbar / sigma}(z1 / sigma + Abar x+ + bbar)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .audit import StationarityReport, audit_SP
from .counters import OracleCounter
from .dual import (
    DualGeometry,
    DualProblem,
    InnerCertificate,
    InnerSolveError,
    adaptive_bound,
    restarted_apg,
)
from .instance import default_gap_bounds
from .structured import min_gram_eig, operator_norms

DELTA_MODES = ("explicit", "theory_eps", "theory_near_eps")
INNER_MODES = ("adaptive", "strongly_convex", "quadratic_growth", "reference_oracle")


class RankDeficientError(ValueError):
    """Raised when the affine constraint matrix lacks full row rank."""


@dataclass(frozen=True)
class IpgConfig:
    """Solver knobs.  ``tau`` defaults to ``2 L_f`` and ``sigma`` to ``L_f``."""

    eps: float
    tau: Optional[float] = None
    sigma: Optional[float] = None
    delta_mode: str = "theory_eps"
    delta: Optional[float] = None
    inner_mode: str = "adaptive"
    rho: Optional[float] = None
    max_outer: int = 10_000
    early_exit: bool = True
    warm_start: bool = False
    delta_F: Optional[float] = None
    delta_F0: Optional[float] = None
    max_inner_cycles: int = 10_000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}; expected one of {DELTA_MODES}")
        if self.delta_mode == "explicit" and not (self.delta is not None and self.delta > 0):
            raise ValueError("explicit delta_mode needs a positive delta")
        if self.inner_mode not in INNER_MODES:
            raise ValueError(f"unknown inner_mode {self.inner_mode!r}; expected one of {INNER_MODES}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.max_outer < 0:
            raise ValueError(f"max_outer must be non-negative, got {self.max_outer}")

    def resolved(self, L_f: float) -> "IpgConfig":
        tau = 2.0 * L_f if self.tau is None else float(self.tau)
        sigma = float(L_f) if self.sigma is None else float(self.sigma)
        if not tau > L_f:
            raise ValueError(f"tau must exceed L_f = {L_f}, got {tau}")
        return replace(self, tau=tau, sigma=sigma)


@dataclass(frozen=True)
class TheoryConstants:
    B1: float
    B2: float
    B3: float
    B4: float
    delta_eps: float
    delta_bar_eps: float
    K_eps: int
    K_bar_eps: int
    l_f: float
    l_g: float
    norm_A: float
    norm_Abar: float
    norm_stacked: float
    pinv_norm: float
    delta_F: float
    delta_F0: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compute_constants(problem, config: IpgConfig, delta_F_bound: float, delta_F0_bound: float) -> TheoryConstants:
    """Bound constants, the two accuracy targets and the two outer iteration budgets."""
    cfg = config.resolved(problem.L_f)
    tau, sigma, eps, L_f = cfg.tau, cfg.sigma, cfg.eps, problem.L_f
    if not delta_F_bound > 0 or not delta_F0_bound > 0:
        raise ValueError("gap bounds must be positive")
    norm_A = operator_norms(problem.A)["spectral_norm"]
    norm_Abar = operator_norms(problem.Abar)["spectral_norm"]
    norm_H = operator_norms(problem.H)["spectral_norm"]
    lam = min_gram_eig(problem.A)
    if problem.dim_z2 and not lam > 1e-12 * max(norm_A**2, 1.0):
        raise RankDeficientError(
            "the constraint matrix A must have full row rank (A A^T is singular)"
        )
    pinv = 1.0 / math.sqrt(lam) if problem.dim_z2 else 0.0
    l_f, l_g = float(problem.l_f), float(problem.l_g)

    B1 = norm_Abar * norm_H / tau + 1.0 / sigma + (norm_Abar + norm_A) * norm_H / tau
    B2 = pinv * (l_f + norm_Abar * l_g)
    B3 = 1.0 + pinv * norm_H
    B4 = (l_f + norm_H * (l_g + B2)) / tau
    delta_eps = min(
        eps / (B1 * sigma),
        eps / B1,
        eps**2 / (48 * L_f * B1 * (B2 + sigma * norm_Abar * B4 + l_g)),
        math.sqrt(eps**2 / (48 * L_f * B1 * B3 * (1 + sigma * norm_Abar * norm_H / tau))),
    )
    near_terms = [eps / (6 * norm_H), delta_eps]
    if l_g > 0:
        near_terms.append(delta_F0_bound / (B1 * l_g))
    delta_bar = min(near_terms)
    return TheoryConstants(
        B1=B1, B2=B2, B3=B3, B4=B4,
        delta_eps=delta_eps,
        delta_bar_eps=delta_bar,
        K_eps=math.ceil(12 * L_f * delta_F_bound / eps**2),
        K_bar_eps=math.ceil(192 * L_f * delta_F0_bound / eps**2),
        l_f=l_f, l_g=l_g,
        norm_A=norm_A, norm_Abar=norm_Abar, norm_stacked=norm_H, pinv_norm=pinv,
        delta_F=float(delta_F_bound), delta_F0=float(delta_F0_bound),
    )


@dataclass
class IpgState:
    """Outer iterate with the multipliers that produced it."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: int
    grad: np.ndarray
    counter: OracleCounter = field(default_factory=OracleCounter)
    step_norms: list = field(default_factory=list)

    @property
    def z1(self):
        return self.z[: self.y.size]

    @property
    def z2(self):
        return self.z[self.y.size :]


@dataclass
class StepInfo:
    """What one outer step produced besides the new state."""

    anchor_x: np.ndarray
    anchor_grad: np.ndarray
    step_norm: float
    inner_steps: int
    inner_bound: float
    report: StationarityReport


class _Context:
    """Per-solve data shared by all outer steps."""

    def __init__(self, problem, config: IpgConfig, delta: float, x0, y0):
        self.problem = problem
        self.config = config
        self.delta = delta
        self.geometry = DualGeometry.from_problem(problem)
        self.mu = self.geometry.lambda_min / config.tau
        self.curvature = config.rho if config.rho is not None else self.mu
        if config.inner_mode != "reference_oracle" and not self.curvature > 0:
            raise ValueError(
                "the stacked operator is rank deficient; supply rho (quadratic growth constant)"
            )
        self.z_ini = np.concatenate([np.asarray(y0, float), problem.A.matvec(x0)])


def initial_state(problem, x0=None, y0=None) -> IpgState:
    if x0 is None:
        x0, y0 = problem.feasible_start()
    x0 = np.asarray(x0, dtype=float).reshape(-1).copy()
    y0 = np.asarray(y0, dtype=float).reshape(-1).copy() if y0 is not None else (
        problem.Abar.matvec(x0) + problem.bbar
    )
    counter = OracleCounter()
    grad = problem.grad_f0(x0)
    counter.add(grad_f0_calls=1)
    z = np.zeros(problem.dim_y + problem.dim_z2)
    return IpgState(x0, y0, z, 0, grad, counter)


def _inner_solve(ctx: _Context, dp: DualProblem, z_start):
    cfg = ctx.config
    mode = cfg.inner_mode
    if mode == "adaptive":
        return restarted_apg(dp, z_start, ctx.delta, "adaptive", ctx.curvature,
                             max_cycles=cfg.max_inner_cycles)
    if mode == "reference_oracle":
        return restarted_apg(dp, z_start, ctx.delta, "reference_oracle", ctx.curvature or 1.0)
    # scheduled modes: one certificate step yields a rigorous gap bound to start from
    growth = "quadratic_growth" if mode == "quadratic_growth" else "strongly_convex"
    z_plus, dist = adaptive_bound(dp, z_start, ctx.curvature, growth)
    if dist <= ctx.delta:
        return z_plus, InnerCertificate(mode, ctx.curvature, dist, 1, 0, 0, ctx.delta)
    sub_norm = dist * ctx.curvature / (1.0 if growth == "strongly_convex" else 2.0)
    gap = sub_norm * dist
    return restarted_apg(dp, z_plus, ctx.delta, mode, ctx.curvature, gap_estimate=gap)


def _step(ctx: _Context, state: IpgState):
    problem, cfg = ctx.problem, ctx.config
    dp = DualProblem(state.x, state.grad, cfg.tau, problem.gbar, ctx.geometry)
    z_start = state.z if (cfg.warm_start and state.k > 0) else ctx.z_ini
    z, cert = _inner_solve(ctx, dp, z_start)
    if not cert.dist_bound <= ctx.delta:
        raise InnerSolveError(
            f"inner solve bound {cert.dist_bound} exceeds delta {ctx.delta}", cert
        )
    x_new = dp.primal_of(z)
    z1 = z[: problem.dim_y]
    y_new = problem.gbar.prox(z1 / cfg.sigma + problem.Abar.matvec(x_new) + problem.bbar,
                              1.0 / cfg.sigma)
    grad_new = problem.grad_f0(x_new)

    counter = state.counter
    n_grad, n_prox = dp.grad_evals, dp.prox_evals
    counter.add(
        grad_f0_calls=1,
        A_matvecs=n_grad, Abar_matvecs=n_grad + 1,
        At_matvecs=n_grad + 1, Abart_matvecs=n_grad + 1,
        prox_gbar_calls=n_prox + 1,
    )
    step_norm = float(np.linalg.norm(x_new - state.x))
    report = audit_SP(problem, x_new, y_new, z1, z[problem.dim_y :], cfg.eps, grad=grad_new)
    new_state = IpgState(
        x_new, y_new, z, state.k + 1, grad_new, counter, state.step_norms + [step_norm]
    )
    info = StepInfo(state.x, state.grad, step_norm, n_grad, cert.dist_bound, report)
    return new_state, info


def ipg_step(problem, config: IpgConfig, state: IpgState, delta: float, x0=None, y0=None) -> IpgState:
    """One outer step with inner accuracy ``delta``.

    ``(x0, y0)`` fixes the inner start ``(y0, A x0)``; it defaults to the
    problem's feasible start.
    """
    cfg = config.resolved(problem.L_f)
    if x0 is None:
        x0, y0 = problem.feasible_start()
    ctx = _Context(problem, cfg, delta, x0, y0)
    return _step(ctx, state)[0]


@dataclass
class SolveResult:
    x: np.ndarray
    y: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    report: StationarityReport
    trace: list
    counter: OracleCounter
    certified: bool
    k_best: int
    outer_iters: int
    total_inner_steps: int
    delta: float
    outer_limit: int
    anchor_x: np.ndarray
    anchor_grad: np.ndarray
    constants: Optional[TheoryConstants] = None
    exit_reason: str = ""

    @property
    def best_iterate(self):
        return self.x, self.y, (self.z1, self.z2)


def resolve_delta(problem, cfg: IpgConfig, x0, y0):
    """Inner accuracy, outer budget and (when computed) the theory constants."""
    if cfg.delta_mode == "explicit":
        return cfg.delta, cfg.max_outer, None
    dF, dF0 = cfg.delta_F, cfg.delta_F0
    if dF is None or dF0 is None:
        if problem.params is None:
            raise ValueError("theory delta modes need delta_F and delta_F0 for a generic problem")
        dF_default, dF0_default = default_gap_bounds(problem, x0, y0)
        dF = dF_default if dF is None else dF
        dF0 = dF0_default if dF0 is None else dF0
    consts = compute_constants(problem, cfg, dF, dF0)
    if cfg.delta_mode == "theory_eps":
        return consts.delta_eps, min(consts.K_eps, cfg.max_outer), consts
    return consts.delta_bar_eps, min(consts.K_bar_eps, cfg.max_outer), consts


def _near_ready(problem, cfg: IpgConfig, step_norm: float, delta: float, norm_H: float) -> bool:
    # bound on ||grad f0(xbar) + H^T zbar|| at the exact subproblem solution
    return (cfg.tau + problem.L_f) * (step_norm + norm_H * delta / cfg.tau) <= cfg.eps


def solve(problem, config: IpgConfig, x0=None, y0=None) -> SolveResult:
    """Run outer steps until certified or the budget is spent.

    Without early exit (or when no iterate certifies) the returned point is
    the one following the smallest step, smallest index on ties.  With early
    exit the certifying iterate is returned.
    """
    cfg = config.resolved(problem.L_f)
    if x0 is None:
        x0, y0 = problem.feasible_start()
    state = initial_state(problem, x0, y0)
    delta, limit, consts = resolve_delta(problem, cfg, state.x, state.y)
    ctx = _Context(problem, cfg, delta, state.x, state.y)
    norm_H = consts.norm_stacked if consts else operator_norms(problem.H)["spectral_norm"]

    z1_0 = np.zeros(problem.dim_y)
    z2_0 = np.zeros(problem.dim_z2)
    start_report = audit_SP(problem, state.x, state.y, z1_0, z2_0, cfg.eps, grad=state.grad)
    best = dict(x=state.x, y=state.y, z=np.zeros(problem.dim_y + problem.dim_z2),
                report=start_report, k=-1, step=math.inf,
                anchor_x=state.x, anchor_grad=state.grad)
    trace = []
    total_inner = 0
    exit_reason = "budget"
    certified_point = None

    if cfg.early_exit and start_report.certified:
        limit = 0
        exit_reason = "start_certified"
        certified_point = dict(best)

    for k in range(limit):
        state, info = _step(ctx, state)
        total_inner += info.inner_steps
        rep = info.report
        trace.append({
            "k": k,
            "step_norm": info.step_norm,
            "split_feas": rep.residuals["split_feas"],
            "affine_feas": rep.residuals["affine_feas"],
            "inner_steps": info.inner_steps,
            "cum_grad_calls": state.counter.grad_f0_calls,
            "cum_matvecs": state.counter.matvecs,
            "cum_prox_calls": state.counter.prox_calls,
            "grad_residual": rep.residuals["grad_residual"],
            "subdiff_dist": rep.residuals["subdiff_dist"],
            "z1_norm": float(np.linalg.norm(state.z1)),
            "z2_norm": float(np.linalg.norm(state.z2)),
            "inner_bound": info.inner_bound,
        })
        point = dict(x=state.x, y=state.y, z=state.z, report=rep, k=k, step=info.step_norm,
                     anchor_x=info.anchor_x, anchor_grad=info.anchor_grad)
        if info.step_norm < best["step"]:
            best = point
        if cfg.early_exit and rep.certified:
            if cfg.delta_mode != "theory_near_eps" or _near_ready(
                problem, cfg, info.step_norm, delta, norm_H
            ):
                certified_point = point
                exit_reason = "certified"
                break

    chosen = certified_point if certified_point is not None else best
    z = chosen["z"]
    return SolveResult(
        x=chosen["x"], y=chosen["y"],
        z1=z[: problem.dim_y], z2=z[problem.dim_y :],
        report=chosen["report"],
        trace=trace,
        counter=state.counter,
        certified=chosen["report"].certified,
        k_best=chosen["k"],
        outer_iters=len(trace),
        total_inner_steps=total_inner,
        delta=delta,
        outer_limit=limit,
        anchor_x=chosen["anchor_x"],
        anchor_grad=chosen["anchor_grad"],
        constants=consts,
        exit_reason=exit_reason,
    )


@dataclass
class RecoveryCertificate:
    """Outcome of re-solving one dual problem to a finer accuracy.

    ``bound`` is ``||H|| delta_refine / tau``; it bounds the distance from the
    returned point to the exact subproblem solution.  ``omega`` is the
    measured distance from the solver iterate to the returned point.
    """

    delta_refine: float
    achieved_dist: float
    bound: float
    omega: float
    omega_bound: float
    affine_feas: float


def near_stationary_recovery(problem, result: SolveResult, delta_refine: float,
                             config: IpgConfig, exact_feasibility: bool = True):
    """Approximate the exact subproblem solution behind ``result``'s iterate.

    With ``exact_feasibility`` the constraint multiplier is recomputed from
    ``z1`` by its optimality condition, which makes ``A xbar + b = 0`` hold
    to rounding.  That moves the point by at most ``||Abar|| delta_refine / tau``,
    within the reported bound.
    """
    if not delta_refine > 0:
        raise ValueError(f"delta_refine must be positive, got {delta_refine}")
    cfg = config.resolved(problem.L_f)
    if result.k_best < 0:
        raise ValueError("the result holds no outer step to refine")
    geometry = DualGeometry.from_problem(problem)
    dp = DualProblem(result.anchor_x, result.anchor_grad, cfg.tau, problem.gbar, geometry)
    curvature = cfg.rho if cfg.rho is not None else dp.mu_D
    z, cert = restarted_apg(dp, np.concatenate([result.z1, result.z2]), delta_refine,
                            "adaptive", curvature, max_cycles=cfg.max_inner_cycles)
    if exact_feasibility and problem.dim_z2:
        z = z.copy()
        z1 = z[: problem.dim_y]
        A = problem.A.todense()
        rhs = A @ (problem.Abar.rmatvec(z1) + result.anchor_grad - cfg.tau * result.anchor_x) - cfg.tau * problem.b
        z[problem.dim_y :] = -np.linalg.solve(A @ A.T, rhs)
    x_bar = dp.primal_of(z)
    norm_H = operator_norms(problem.H)["spectral_norm"]
    bound = norm_H * delta_refine / cfg.tau
    certificate = RecoveryCertificate(
        delta_refine=delta_refine,
        achieved_dist=cert.dist_bound,
        bound=bound,
        omega=float(np.linalg.norm(result.x - x_bar)),
        omega_bound=norm_H * result.delta / cfg.tau + bound,
        affine_feas=float(np.linalg.norm(problem.A.matvec(x_bar) + problem.b)),
    )
    return x_bar, z, certificate
