"""Stationarity residuals for the original, split and consensus problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .instance import f0_grad
from .structured import operator_norms

ABS_FLOOR = 1e-12
PROBLEM_KINDS = ("P", "SP", "AP")


@dataclass
class StationarityReport:
    """Named residuals at one candidate point.

    ``certified`` is true iff every residual is at most ``max(epsilon, 1e-12)``.
    ``upper_bound`` marks reports whose residuals over-estimate the exact measure.
    """

    problem_kind: str
    residuals: dict
    epsilon: float
    multipliers: dict = field(default_factory=dict)
    upper_bound: bool = False
    converged: bool = True

    def __post_init__(self):
        if self.problem_kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.problem_kind!r}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def certified(self) -> bool:
        return self.max_residual <= max(self.epsilon, ABS_FLOOR)

    def to_dict(self) -> dict:
        return {
            "problem_kind": self.problem_kind,
            "epsilon": self.epsilon,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "max_residual": float(self.max_residual),
            "certified": self.certified,
            "upper_bound": self.upper_bound,
            "converged": self.converged,
        }


def audit_SP(problem, x, y, z1, z2, eps: float, grad=None) -> StationarityReport:
    """Residuals of the split problem at ``(x, y)`` with multipliers ``(z1, z2)``.

    ``grad`` may carry a precomputed ``grad f0(x)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    z1 = np.asarray(z1, dtype=float).reshape(-1)
    z2 = np.asarray(z2, dtype=float).reshape(-1)
    if grad is None:
        grad = problem.grad_f0(x)
    Ax = problem.A.matvec(x)
    residuals = {
        "subdiff_dist": problem.gbar.subdiff_distance(y, z1),
        "grad_residual": float(
            np.linalg.norm(grad + problem.Abar.rmatvec(z1) + problem.A.rmatvec(z2))
        ),
        "split_feas": float(np.linalg.norm(y - problem.Abar.matvec(x) - problem.bbar)),
        "affine_feas": float(np.linalg.norm(Ax + problem.b)),
    }
    return StationarityReport("SP", residuals, eps, {"z1": z1, "z2": z2})


def _blocks(x, params):
    return np.asarray(x, dtype=float).reshape(params.m, params.bd)


def audit_AP(problem, x, eps: float) -> StationarityReport:
    """Residuals of the consensus problem ``min f0(x) s.t. H x = 0``.

    The projected gradient onto the null space of ``H`` has the closed form
    ``1_m kron (sum_i grad f_i(x_i)) / m``, whose norm is
    ``||sum_i grad f_i(x_i)|| / sqrt(m)``.
    """
    params = problem.params
    x = np.asarray(x, dtype=float).reshape(-1)
    G = f0_grad(x, params).reshape(params.m, params.bd)
    residuals = {
        "consensus_feas": float(np.linalg.norm(problem.H.matvec(x))),
        "projected_grad": float(np.linalg.norm(G.sum(axis=0)) / math.sqrt(params.m)),
    }
    return StationarityReport("AP", residuals, eps)


def block_average(x, params) -> np.ndarray:
    return _blocks(x, params).mean(axis=0)


def block_average_lower_bound(problem, x) -> float:
    """``(sqrt(m) / 2) * || (1/m) sum_i grad f_i(xbar) ||`` with ``xbar`` the block average."""
    params = problem.params
    xbar = block_average(x, params)
    consensus = np.tile(xbar, params.m)
    G = f0_grad(consensus, params).reshape(params.m, params.bd)
    return float(math.sqrt(params.m) / 2 * np.linalg.norm(G.mean(axis=0)))


def small_coordinate_threshold(params) -> float:
    return 150 * math.pi * params.eps / (math.sqrt(params.m) * params.L_f)


def small_coordinate_certificate(problem, x) -> dict:
    """First coordinate of the block average below the activation threshold, if any.

    When one exists the block-average lower bound must exceed ``eps``; a
    failure of that implication raises ``AssertionError``.
    """
    params = problem.params
    xbar = block_average(x, params)
    small = np.flatnonzero(np.abs(xbar) < small_coordinate_threshold(params))
    bound = block_average_lower_bound(problem, x)
    if small.size == 0:
        return {"violating_j": None, "bound": bound}
    j = int(small[0]) + 1
    if not bound > params.eps:
        raise AssertionError(
            f"coordinate {j} of the block average is small but the lower bound {bound} <= eps"
        )
    return {"violating_j": j, "bound": bound}


def _affine_complement(problem):
    """Function projecting onto the orthogonal complement of ``range(A^T)``, and the solve for gamma."""
    M = problem.A.todense()
    if M.shape[0] == 0:
        return (lambda v: v), (lambda v: np.zeros(0))
    Q, R = np.linalg.qr(M.T)

    def project_out(v):
        return v - Q @ (Q.T @ v)

    def gamma_of(v):
        # least-squares multiplier minimizing ||v + A^T gamma||
        return -np.linalg.solve(R, Q.T @ v)

    return project_out, gamma_of


def audit_P_relaxed(
    problem,
    x,
    eps: float,
    gamma=None,
    u=None,
    zero_tol: float = 1e-9,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> StationarityReport:
    """Upper bound on the stationarity measure of the original problem at ``x``.

    Minimizes ``||grad f0(x) + A^T gamma + Abar^T u||`` over ``gamma`` and over
    ``u`` in the subdifferential box of ``gbar`` at ``Abar x + bbar``.  The
    ``gamma`` part is eliminated by projecting onto the complement of
    ``range(A^T)``; the box part runs projected accelerated gradient from the
    supplied ``u``.  Coordinates of ``Abar x + bbar`` with magnitude at most
    ``zero_tol`` (scaled by ``max(1, ||x||_inf)``) are treated as kinks.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    grad = problem.grad_f0(x)
    ybar = problem.Abar.matvec(x) + problem.bbar
    scale = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    lo, hi = problem.gbar.subdiff_box(ybar, zero_tol * scale)
    project_out, gamma_of = _affine_complement(problem)

    def residual_vec(uu):
        return project_out(grad + problem.Abar.rmatvec(uu))

    u0 = np.zeros(problem.dim_y) if u is None else np.asarray(u, dtype=float).reshape(-1)
    u_cur = np.clip(u0, lo, hi)
    candidates = [u_cur]
    if gamma is not None:
        gamma = np.asarray(gamma, dtype=float).reshape(-1)

    lip = operator_norms(problem.Abar)["spectral_norm"] ** 2
    converged = True
    if lip > 0 and np.any(hi > lo):
        v_prev = u_cur.copy()
        w = u_cur.copy()
        t = 1.0
        converged = False
        for _ in range(max_iter):
            r = residual_vec(w)
            g = problem.Abar.matvec(r)
            v = np.clip(w - g / lip, lo, hi)
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            w = v + ((t - 1) / t_next) * (v - v_prev)
            step = np.linalg.norm(v - v_prev)
            v_prev, t = v, t_next
            if step <= tol * max(1.0, np.linalg.norm(v)):
                converged = True
                break
        candidates.append(v_prev)

    norms = [float(np.linalg.norm(residual_vec(c))) for c in candidates]
    best = int(np.argmin(norms))
    u_best = candidates[best]
    gamma_best = gamma_of(grad + problem.Abar.rmatvec(u_best))
    residuals = {
        "stationarity": norms[best],
        "affine_feas": float(np.linalg.norm(problem.A.matvec(x) + problem.b)),
    }
    if gamma is not None:
        supplied = float(
            np.linalg.norm(grad + problem.A.rmatvec(gamma) + problem.Abar.rmatvec(u_cur))
        )
        residuals["stationarity"] = min(residuals["stationarity"], supplied)
    return StationarityReport(
        "P", residuals, eps, {"gamma": gamma_best, "u": u_best}, upper_bound=True, converged=converged
    )
