"""Sampled property suites with independent oracles.

Each check returns a ``PropertyResult``; ``run_suite`` drives all of them for
the ``verify`` command.  Oracles here never call the closed forms they check:
finite differences for gradients, a 1-D convex search for the pairwise prox,
a zooming grid for subdifferential distances and dense eigensolves for the
spectral closed forms.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .audit import audit_AP, block_average_lower_bound
from .instance import (
    PI,
    InstanceParams,
    build_instance,
    f0_grad,
    f0_value,
    grad_f,
    grad_h,
    f,
    h,
    phi,
    phi_prime,
    psi,
    psi_prime,
    suboptimality_bound,
)
from .prox import PairGeometry, ProxSpec, prox_conjugate, prox_pairwise_l1
from .span import (
    GreedySchedule,
    SpanMachine,
    SupportBoundViolation,
    coupling_adjoint_envelope,
    coupling_envelope,
    expansion_limit,
    frontier,
    grad_support_envelope,
    neighbor_envelope,
    pair_envelope,
    replay_ipg,
    run_tracked_A2,
    run_tracked_A3,
    support_of,
)
from .structured import full_chain_gram_eigs, stacked_condition_number

FAULTS = ("negate_grad_branch",)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def to_dict(self) -> dict:
        # wall time is left out so the JSON is reproducible
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _timed(name: str, fn: Callable[[], tuple]) -> PropertyResult:
    start = time.perf_counter()
    passed, detail = fn()
    return PropertyResult(name, bool(passed), detail, time.perf_counter() - start)


def central_difference(fun: Callable, z: np.ndarray, step: float) -> np.ndarray:
    """Coordinate-wise central differences."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = step
        out[j] = (fun(z + e) - fun(z - e)) / (2 * step)
    return out


def _negate_first_link(g: np.ndarray, bd: int) -> np.ndarray:
    # injected defect: flip the sign of every block's first coordinate
    g = np.array(g, dtype=float).reshape(-1, bd)
    g[:, 0] = -g[:, 0]
    return g.reshape(-1)


def check_gradients(params: InstanceParams, points: int = 100, seed: int = 0,
                    rtol: float = 1e-6, fault: Optional[str] = None) -> tuple:
    """Relative error of ``grad h_i``, ``grad f_i`` and ``grad f0`` against central differences."""
    rng = np.random.default_rng(seed)
    params = params.resolved()
    m, bd = params.m, params.bd
    unit = 1.0 / params.arg_scale
    wrap = (lambda g: _negate_first_link(g, bd)) if fault else (lambda g: g)
    gh = lambda i, z, mm: wrap(grad_h(i, z, mm))
    gf = lambda i, z, p: wrap(grad_f(i, z, p))
    g0 = lambda x, p: wrap(f0_grad(x, p))
    worst = 0.0

    def rel(fd, g):
        return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))

    for _ in range(points):
        for i in range(1, m + 1):
            zbar = rng.uniform(-3.0, 3.0, bd)
            worst = max(worst, rel(central_difference(lambda v: h(i, v, m), zbar, 1e-5),
                                   gh(i, zbar, m)))
            z = zbar * unit
            worst = max(worst, rel(central_difference(lambda v: f(i, v, params), z, 1e-5 * unit),
                                   gf(i, z, params)))
        x = rng.uniform(-3.0, 3.0, params.d) * unit
        worst = max(worst, rel(central_difference(lambda v: f0_value(v, params), x, 1e-5 * unit),
                               g0(x, params)))
    return worst <= rtol, f"max relative error {worst:.3e} (tol {rtol:g})"


def check_function_bounds(params: InstanceParams, samples: int = 10_000, seed: int = 0) -> tuple:
    """Range bounds on the chain pieces, gradient and Lipschitz bounds, and the gap bound."""
    rng = np.random.default_rng(seed)
    params = params.resolved()
    m, bd = params.m, params.bd
    u = np.concatenate([rng.uniform(-5, 5, samples), rng.normal(0, 50, samples), [0.0, 1e-9, -1e-9]])
    fails = []
    # beyond |u| ~ 6.06 float64 rounds Psi to exactly 1
    representable = np.abs(u) <= 6
    if not (np.all(psi(u) >= 0) and np.all(psi(u[representable]) < 1) and np.all(psi(u) <= 1)):
        fails.append("0 <= Psi < 1")
    if not (np.all(psi_prime(u) >= 0) and np.all(psi_prime(u) <= math.sqrt(2 / math.e))):
        fails.append("0 <= Psi' <= sqrt(2/e)")
    if not (np.all(phi(u) > 0) and np.all(phi(u) < 4 * PI)):
        fails.append("0 < Phi < 4 pi")
    if not (np.all(phi_prime(u) > 0) and np.all(phi_prime(u) <= 4)):
        fails.append("0 < Phi' <= 4")
    a = rng.uniform(1, 5, samples)
    b = rng.uniform(-1, 1, samples) * (1 - 1e-12)
    if not np.all(psi(a) * phi_prime(b) > 1):
        fails.append("Psi(u) Phi'(v) > 1 for u >= 1, |v| < 1")

    lip_h = lip_f = grad_inf = 0.0
    unit = 1.0 / params.arg_scale
    for k in range(samples):
        i = 1 + k % m
        z1 = rng.uniform(-3, 3, bd)
        z2 = z1 + rng.normal(0, 10 ** rng.uniform(-4, 0), bd)
        g1, g2 = grad_h(i, z1, m), grad_h(i, z2, m)
        grad_inf = max(grad_inf, float(np.abs(g1).max()))
        lip_h = max(lip_h, float(np.linalg.norm(g1 - g2) / np.linalg.norm(z1 - z2)))
        x1, x2 = z1 * unit, z2 * unit
        lip_f = max(lip_f, float(np.linalg.norm(grad_f(i, x1, params) - grad_f(i, x2, params))
                                 / np.linalg.norm(x1 - x2)))
    if not grad_inf < 25 * PI:
        fails.append(f"||grad h_i||_inf = {grad_inf} >= 25 pi")
    if not lip_h <= 75 * PI:
        fails.append(f"Lipschitz(grad h_i) = {lip_h} > 75 pi")
    if not lip_f <= params.L_f:
        fails.append(f"Lipschitz(grad f_i) = {lip_f} > L_f")

    f00 = f0_value(np.zeros(params.d), params)
    sampled_min = min(
        f0_value(rng.uniform(-4, 4, params.d) * unit, params) for _ in range(samples // 10)
    )
    # consensus points along the chain reach far lower values than random ones
    sampled_min = min(sampled_min, f0_value(np.full(params.d, 4 * unit), params),
                      f0_value(np.full(params.d, -4 * unit), params))
    gap = f00 - sampled_min
    if not gap <= suboptimality_bound(params):
        fails.append(f"f0(0) - sampled min = {gap} exceeds the bound")
    detail = (f"grad_inf={grad_inf:.4g}, lip_h={lip_h:.4g}, lip_f={lip_f:.4g}, "
              f"gap={gap:.4g} <= {suboptimality_bound(params):.4g}")
    return not fails, "; ".join(fails) if fails else detail


def _chain_gram_dense(m: int, rows, L_f: float = 1.0) -> np.ndarray:
    J = np.zeros((len(rows), m))
    for r, i in enumerate(rows):
        J[r, i - 1], J[r, i] = -m * L_f, m * L_f
    return J @ J.T


def check_spectral(ms=(6, 12, 24), rtol: float = 1e-9) -> tuple:
    """Closed-form eigenvalues and condition number against dense eigensolves."""
    fails, worst = [], 0.0
    for m in ms:
        dense = np.linalg.eigvalsh(_chain_gram_dense(m, range(1, m)))
        closed = full_chain_gram_eigs(m)
        err = float(np.max(np.abs(dense - closed) / np.abs(dense)))
        worst = max(worst, err)
        kappa_dense = math.sqrt(dense[-1] / dense[0])
        kappa = stacked_condition_number(m)
        worst = max(worst, abs(kappa - kappa_dense) / kappa_dense)
        if not m / 4 <= kappa < m:
            fails.append(f"m/4 <= kappa < m fails for m={m}")
        m1 = 2
        coupled = [j * m1 for j in range(1, m // m1) if j * m1 < m]
        G = _chain_gram_dense(m, coupled)
        if not np.allclose(G, 2 * m**2 * np.eye(len(coupled)), rtol=0, atol=1e-10 * m**2):
            fails.append(f"Abar Abar^T != 2 m^2 L_f^2 I for m={m}")
    if worst > rtol:
        fails.append(f"relative error {worst:.3e} > {rtol:g}")
    return not fails, "; ".join(fails) if fails else f"max relative error {worst:.3e}"


def pair_prox_oracle(a: float, b: float, c: float, iters: int = 200) -> tuple:
    """``argmin 0.5 (u - a)^2 + 0.5 (v - b)^2 + c |u - v|`` by bisection.

    For a fixed gap ``d = u - v`` the best pair is ``((a+b+d)/2, (a+b-d)/2)``,
    leaving the convex scalar problem ``(a - b - d)^2 / 4 + c |d|``.  The
    minimizer is located by bisecting on the sign of its subgradient.
    """
    def slope(d):
        return (d - (a - b)) / 2 + c * math.copysign(1.0, d)

    # zero is optimal when the subdifferential there contains 0
    if abs(a - b) / 2 <= c:
        d = 0.0
    else:
        lo, hi = (0.0, a - b) if a > b else (a - b, 0.0)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if slope(mid) > 0:
                hi = mid
            else:
                lo = mid
        d = 0.5 * (lo + hi)
    s = a + b
    return (s + d) / 2, (s - d) / 2


def subdiff_grid_oracle(y, z, c: float, levels: int = 40, points: int = 21) -> float:
    """Distance from ``z`` to ``c * d||.||_1(y)`` by a zooming grid over the kink coordinates."""
    y, z = np.asarray(y, float), np.asarray(z, float)
    fixed = y != 0
    lo = np.where(fixed, c * np.sign(y), -c)
    hi = np.where(fixed, c * np.sign(y), c)
    best_u = 0.5 * (lo + hi)
    for _ in range(levels):
        axes = [np.linspace(l, u, points) for l, u in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, y.size)
        dist = np.linalg.norm(grid - z, axis=1)
        best_u = grid[int(np.argmin(dist))]
        width = (hi - lo) / (points - 1)
        lo = np.maximum(np.where(fixed, lo, -c), best_u - width)
        hi = np.minimum(np.where(fixed, hi, c), best_u + width)
    return float(np.linalg.norm(best_u - z))


def check_prox(samples: int = 200, seed: int = 0, m: int = 6, bd: int = 5) -> tuple:
    """Pairwise prox, Moreau identity and subdifferential distance against oracles."""
    rng = np.random.default_rng(seed)
    geometry = PairGeometry(m, bd, tuple(range(2, m, 2)))
    worst_prox = worst_moreau = worst_sub = 0.0
    spec = ProxSpec("weighted_l1", weight=0.7)
    for _ in range(samples):
        x = rng.normal(0, 1, m * bd)
        c = float(rng.uniform(0.01, 1.5))
        got = prox_pairwise_l1(x, c, geometry).reshape(m, bd)
        X = x.reshape(m, bd)
        ref = X.copy()
        for i in geometry.pairs:
            for j in range(bd):
                ref[i - 1, j], ref[i, j] = pair_prox_oracle(X[i - 1, j], X[i, j], c)
        worst_prox = max(worst_prox, float(np.abs(got - ref).max()))

        zz = rng.normal(0, 1.5, 12)
        eta = float(rng.uniform(0.1, 5))
        worst_moreau = max(worst_moreau, float(np.abs(
            spec.conj_prox(zz, eta) - prox_conjugate(spec.prox, zz, eta)).max()))

        y3 = rng.normal(0, 1, 3) * (rng.random(3) < 0.5)
        z3 = rng.normal(0, 1, 3)
        worst_sub = max(worst_sub, abs(spec.subdiff_distance(y3, z3)
                                       - subdiff_grid_oracle(y3, z3, spec.weight)))
    ok = worst_prox <= 1e-8 and worst_moreau <= 1e-12 and worst_sub <= 1e-6
    return ok, (f"prox {worst_prox:.2e} (tol 1e-8), Moreau {worst_moreau:.2e} (tol 1e-12), "
                f"subdiff {worst_sub:.2e} (tol 1e-6)")


def _sparse_prefix_vector(rng, blocks: int, bd: int, jbar: int) -> np.ndarray:
    """Random blocks supported in ``{1..jbar-1}`` with random extra zeros."""
    V = np.zeros((blocks, bd))
    k = jbar - 1
    if k > 0:
        V[:, :k] = rng.normal(0, 2, (blocks, k)) * (rng.random((blocks, k)) < 0.7)
    return V.reshape(-1)


def check_support_lemmas(params: InstanceParams, samples: int = 100, seed: int = 0) -> tuple:
    """Gradient support table and every propagation rule, exhaustive over ``jbar``."""
    rng = np.random.default_rng(seed)
    params = params.resolved()
    m, bd, m1 = params.m, params.bd, params.m1
    yb = 3 * params.m2 - 1
    A, Abar = params.constraint_operator(), params.coupling_operator()
    g = ProxSpec("pairwise_l1", weight=params.gbar_weight * params.op_scale,
                 geometry=PairGeometry(m, bd, params.coupled_rows))
    gbar = ProxSpec("weighted_l1", weight=params.gbar_weight)
    coupled = frozenset(params.coupled_rows)
    unit = 1.0 / params.arg_scale
    fails = []
    checks = 0

    def within(name, got, env):
        nonlocal checks
        checks += 1
        for idx, (s, e) in enumerate(zip(got, env), start=1):
            if not s <= e:
                fails.append(f"{name}: block {idx} {sorted(s)} not in {sorted(e)}")
                return

    for jbar in range(1, bd + 1):
        for _ in range(samples):
            x = _sparse_prefix_vector(rng, m, bd, jbar) * unit
            xs = support_of(x, bd)
            gx = support_of(f0_grad(x, params), bd)
            within(f"gradient table jbar={jbar}", gx,
                   [grad_support_envelope(i, jbar, m, bd) for i in range(1, m + 1)])
            x_any = rng.normal(0, 1, (m, bd)) * (rng.random((m, bd)) < 0.4)
            x_any = x_any.reshape(-1)
            sa = support_of(x_any, bd)
            nb = [neighbor_envelope(sa, i) for i in range(1, m + 1)]
            within("A^T A x", support_of(A.rmatvec(A.matvec(x_any)), bd), nb)
            within("Abar^T Abar x", support_of(Abar.rmatvec(Abar.matvec(x_any)), bd), nb)
            mix = rng.normal(size=2)
            within("span(A^T A x, Abar^T Abar x)", support_of(
                mix[0] * A.rmatvec(A.matvec(x_any)) + mix[1] * Abar.rmatvec(Abar.matvec(x_any)), bd), nb)
            eta = float(rng.uniform(0.01, 2.0))
            within("prox g", support_of(g.prox(x_any, eta), bd),
                   [pair_envelope(sa, i, coupled) for i in range(1, m + 1)])
            within("prox g (three neighbors)", support_of(g.prox(x_any, eta), bd), nb)
            y = _sparse_prefix_vector(rng, yb, bd, jbar)
            ys = support_of(y, bd)
            within("Abar^T y", support_of(Abar.rmatvec(y), bd),
                   [coupling_adjoint_envelope(ys, i, m1) for i in range(1, m + 1)])
            within("Abar x", support_of(Abar.matvec(x_any), bd),
                   [coupling_envelope(sa, j, m1) for j in range(1, yb + 1)])
            checks += 1
            if support_of(Abar.matvec(Abar.rmatvec(y)), bd) != ys:
                fails.append("Abar Abar^T y changes the support")
            within("prox gbar", support_of(gbar.prox(y, eta), bd), ys)
            if frontier(xs) > jbar - 1:
                fails.append("sampler broke its own prefix")
    return not fails, (f"{checks} inclusions checked" if not fails else "; ".join(fails[:5]))


def check_stationarity_lemmas(params: InstanceParams, samples: int = 200, seed: int = 0) -> tuple:
    """A small block-average coordinate forces a large averaged gradient, and the AP residuals dominate it."""
    rng = np.random.default_rng(seed)
    params = params.resolved()
    m, bd = params.m, params.bd
    unit = 1.0 / params.arg_scale
    fails = []
    problem = build_instance(params, check_gradient=False)
    for _ in range(samples):
        z = rng.uniform(-4, 4, bd) * unit
        j = int(rng.integers(bd))
        z[j] = rng.uniform(-0.999, 0.999) * unit
        avg = sum(grad_f(i, z, params) for i in range(1, m + 1)) / m
        if not np.linalg.norm(avg) > 2 * params.eps / math.sqrt(m):
            fails.append(f"averaged gradient too small at small coordinate {j + 1}")
        x = (np.tile(z, m) + rng.normal(0, 0.1, params.d) * unit)
        rep = audit_AP(problem, x, params.eps)
        if not max(rep.residuals.values()) >= block_average_lower_bound(problem, x) * (1 - 1e-12):
            fails.append("AP residuals below the block-average bound")
    return not fails, ("all samples consistent" if not fails else "; ".join(fails[:5]))


def check_span_bounds(params: InstanceParams, seed: int = 0, outer: int = 3) -> tuple:
    """Greedy runs under both models and the solver replay stay within the expansion bounds."""
    params = params.resolved()
    m, bd = params.m, params.bd
    details = []
    try:
        for model, runner in (("A2", run_tracked_A2), ("A3", run_tracked_A3)):
            trace = runner(params, GreedySchedule(seed), T=4 + m * (bd - 2), stop_at_full=True)
            act = trace.activation_times()
            q = 6 if model == "A2" else 3
            for j in range(2, bd + 1):
                if act[j - 1] is not None and not act[j - 1] > 1 + m * (j - 2) // q:
                    return False, f"{model}: coordinate {j} active at t={act[j - 1]}"
            details.append(f"{model} activation {act}")
        trace, _, _ = replay_ipg(params, tau=2 * params.L_f, sigma=params.L_f, outer_iters=outer)
        details.append(f"solver replay {trace.T} iterations, {len(trace.violations)} violations")
        if trace.violations:
            return False, "; ".join(details)
    except SupportBoundViolation as exc:
        return False, str(exc)
    return True, "; ".join(details)


def run_suite(seed: int = 0, fault: Optional[str] = None, quick: bool = False) -> list:
    """All property checks; ``fault`` injects a known defect into the gradient check."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    small = InstanceParams(2, 1, 5, 0.1)
    span_params = InstanceParams(2, 2, 7, 0.1)
    n = 20 if quick else 100
    return [
        _timed("gradient finite differences",
               lambda: check_gradients(small, points=n, seed=seed, fault=fault)),
        _timed("function and Lipschitz bounds",
               lambda: check_function_bounds(small, samples=1000 if quick else 10_000, seed=seed)),
        _timed("spectral closed forms", lambda: check_spectral()),
        _timed("prox oracles", lambda: check_prox(samples=50 if quick else 200, seed=seed)),
        _timed("support propagation", lambda: check_support_lemmas(small, samples=n, seed=seed)),
        _timed("stationarity lower bounds",
               lambda: check_stationarity_lemmas(small, samples=n, seed=seed)),
        _timed("span expansion bounds", lambda: check_span_bounds(span_params, seed=seed)),
    ]
