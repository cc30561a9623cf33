"""Linear-span oracle machines with exact per-block support tracking.

A machine keeps the iterates of a first-order method run on the worst-case
instance from the zero start.  Each new iterate is built only from oracle
outputs at earlier iterates, so the span rules hold by construction; any
reference to an unavailable term raises ``SpanRuleViolation``.  Supports are
recorded with exact-zero semantics and checked against the support-expansion
bounds and the per-oracle propagation rules.

Two models are provided:

``A2``  iterates ``x`` built from ``A^T b`` and, at earlier iterates, ``x``,
        ``grad f0(x)``, ``A^T A x``, then optionally one ``prox_{eta g}``.
``A3``  iterates ``(x, y)`` of the split problem; ``x`` from ``A^T b``,
        ``Abar^T bbar`` and ``x``, ``grad f0(x)``, ``A^T A x``,
        ``Abar^T Abar x``, ``Abar^T y``; ``y`` from ``bbar`` and ``y``,
        ``Abar Abar^T y``, ``Abar x``, then optionally one ``prox_{eta gbar}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .counters import OracleCounter
from .dual import DualGeometry, cycle_length
from .instance import InstanceParams, block_group, build_instance, f0_grad, suboptimality_bound
from .prox import PairGeometry, ProxSpec
from .structured import BlockVector, stacked_condition_number

__all__ = [
    "OracleCounter",
    "SpanRuleViolation",
    "SupportBoundViolation",
    "SupportTrace",
    "SpanStep",
    "SpanMachine",
    "GreedySchedule",
    "ProximalGradientSchedule",
    "PenaltySchedule",
    "support_of",
    "frontier",
    "expansion_limit",
    "grad_support_envelope",
    "run_tracked_A2",
    "run_tracked_A3",
    "replay_ipg",
    "lower_bound_episode",
]

MODELS = ("A2", "A3")
X_KINDS = {
    "A2": ("Atb", "x", "grad", "AtAx"),
    "A3": ("Atb", "Abartbbar", "x", "grad", "AtAx", "AbartAbarx", "Abarty"),
}
Y_KINDS = ("bbar", "y", "AbarAbarty", "Abarx")
CONSTANT_KINDS = ("Atb", "Abartbbar", "bbar")
# oracle cost of one evaluation of each term
TERM_COST = {
    "Atb": {"At_matvecs": 1},
    "Abartbbar": {"Abart_matvecs": 1},
    "bbar": {},
    "x": {},
    "y": {},
    "grad": {"grad_f0_calls": 1},
    "AtAx": {"A_matvecs": 1, "At_matvecs": 1},
    "AbartAbarx": {"Abar_matvecs": 1, "Abart_matvecs": 1},
    "Abarty": {"Abart_matvecs": 1},
    "AbarAbarty": {"Abart_matvecs": 1, "Abar_matvecs": 1},
    "Abarx": {"Abar_matvecs": 1},
}
# divisor q in the expansion bound t <= 1 + m (jbar - 2) / q
EXPANSION_DIVISOR = {"A2": 6, "A3": 3}


class SpanRuleViolation(ValueError):
    """A schedule referenced a term the span model does not allow."""

    def __init__(self, rule: str, message: str):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule


class SupportBoundViolation(AssertionError):
    """A tracked run broke a support-expansion bound or a propagation rule."""


def support_of(v, bd: Optional[int] = None, tol: float = 0.0) -> list:
    """Per-block sets of 1-based coordinates ``j`` with ``|v_ij| > tol``."""
    if tol < 0:
        raise ValueError(f"tol must be non-negative, got {tol}")
    if isinstance(v, BlockVector):
        B = v.blocks()
    else:
        if bd is None:
            raise ValueError("bd is required for plain arrays")
        B = np.asarray(v, dtype=float).reshape(-1, bd)
    return [frozenset(int(j) + 1 for j in np.flatnonzero(np.abs(row) > tol)) for row in B]


def frontier(supports: Sequence) -> int:
    """Largest coordinate present in any block, 0 when all are empty."""
    return max((max(s) for s in supports if s), default=0)


def expansion_limit(t: int, m: int, bd: int, model: str) -> Optional[int]:
    """Largest coordinate allowed at iteration ``t``, or ``None`` if unconstrained.

    The bound ``supp subset {1..jbar-1}`` applies to every ``jbar`` in
    ``2..bd`` with ``t <= 1 + m (jbar - 2) / q``; the smallest such ``jbar``
    is ``2 + ceil(q (t - 1) / m)``.
    """
    if t < 1:
        return None
    q = EXPANSION_DIVISOR[model]
    jbar = 2 + -(-(q * (t - 1)) // m)
    return jbar - 1 if jbar <= bd else None


def _prefix(k: int, bd: int) -> frozenset:
    return frozenset(range(1, min(k, bd) + 1))


def grad_support_envelope(i: int, jbar: int, m: int, bd: int) -> frozenset:
    """Coordinates where ``grad f_i(z)`` may be nonzero when ``supp(z)`` lies in ``{1..jbar-1}``."""
    if jbar < 1:
        raise ValueError(f"jbar must be at least 1, got {jbar}")
    if jbar == 1:
        return _prefix(1, bd)
    group = block_group(i, m)
    grows = group == 1 if jbar % 2 == 0 else group == 3
    return _prefix(jbar if grows else jbar - 1, bd)


def neighbor_envelope(supports: Sequence, i: int) -> frozenset:
    """Union of the supports of blocks ``i-1, i, i+1`` (1-based, clipped)."""
    lo, hi = max(i - 1, 1), min(i + 1, len(supports))
    return frozenset().union(*supports[lo - 1 : hi])


def pair_envelope(supports: Sequence, i: int, coupled: frozenset) -> frozenset:
    """Support allowed for block ``i`` of ``prox_{eta g}``: its own plus its coupled partner's."""
    out = set(supports[i - 1])
    if i in coupled:
        out |= supports[i]
    if i - 1 in coupled:
        out |= supports[i - 2]
    return frozenset(out)


def coupling_adjoint_envelope(y_supports: Sequence, i: int, m1: int) -> frozenset:
    """Support allowed for block ``i`` of ``Abar^T y``."""
    if i % m1 == 0 and i // m1 <= len(y_supports):
        return y_supports[i // m1 - 1]
    if (i - 1) % m1 == 0 and 1 <= (i - 1) // m1 <= len(y_supports):
        return y_supports[(i - 1) // m1 - 1]
    return frozenset()


def coupling_envelope(x_supports: Sequence, j: int, m1: int) -> frozenset:
    """Support allowed for block ``j`` of ``Abar x``."""
    return x_supports[j * m1 - 1] | x_supports[j * m1]


@dataclass
class SupportTrace:
    """Per-iteration supports of a tracked run.

    ``per_t`` holds ``(t, x_supports, y_supports)``; ``y_supports`` is
    ``None`` under ``A2``.
    """

    model: str
    m: int
    bd: int
    y_blocks: int = 0
    per_t: list = field(default_factory=list)
    oracle_counts: OracleCounter = field(default_factory=OracleCounter)
    violations: list = field(default_factory=list)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown span model {self.model!r}; expected one of {MODELS}")

    def record(self, t: int, x_supports, y_supports=None) -> None:
        if self.per_t and t <= self.per_t[-1][0]:
            raise ValueError(f"iteration {t} does not follow {self.per_t[-1][0]}")
        for s in list(x_supports) + list(y_supports or []):
            if s and not (min(s) >= 1 and max(s) <= self.bd):
                raise ValueError(f"support {sorted(s)} outside 1..{self.bd}")
        ys = None if y_supports is None else tuple(y_supports)
        self.per_t.append((t, tuple(x_supports), ys))

    @property
    def T(self) -> int:
        return self.per_t[-1][0] if self.per_t else 0

    def activation_times(self) -> list:
        """First iteration at which each coordinate appears in any block; ``None`` if never."""
        first = [None] * self.bd
        for t, xs, ys in self.per_t:
            for s in list(xs) + list(ys or ()):
                for j in s:
                    if first[j - 1] is None:
                        first[j - 1] = t
        return first

    def to_json(self) -> dict:
        def masks(sets):
            return [sum(1 << (j - 1) for j in s) for s in sets]

        return {
            "model": self.model,
            "m": self.m,
            "bd": self.bd,
            "y_blocks": self.y_blocks,
            "per_t": [
                {"t": t, "x": masks(xs), "y": None if ys is None else masks(ys)}
                for t, xs, ys in self.per_t
            ],
            "oracle_counts": self.oracle_counts.to_dict(),
            "violations": list(self.violations),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SupportTrace":
        def sets(masks):
            return [frozenset(j + 1 for j in range(data["bd"]) if mask >> j & 1) for mask in masks]

        trace = cls(data["model"], data["m"], data["bd"], data.get("y_blocks", 0),
                    oracle_counts=OracleCounter(**data["oracle_counts"]),
                    violations=list(data.get("violations", [])))
        for row in data["per_t"]:
            trace.record(row["t"], sets(row["x"]), None if row["y"] is None else sets(row["y"]))
        return trace

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["coordinate", "first_activation_t"])
        for j, t in enumerate(self.activation_times(), start=1):
            writer.writerow([j, "" if t is None else t])
        return buf.getvalue()


@dataclass
class SpanStep:
    """One iteration of a span schedule.

    Terms map ``(kind, s)`` to coefficients, with ``s`` an earlier iteration
    (``None`` for the constant terms).  The prox side (``x`` under ``A2``,
    ``y`` under ``A3``) becomes ``xi_coef * xi + zeta_coef * prox_{eta .}(xi)``
    with ``xi`` its term combination.  ``*_normalize`` rescales the new
    iterate so its smallest nonzero magnitude equals the given value.
    """

    x_terms: dict
    y_terms: Optional[dict] = None
    eta: Optional[float] = None
    xi_coef: float = 1.0
    zeta_coef: float = 0.0
    x_normalize: Optional[float] = None
    y_normalize: Optional[float] = None


def _normalize(v: np.ndarray, target: Optional[float]) -> np.ndarray:
    if target is None:
        return v
    nz = np.abs(v[v != 0])
    return v if nz.size == 0 else v * (target / nz.min())


class SpanMachine:
    """Executes span steps on the worst-case instance from the zero start."""

    def __init__(self, params: InstanceParams, model: str = "A2", check: bool = True):
        if model not in MODELS:
            raise ValueError(f"unknown span model {model!r}; expected one of {MODELS}")
        self.params = params = params.resolved()
        self.model = model
        self.check = check
        self.m, self.bd, self.m1 = params.m, params.bd, params.m1
        self.A = params.constraint_operator()
        self.Abar = params.coupling_operator()
        self.b = np.zeros(params.n)
        self.bbar = np.zeros(params.nbar)
        self.coupled = frozenset(params.coupled_rows)
        self.gbar = ProxSpec("weighted_l1", weight=params.gbar_weight)
        # g(x) = gbar(Abar x) couples x_i and x_{i+1} for each coupled row i
        self.g = ProxSpec(
            "pairwise_l1",
            weight=params.gbar_weight * params.op_scale,
            geometry=PairGeometry(params.m, params.bd, params.coupled_rows),
        )
        self.y_blocks = 3 * params.m2 - 1
        self.xs = [np.zeros(params.d)]
        self.ys = [np.zeros(params.nbar)] if model == "A3" else None
        self.counter = OracleCounter()
        self._cache = {}
        self.trace = SupportTrace(model, self.m, self.bd, self.y_blocks if model == "A3" else 0,
                                  oracle_counts=self.counter)
        self.trace.record(0, self._xsup(self.xs[0]), self._ysup(self.ys[0]) if self.ys else None)

    @property
    def t(self) -> int:
        """Index of the iterate the next ``advance`` builds."""
        return len(self.xs)

    def x(self, s: int) -> np.ndarray:
        return self.xs[s]

    def y(self, s: int) -> np.ndarray:
        return self.ys[s]

    def _xsup(self, v):
        return support_of(v, self.bd)

    def _ysup(self, v):
        return support_of(v, self.bd)

    def kinds(self, side: str) -> tuple:
        if side == "x":
            return X_KINDS[self.model]
        if side == "y" and self.model == "A3":
            return Y_KINDS
        raise SpanRuleViolation("model", f"model {self.model} has no {side!r} iterates")

    def available_terms(self, side: str) -> list:
        """All terms a step at the current iteration may use on ``side``."""
        out = []
        for kind in self.kinds(side):
            if kind in CONSTANT_KINDS:
                out.append((kind, None))
            else:
                out.extend((kind, s) for s in range(self.t))
        return out

    def _validate(self, key, side: str):
        if isinstance(key, str):
            key = (key, None)
        kind, s = key
        if kind not in self.kinds(side):
            raise SpanRuleViolation(
                f"{self.model}-{side}-terms",
                f"{kind!r} is not an oracle output usable for {side} under {self.model}",
            )
        if kind in CONSTANT_KINDS:
            if s is not None:
                raise SpanRuleViolation("constant-term", f"{kind!r} takes no iteration index")
            return kind, None
        if not isinstance(s, (int, np.integer)) or not 0 <= s < self.t:
            raise SpanRuleViolation(
                "causality",
                f"term ({kind!r}, {s}) is not available at iteration {self.t}; "
                f"only iterations 0..{self.t - 1} may be used",
            )
        return kind, int(s)

    def _violate(self, message: str) -> None:
        self.trace.violations.append(message)
        if self.check:
            raise SupportBoundViolation(message)

    def _subset_check(self, name: str, result, envelopes) -> None:
        got = self._xsup(result)
        for idx, (have, allowed) in enumerate(zip(got, envelopes), start=1):
            if not have <= allowed:
                self._violate(
                    f"{name}: block {idx} support {sorted(have)} not within {sorted(allowed)}"
                )

    def term(self, key, side: str) -> np.ndarray:
        kind, s = self._validate(key, side)
        cached = self._cache.get((kind, s))
        if cached is not None:
            return cached
        val = self._evaluate(kind, s)
        self.counter.add(**TERM_COST[kind])
        self._cache[(kind, s)] = val
        return val

    def _evaluate(self, kind: str, s):
        if kind == "Atb":
            return self.A.rmatvec(self.b)
        if kind == "Abartbbar":
            return self.Abar.rmatvec(self.bbar)
        if kind == "bbar":
            return self.bbar.copy()
        if kind == "x":
            return self.xs[s]
        if kind == "y":
            return self.ys[s]
        if kind in ("grad", "AtAx", "AbartAbarx", "Abarx"):
            v = self.xs[s]
            sup = self._xsup(v)
            if kind == "grad":
                out = f0_grad(v, self.params)
                env = [grad_support_envelope(i, frontier([sup[i - 1]]) + 1, self.m, self.bd)
                       for i in range(1, self.m + 1)]
                self._subset_check("gradient support table", out, env)
                return out
            if kind == "Abarx":
                out = self.Abar.matvec(v)
                env = [coupling_envelope(sup, j, self.m1) for j in range(1, self.y_blocks + 1)]
                self._subset_check("Abar x propagation", out, env)
                return out
            op = self.A if kind == "AtAx" else self.Abar
            out = op.rmatvec(op.matvec(v))
            env = [neighbor_envelope(sup, i) for i in range(1, self.m + 1)]
            self._subset_check(f"{kind} neighbor propagation", out, env)
            return out
        v = self.ys[s]
        ysup = self._ysup(v)
        if kind == "Abarty":
            out = self.Abar.rmatvec(v)
            env = [coupling_adjoint_envelope(ysup, i, self.m1) for i in range(1, self.m + 1)]
            self._subset_check("Abar^T y propagation", out, env)
            return out
        out = self.Abar.matvec(self.Abar.rmatvec(v))
        if self._ysup(out) != ysup:
            self._violate("Abar Abar^T y changed the support of y")
        return out

    def combine(self, terms: Optional[dict], side: str) -> np.ndarray:
        size = self.params.d if side == "x" else self.params.nbar
        out = np.zeros(size)
        for key, coef in (terms or {}).items():
            vec = self.term(key, side)
            if coef != 0:
                out = out + coef * vec
        return out

    def _prox(self, xi: np.ndarray, eta: Optional[float], side: str) -> np.ndarray:
        if eta is None or not eta > 0:
            raise SpanRuleViolation("prox-step", f"a prox term needs eta > 0, got {eta}")
        sup = self._xsup(xi)
        if side == "x":
            out = self.g.prox(xi, eta)
            self.counter.add(prox_g_calls=1)
            env = [pair_envelope(sup, i, self.coupled) for i in range(1, self.m + 1)]
            self._subset_check("prox of g propagation", out, env)
        else:
            out = self.gbar.prox(xi, eta)
            self.counter.add(prox_gbar_calls=1)
            self._subset_check("prox of gbar propagation", out, sup)
        return out

    def advance(self, step: SpanStep) -> int:
        """Build the next iterate from ``step``; returns its index."""
        t = self.t
        prox_side = "x" if self.model == "A2" else "y"
        if self.model == "A2" and step.y_terms:
            raise SpanRuleViolation("model", "A2 steps have no y iterate")
        x = self.combine(step.x_terms, "x")
        y = self.combine(step.y_terms, "y") if self.model == "A3" else None
        xi = x if prox_side == "x" else y
        new = step.xi_coef * xi if step.xi_coef != 0 else np.zeros_like(xi)
        if step.zeta_coef != 0:
            new = new + step.zeta_coef * self._prox(xi, step.eta, prox_side)
        if prox_side == "x":
            x = new
        else:
            y = new
        x = _normalize(x, step.x_normalize)
        self.xs.append(x)
        xsup = self._xsup(x)
        ysup = None
        if y is not None:
            y = _normalize(y, step.y_normalize)
            self.ys.append(y)
            ysup = self._ysup(y)
        self.trace.record(t, xsup, ysup)
        self._check_expansion(t, xsup, ysup)
        return t

    def _check_expansion(self, t: int, xsup, ysup) -> None:
        limit = expansion_limit(t, self.m, self.bd, self.model)
        if limit is None:
            return
        for name, sups in (("x", xsup), ("y", ysup or [])):
            top = frontier(sups)
            if top > limit:
                self._violate(
                    f"{self.model} expansion bound: coordinate {top} in a {name} block "
                    f"at t={t}, only 1..{limit} allowed"
                )


class GreedySchedule:
    """Random dense combinations of every available term, rescaled to activate all links.

    Each iterate is rescaled so its smallest nonzero entry sits at the
    activation threshold ``150 pi eps / (sqrt(m) L_f)``, so every nonzero
    coordinate switches on the next link of the chain in the gradient.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, machine: SpanMachine) -> SpanStep:
        unit = 1.0 / machine.params.arg_scale
        coefs = lambda side: {k: float(self.rng.normal()) for k in machine.available_terms(side)}
        a, c = self.rng.uniform(0.5, 1.5, size=2) * self.rng.choice([-1.0, 1.0], size=2)
        if machine.model == "A2":
            eta = unit * self.rng.uniform(0.2, 1.0) / machine.g.weight
            return SpanStep(coefs("x"), eta=eta, xi_coef=a, zeta_coef=c, x_normalize=unit)
        eta = unit * self.rng.uniform(0.2, 1.0) / machine.gbar.weight
        return SpanStep(coefs("x"), coefs("y"), eta=eta, xi_coef=a, zeta_coef=c,
                        x_normalize=unit, y_normalize=unit)


class ProximalGradientSchedule:
    """Proximal gradient on ``f0 + g + (rho/2)||A x||^2`` with projection sweeps.

    Each gradient step is followed by ``sweeps`` iterations of
    ``x <- x - A^T A x / ||A||^2`` that push the iterate toward ``A x = 0``.
    """

    def __init__(self, rho: float = 1.0, sweeps: int = 2, eta: Optional[float] = None):
        if rho < 0 or sweeps < 0:
            raise ValueError("rho and sweeps must be non-negative")
        self.rho, self.sweeps, self.eta = rho, sweeps, eta
        self._phase = 0

    def __call__(self, machine: SpanMachine) -> SpanStep:
        s = machine.t - 1
        norm2 = machine.params.norm_A() ** 2
        if self._phase == 0:
            eta = self.eta or 1.0 / (machine.params.L_f + self.rho * norm2)
            terms = {("x", s): 1.0, ("grad", s): -eta, ("AtAx", s): -eta * self.rho}
            step = SpanStep(terms, eta=eta, xi_coef=0.0, zeta_coef=1.0)
        else:
            step = SpanStep({("x", s): 1.0, ("AtAx", s): -1.0 / norm2})
        self._phase = (self._phase + 1) % (self.sweeps + 1)
        return step


class PenaltySchedule:
    """Alternating penalty steps for the split problem.

    ``x`` takes a gradient step on ``f0 + (rho/2)(||A x||^2 + ||Abar x - y||^2)``
    and ``y`` becomes ``prox_{gbar/rho}(Abar x)`` at the previous ``x``.
    """

    def __init__(self, rho: float = 1.0, eta: Optional[float] = None):
        self.rho, self.eta = rho, eta

    def __call__(self, machine: SpanMachine) -> SpanStep:
        s = machine.t - 1
        p = machine.params
        eta = self.eta or 1.0 / (p.L_f + self.rho * 4 * p.op_scale**2)
        x_terms = {
            ("x", s): 1.0,
            ("grad", s): -eta,
            ("AtAx", s): -eta * self.rho,
            ("AbartAbarx", s): -eta * self.rho,
            ("Abarty", s): eta * self.rho,
        }
        return SpanStep(x_terms, {("Abarx", s): 1.0}, eta=1.0 / self.rho, xi_coef=0.0, zeta_coef=1.0)


def _run(params, model, schedule, T, check, stop_at_full):
    machine = SpanMachine(params, model, check)
    steps = list(schedule) if isinstance(schedule, (list, tuple)) else None
    total = len(steps) if steps is not None and T is None else T
    if total is None:
        raise ValueError("T is required for callable schedules")
    for idx in range(total):
        step = steps[idx] if steps is not None else schedule(machine)
        machine.advance(step)
        if stop_at_full and machine.trace.activation_times()[-1] is not None:
            break
    return machine.trace


def run_tracked_A2(params: InstanceParams, schedule=None, T: Optional[int] = None,
                   check: bool = True, stop_at_full: bool = False) -> SupportTrace:
    """Run an ``A2`` schedule for ``T`` iterations and return its support trace.

    ``schedule`` is a list of ``SpanStep`` or a callable ``machine -> SpanStep``;
    it defaults to ``ProximalGradientSchedule``.  With ``check`` the first
    bound or propagation failure raises ``SupportBoundViolation``.
    """
    return _run(params, "A2", schedule or ProximalGradientSchedule(), T, check, stop_at_full)


def run_tracked_A3(params: InstanceParams, schedule=None, T: Optional[int] = None,
                   check: bool = True, stop_at_full: bool = False) -> SupportTrace:
    """``A3`` counterpart of ``run_tracked_A2``; defaults to ``PenaltySchedule``."""
    return _run(params, "A3", schedule or PenaltySchedule(), T, check, stop_at_full)


def _scaled(terms: dict, kind: str, factor: float) -> dict:
    return {(kind, s): factor * c for s, c in terms.items()}


def _merge(*parts: dict) -> dict:
    out = {}
    for part in parts:
        for key, c in part.items():
            out[key] = out.get(key, 0.0) + c
    return out


def replay_ipg(params: InstanceParams, tau: float, sigma: float, outer_iters: int,
               cycles: int = 2, cycle_len: Optional[int] = None, check: bool = True):
    """Run the inexact proximal gradient method with restarted APG inside an ``A3`` machine.

    The dual iterate is carried as ``z1`` (a ``y`` iterate) and ``A^T z2``
    (an ``x`` iterate); ``z2`` itself is never formed.  Each APG step takes
    two machine iterations and each outer update two more.  The inner start
    is ``(y0, A x0)`` and every inner solve runs ``cycles`` restarted cycles
    of ``cycle_len`` steps (default: the strongly convex cycle length).

    Returns ``(trace, xs, ys)`` with the outer iterates ``x^(k), y^(k)``.
    """
    machine = SpanMachine(params, "A3", check)
    problem = build_instance(machine.params, check_gradient=False)
    geometry = DualGeometry.from_problem(problem)
    L = geometry.lambda_max / tau
    if cycle_len is None:
        cycle_len = cycle_length(L, geometry.lambda_min / tau)

    def hold_y():
        return {("y", machine.t - 1): 1.0}

    u0 = machine.advance(SpanStep({("AtAx", 0): 1.0}, hold_y()))
    xk, yk = 0, 0
    xs, ys = [machine.x(0)], [machine.y(0)]
    for _ in range(outer_iters):
        gk = machine.advance(SpanStep({("grad", xk): 1.0}, hold_y()))
        z1, u = {0: 1.0}, {u0: 1.0}
        for _ in range(cycles):
            z1h, uh, alpha = dict(z1), dict(u), 1.0
            for _ in range(cycle_len):
                p = machine.advance(SpanStep(_scaled(z1h, "Abarty", 1.0), hold_y()))
                r = _merge({p: 1.0, gk: 1.0, xk: -tau}, uh)
                x_terms = _merge(_scaled(uh, "x", 1.0), _scaled(r, "AtAx", -1.0 / (tau * L)))
                y_terms = _merge(_scaled(z1h, "y", L), _scaled(r, "Abarx", -1.0 / tau))
                idx = machine.advance(SpanStep(x_terms, y_terms, eta=L,
                                               xi_coef=1.0 / L, zeta_coef=-1.0 / L))
                alpha_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha))
                mom = (alpha - 1.0) / alpha_next
                z1h = _merge({idx: 1.0 + mom}, {s: -mom * c for s, c in z1.items()})
                uh = _merge({idx: 1.0 + mom}, {s: -mom * c for s, c in u.items()})
                z1, u, alpha = {idx: 1.0}, {idx: 1.0}, alpha_next
        (zi,) = z1
        (ui,) = u
        x_terms = {("x", xk): 1.0, ("x", ui): -1.0 / tau, ("Abarty", zi): -1.0 / tau,
                   ("x", gk): -1.0 / tau}
        xn = machine.advance(SpanStep(x_terms, hold_y()))
        yn = machine.advance(SpanStep({("x", xn): 1.0},
                                      {("y", zi): 1.0 / sigma, ("Abarx", xn): 1.0},
                                      eta=1.0 / sigma, xi_coef=0.0, zeta_coef=1.0))
        xk, yk = yn, yn
        xs.append(machine.x(xk))
        ys.append(machine.y(yk))
    return machine.trace, xs, ys


def lower_bound_episode(params: InstanceParams, T: Optional[int] = None, seed: int = 0) -> dict:
    """Greedy ``A2`` and ``A3`` runs until the last coordinate activates.

    Reports per-coordinate first activation times, the support-counting floor
    ``2 + m (j - 2) / q`` for each coordinate, and the closed-form oracle
    floors ``ceil(kappa L_f Delta / (c eps^2))`` with ``c = 36000 pi^2``
    (``A2``) and ``72000 pi^2`` (``A3``), evaluated at the largest gap
    ``Delta = 3000 pi^2 bd eps^2 / L_f`` the instance admits.  The floors are
    reported for comparison only.
    """
    params = params.resolved()
    m, bd = params.m, params.bd
    if T is None:
        T = 4 + m * (bd - 2)
    kappa = stacked_condition_number(m)
    delta = suboptimality_bound(params)
    out = {
        "m": m,
        "bd": bd,
        "kappa": kappa,
        "delta_bound": delta,
        "T_cap": T,
    }
    constants = {"A2": 36000 * math.pi**2, "A3": 72000 * math.pi**2}
    for model in MODELS:
        trace = _run(params, model, GreedySchedule(seed), T, True, True)
        act = trace.activation_times()
        q = EXPANSION_DIVISOR[model]
        out[model] = {
            "activation_t": act,
            "censored": act[-1] is None,
            "support_floor": [None if j < 2 else 2 + m * (j - 2) // q for j in range(1, bd + 1)],
            "predicted_min": math.ceil(
                kappa * params.L_f * delta / (constants[model] * params.eps**2)
            ),
            "oracle_counts": trace.oracle_counts.to_dict(),
            "iterations": trace.T,
        }
    out["predicted_min"] = out["A2"]["predicted_min"]
    return out
