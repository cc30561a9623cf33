"""Closed-form proximal operators and subdifferential distances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .structured import as_flat

KINDS = ("weighted_l1", "pairwise_l1", "linf_ball_indicator", "custom")


def prox_weighted_l1(y, c: float) -> np.ndarray:
    """Soft threshold ``sign(y) * max(|y| - c, 0)`` with ``sign(0) = 0``."""
    if c < 0:
        raise ValueError(f"threshold must be non-negative, got {c}")
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.maximum(np.abs(y) - c, 0.0)


def project_linf_ball(z, radius: float) -> np.ndarray:
    """Clamp every coordinate of ``z`` to ``[-radius, radius]``."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    return np.clip(np.asarray(z, dtype=float), -radius, radius)


@dataclass(frozen=True)
class PairGeometry:
    """Blocks ``(i, i+1)`` coupled by the pairwise l1 term, ``i`` 1-based."""

    m: int
    bd: int
    pairs: tuple

    def __post_init__(self):
        pairs = tuple(int(i) for i in self.pairs)
        for i in pairs:
            if not 1 <= i <= self.m - 1:
                raise ValueError(f"pair start {i} outside [1, {self.m - 1}]")
        touched = [b for i in pairs for b in (i, i + 1)]
        if len(set(touched)) != len(touched):
            raise ValueError(f"pairs overlap: {pairs}")
        object.__setattr__(self, "pairs", pairs)


def prox_pairwise_l1(x, eta_beta: float, geometry: PairGeometry) -> np.ndarray:
    """Prox of ``eta * beta * sum_{i in pairs} ||x_i - x_{i+1}||_1``.

    Each coordinate of each pair either averages (when the gap is at most
    ``2 * eta_beta``) or moves both ends ``eta_beta`` toward each other.
    Blocks outside every pair pass through unchanged.
    """
    if eta_beta < 0:
        raise ValueError(f"eta_beta must be non-negative, got {eta_beta}")
    X = as_flat(x, geometry.m, geometry.bd).reshape(geometry.m, geometry.bd).copy()
    if not geometry.pairs:
        return X.reshape(-1)
    idx = np.asarray(geometry.pairs, dtype=int) - 1
    a, b = X[idx], X[idx + 1]
    diff = a - b
    merge = np.abs(diff) <= 2.0 * eta_beta
    mean = 0.5 * (a + b)
    shift = eta_beta * np.sign(diff)
    X[idx] = np.where(merge, mean, a - shift)
    X[idx + 1] = np.where(merge, mean, b + shift)
    return X.reshape(-1)


def prox_conjugate(prox_of_g: Callable, z, eta: float) -> np.ndarray:
    """Prox of ``eta * g^*`` via Moreau: ``z - eta * prox_{g/eta}(z / eta)``.

    ``prox_of_g(v, t)`` must return ``prox_{t g}(v)``.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    z = np.asarray(z, dtype=float)
    return z - eta * np.asarray(prox_of_g(z / eta, 1.0 / eta))


def subdiff_distance_weighted_l1(y, z, c: float) -> float:
    """Euclidean distance from ``z`` to the subdifferential of ``c*||.||_1`` at ``y``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {z.shape}")
    r = np.where(y != 0, np.abs(c * np.sign(y) - z), np.maximum(np.abs(z) - c, 0.0))
    return float(np.linalg.norm(r))


@dataclass(frozen=True)
class ProxSpec:
    """A proximable convex function, used as the regularizer ``gbar``.

    ``prox(v, eta)`` returns ``prox_{eta * self}(v)``.  The ``custom`` kind
    takes user callables; its conjugate prox always goes through Moreau.
    """

    kind: str
    weight: float = 0.0
    geometry: Optional[PairGeometry] = None
    prox_fn: Optional[Callable] = None
    value_fn: Optional[Callable] = None
    subdiff_fn: Optional[Callable] = None
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown prox kind {self.kind!r}; expected one of {KINDS}")
        if self.weight < 0:
            raise ValueError(f"weight must be non-negative, got {self.weight}")
        if (self.geometry is not None) != (self.kind == "pairwise_l1"):
            raise ValueError("geometry is required for pairwise_l1 and only for it")
        if self.kind == "custom" and self.prox_fn is None:
            raise ValueError("custom prox requires prox_fn")

    def value(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if self.kind == "weighted_l1":
            return float(self.weight * np.abs(v).sum())
        if self.kind == "pairwise_l1":
            X = v.reshape(self.geometry.m, self.geometry.bd)
            idx = np.asarray(self.geometry.pairs, dtype=int) - 1
            return float(self.weight * np.abs(X[idx] - X[idx + 1]).sum())
        if self.kind == "linf_ball_indicator":
            return 0.0 if np.all(np.abs(v) <= self.weight) else float("inf")
        if self.value_fn is None:
            raise NotImplementedError("custom prox has no value_fn")
        return float(self.value_fn(v))

    def prox(self, v, eta: float) -> np.ndarray:
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        if self.kind == "weighted_l1":
            return prox_weighted_l1(v, eta * self.weight)
        if self.kind == "pairwise_l1":
            return prox_pairwise_l1(v, eta * self.weight, self.geometry)
        if self.kind == "linf_ball_indicator":
            return project_linf_ball(v, self.weight)
        return np.asarray(self.prox_fn(np.asarray(v, dtype=float), eta), dtype=float)

    def conj_prox(self, z, eta: float) -> np.ndarray:
        """Prox of ``eta`` times the convex conjugate."""
        if self.kind == "weighted_l1":
            if not eta > 0:
                raise ValueError(f"eta must be positive, got {eta}")
            # exact clamp; the Moreau path agrees up to rounding
            return project_linf_ball(z, self.weight)
        return prox_conjugate(self.prox, z, eta)

    def conj_value(self, z) -> float:
        """Conjugate value; only closed forms are supported."""
        if self.kind == "weighted_l1":
            z = np.asarray(z, dtype=float)
            return 0.0 if np.all(np.abs(z) <= self.weight) else float("inf")
        raise NotImplementedError(f"no closed-form conjugate for kind {self.kind!r}")

    def in_conj_domain(self, z, slack: float = 0.0) -> bool:
        if self.kind == "weighted_l1":
            return bool(np.all(np.abs(np.asarray(z)) <= self.weight * (1 + slack) + slack))
        return np.isfinite(self.conj_value(z))

    def subdiff_distance(self, y, z) -> float:
        if self.kind == "weighted_l1":
            return subdiff_distance_weighted_l1(y, z, self.weight)
        if self.kind == "custom" and self.subdiff_fn is not None:
            return float(self.subdiff_fn(y, z))
        raise NotImplementedError(f"no subdifferential oracle for kind {self.kind!r}")

    def subdiff_box(self, y, zero_tol: float = 0.0):
        """Per-coordinate bounds ``(lo, hi)`` of the subdifferential at ``y``.

        Coordinates with ``|y_i| <= zero_tol`` are treated as kinks.
        """
        if self.kind != "weighted_l1":
            raise NotImplementedError(f"no box representation for kind {self.kind!r}")
        y = np.asarray(y, dtype=float)
        c = self.weight
        kink = np.abs(y) <= zero_tol
        lo = np.where(kink, -c, c * np.sign(y))
        hi = np.where(kink, c, c * np.sign(y))
        return lo, hi

    def lipschitz_constant(self, dim: int) -> float:
        if self.lipschitz is not None:
            return float(self.lipschitz)
        if self.kind == "weighted_l1":
            return float(self.weight * np.sqrt(dim))
        raise NotImplementedError(f"no Lipschitz constant known for kind {self.kind!r}")

