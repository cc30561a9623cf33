"""Oracle call counters shared by the solver and the span tracker."""

from __future__ import annotations

from dataclasses import asdict, dataclass

FIELDS = (
    "grad_f0_calls",
    "A_matvecs",
    "At_matvecs",
    "Abar_matvecs",
    "Abart_matvecs",
    "prox_g_calls",
    "prox_gbar_calls",
)


@dataclass
class OracleCounter:
    grad_f0_calls: int = 0
    A_matvecs: int = 0
    At_matvecs: int = 0
    Abar_matvecs: int = 0
    Abart_matvecs: int = 0
    prox_g_calls: int = 0
    prox_gbar_calls: int = 0

    def add(self, **counts) -> None:
        for name, value in counts.items():
            if name not in FIELDS:
                raise KeyError(f"unknown counter {name!r}")
            if value < 0:
                raise ValueError(f"counter increments must be non-negative, got {name}={value}")
            setattr(self, name, getattr(self, name) + int(value))

    @property
    def matvecs(self) -> int:
        return self.A_matvecs + self.At_matvecs + self.Abar_matvecs + self.Abart_matvecs

    @property
    def prox_calls(self) -> int:
        return self.prox_g_calls + self.prox_gbar_calls

    def to_dict(self) -> dict:
        return asdict(self)

    def copy(self) -> "OracleCounter":
        return OracleCounter(**asdict(self))
