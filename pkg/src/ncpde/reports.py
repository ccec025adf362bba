"""Small check/report containers shared by the verification routines."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "tolerance": float(self.tolerance),
            "passed": bool(self.passed),
        }


def check_le(name: str, value: float, tol: float) -> CheckOutcome:
    """Passes when value <= tol."""
    return CheckOutcome(name, float(value), float(tol), bool(value <= tol))


def check_ge(name: str, value: float, tol: float) -> CheckOutcome:
    """Passes when value >= tol (tol is usually a small negative margin)."""
    return CheckOutcome(name, float(value), float(tol), bool(value >= tol))


@dataclass
class Report:
    kind: str
    checks: list[CheckOutcome] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "flags": list(self.flags),
            **self.extra,
        }
