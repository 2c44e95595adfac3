"""Check results and reports shared by diagnostics, weight checks and the verifier."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def jsonable(x: Any) -> Any:
    """Recursively convert to JSON-safe builtins; non-finite floats become None."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


@dataclass
class CheckResult:
    """Outcome of one check; ``passed`` is None when the check does not apply."""

    check: str
    anchor: str
    passed: bool | None
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    witness: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.passed = None if self.passed is None else bool(self.passed)
        self.measured = jsonable(self.measured)
        self.tolerance = jsonable(self.tolerance)
        self.witness = jsonable(self.witness)
        self.notes = [str(n) for n in self.notes]

    @property
    def status(self) -> str:
        return {True: "pass", False: "fail", None: "n/a"}[self.passed]

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "anchor": self.anchor,
            "pass": self.passed,
            "status": self.status,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "witness": self.witness,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CheckResult":
        return cls(d["check"], d["anchor"], d["pass"], d.get("measured", {}),
                   d.get("tolerance", {}), d.get("witness", []), d.get("notes", []))

    def line(self) -> str:
        bits = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items()
                         if not isinstance(v, (list, dict)))
        return f"[{self.status.upper():4}] {self.check}: {bits}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


@dataclass
class Report:
    title: str
    checks: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.metadata = jsonable(self.metadata)

    @property
    def passed(self) -> bool:
        """True iff every applicable check passed."""
        return all(c.passed is not False for c in self.checks)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.check == name:
                return c
        raise KeyError(name)

    def names(self) -> list:
        return [c.check for c in self.checks]

    def to_dict(self) -> dict:
        return {"title": self.title, "verdict": self.verdict,
                "metadata": self.metadata,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["title"], [CheckResult.from_dict(c) for c in d["checks"]],
                   d.get("metadata", {}))

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        lines = [f"{self.title}: {self.verdict.upper()}"]
        lines += ["  " + c.line() for c in self.checks]
        return "\n".join(lines)
