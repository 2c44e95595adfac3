"""Trajectory container shared by the flow and connection modules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

COLUMNS = ("s", "x1", "x2", "x3", "H", "theta_hat", "phi_base", "beta_residual")


class Termination(Enum):
    CONVERGED = "Converged"
    TUBE_EXIT = "TubeExit"
    BUDGET = "Budget"
    EVENT = "Event"
    SINGULAR = "Singular"


@dataclass
class Trajectory:
    """Time-stamped states with per-sample diagnostics.

    Columns that were not computed are NaN (``theta_hat`` is only filled
    every few samples because each value needs a projection solve).
    """

    s: np.ndarray
    points: np.ndarray
    H: np.ndarray | None = None
    theta_hat: np.ndarray | None = None
    phi_base: np.ndarray | None = None
    beta_residual: np.ndarray | None = None
    termination: Termination = Termination.BUDGET
    event: str | None = None
    message: str = ""
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        n = len(self.s)
        if len(self.points) != n:
            raise ValueError("times and points differ in length")
        for name in ("H", "theta_hat", "phi_base", "beta_residual"):
            col = getattr(self, name)
            setattr(self, name, np.full(n, math.nan) if col is None else np.asarray(col, dtype=float))

    def __len__(self):
        return len(self.s)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def duration(self) -> float:
        return float(self.s[-1] - self.s[0])

    @property
    def label(self) -> str:
        if self.termination is Termination.EVENT:
            return f"Event({self.event})"
        return self.termination.value

    def theta_samples(self):
        """(s, θ̂) at the samples where θ̂ was computed."""
        mask = np.isfinite(self.theta_hat)
        return self.s[mask], self.theta_hat[mask], np.flatnonzero(mask)

    def table(self) -> np.ndarray:
        return np.column_stack([self.s, self.points, self.H, self.theta_hat,
                                self.phi_base, self.beta_residual])
