"""Integration of vector fields with events, and instrumented guiding-field trajectories."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from ._rk import Event, march
from .calc3 import Vec3, vec
from .connection import parallel_project
from .errors import FieldError, NoReturn, NumericFailure, StepCollapse
from .gvf import GuidingField
from .scene import Numerics, Scene, nearest_branch, theta_on_path
from .trajectory import Termination, Trajectory

ANGLE_CAP = math.pi / 4
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"
    step: float = 0.01
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_time: float = 500.0
    max_steps: int = 5_000_000
    wall_seconds: float | None = None

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"method must be 'rk45' or 'rk4', not {self.method!r}")
        if not (self.step > 0 and self.abs_tol > 0 and self.rel_tol > 0 and self.max_time > 0):
            raise ValueError("step, tolerances and max_time must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    @classmethod
    def from_numerics(cls, num: Numerics) -> "IntegratorConfig":
        return cls(num.integrator, num.fixed_step, num.abs_tol, num.rel_tol, num.max_time,
                   int(num.max_steps), num.wall_seconds)


def _wrap(d: float) -> float:
    return (d + math.pi) % TWO_PI - math.pi


class _BaseAngle:
    """Unwrapped atan2(g, f) updated on accepted steps."""

    def __init__(self, scene: Scene, start):
        self.fg = scene.fg
        f, g = self.fg(start)
        self.last = math.atan2(g, f)
        self.total = 0.0

    def advance(self, y) -> float:
        f, g = self.fg(y)
        return self.total + _wrap(math.atan2(g, f) - self.last)

    def accept(self, t, y):
        f, g = self.fg(y)
        raw = math.atan2(g, f)
        self.total += _wrap(raw - self.last)
        self.last = raw


@dataclass(frozen=True)
class EventSpec:
    """Terminal predicates: ℌ < eps_conv, ℌ > h_exit, |base-angle advance| ≥ angle_target, wall clock."""

    eps_conv: float | None = 1e-8
    h_exit: float | None = None
    angle_target: float | None = None
    wall_seconds: float | None = None

    def __post_init__(self):
        if all(v is None for v in (self.eps_conv, self.h_exit, self.angle_target, self.wall_seconds)):
            raise ValueError("an EventSpec needs at least one terminal predicate")

    def build(self, scene: Scene, start) -> tuple[list[Event], _BaseAngle | None]:
        H = scene.H
        events = []
        if self.eps_conv is not None:
            eps = self.eps_conv
            events.append(Event("converged", lambda t, y: H(y) - eps, -1, kind=Termination.CONVERGED.value))
        if self.h_exit is not None:
            top = self.h_exit
            events.append(Event("tube_exit", lambda t, y: H(y) - top, +1, kind=Termination.TUBE_EXIT.value))
        tracker = None
        if self.angle_target is not None:
            tracker = _BaseAngle(scene, start)
            target = self.angle_target
            events.append(Event("base_revolution", lambda t, y: abs(tracker.advance(y)) - target, +1,
                                on_accept=tracker.accept))
        return events, tracker


def _angle_guard(scene: Scene):
    fg = scene.fg

    def guard(y_old, y_new):
        f0, g0 = fg(y_old)
        f1, g1 = fg(y_new)
        if f0 == g0 == 0.0 or f1 == g1 == 0.0:
            return True
        return abs(_wrap(math.atan2(g1, f1) - math.atan2(g0, f0))) < ANGLE_CAP
    return guard


def integrate(field: Callable, start, cfg: IntegratorConfig | None = None,
              events: Sequence[Event] = (), guard: Callable | None = None,
              t0: float = 0.0, autonomous: bool | None = None) -> Trajectory:
    """Integrate ``field`` (either ``p -> v`` or ``(t, p) -> v``) from ``start``.

    Numeric failures inside the field after the first step end the trajectory
    with termination Singular; a field that cannot be evaluated at the start
    raises FieldError and step-size collapse raises StepCollapse. A field
    taking ``(t, p)`` is treated as time-dependent unless ``autonomous`` says
    otherwise.
    """
    cfg = cfg or IntegratorConfig()
    rhs, timed = _as_rhs(field)
    if autonomous is None:
        autonomous = not timed
    try:
        res = march(rhs, t0, vec(start), t0 + cfg.max_time, method=cfg.method,
                    h0=cfg.step if cfg.method == "rk4" else None, atol=cfg.abs_tol, rtol=cfg.rel_tol,
                    max_steps=cfg.max_steps, events=list(events), guard=guard,
                    wall_seconds=cfg.wall_seconds, autonomous=autonomous)
    except (FieldError, StepCollapse):
        raise
    except NumericFailure as exc:
        ts, ys, stats = getattr(exc, "partial", ([t0], [vec(start)], {}))
        return Trajectory(ts, ys, termination=Termination.SINGULAR, message=str(exc), stats=dict(stats))
    if res.status == "event":
        kind = res.event.kind
        term = Termination(kind) if kind in Termination._value2member_map_ else Termination.EVENT
        return Trajectory(res.ts, res.ys, termination=term,
                          event=res.event.name if term is Termination.EVENT else None,
                          message=f"event {res.event.name}", stats=res.stats)
    message = {"end": "time budget reached", "max_steps": "step budget reached",
               "wall": "wall-clock budget reached", "stationary": "stationary"}[res.status]
    return Trajectory(res.ts, res.ys, termination=Termination.BUDGET, message=message, stats=res.stats)


def _as_rhs(field):
    import inspect
    try:
        n = len(inspect.signature(field).parameters)
    except (TypeError, ValueError):
        n = 2
    if n >= 2:
        return field, True
    return (lambda t, y: field(y)), False


# ---------------------------------------------------------------------------
# instrumented guiding-field runs

def theta_track(scene: Scene, points: np.ndarray, every: int = 10) -> np.ndarray:
    """Unwrapped angle on the path of Θ(points[i]) at every ``every``-th row and the last; NaN elsewhere."""
    n = len(points)
    out = np.full(n, math.nan)
    if n == 0:
        return out
    idx = sorted(set(range(0, n, max(int(every), 1))) | {n - 1})
    prev = None
    for i in idx:
        q = parallel_project(scene, points[i])
        ang = theta_on_path(scene.polyline, q)
        prev = ang if prev is None else nearest_branch(prev, ang)
        out[i] = prev
    return out


def base_angle_track(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.unwrap(np.arctan2(g, f))


def instrument(gf: GuidingField, traj: Trajectory, theta_every: int | None = 10, part: str = "full") -> Trajectory:
    """Fill the ℌ, base-angle, β-residual and θ̂ columns of a guiding-field trajectory."""
    fb = gf.batch(traj.points)
    if part == "winding":
        vec_field = fb.winding
    elif part == "convergence":
        vec_field = fb.convergence
    else:
        vec_field = fb.field
    num = np.abs(np.einsum("ij,ij->i", fb.v, vec_field))
    den = np.linalg.norm(fb.v, axis=1) * np.linalg.norm(vec_field, axis=1) + 1e-300
    traj.H = fb.H
    traj.beta_residual = num / den
    traj.phi_base = base_angle_track(fb.f, fb.g)
    if theta_every:
        traj.theta_hat = theta_track(gf.scene, traj.points, theta_every)
    return traj


def simulate_gvf(scene: Scene, gf: GuidingField, starts: Iterable, cfg: IntegratorConfig | None = None,
                 events: EventSpec | None = None, theta_every: int | None = None,
                 require_in_tube: bool = True, part: str = "full") -> list[Trajectory]:
    """Trajectories of 𝒳 (or one of its summands) from each start, with diagnostics filled in."""
    cfg = cfg or IntegratorConfig.from_numerics(scene.numerics)
    events = events or EventSpec(scene.numerics.eps_conv, scene.delta ** 2, None, cfg.wall_seconds)
    every = scene.numerics.theta_every if theta_every is None else theta_every
    rhs = gf.rhs(part)
    out = []
    for start in starts:
        p = vec(start)
        h0 = scene.H(p)
        if require_in_tube and h0 > scene.delta ** 2:
            raise ValueError(f"start {p} lies outside the tube (H = {h0:.4g} > {scene.delta ** 2:g})")
        if events.eps_conv is not None and h0 < events.eps_conv:
            traj = Trajectory([0.0], [p], termination=Termination.CONVERGED,
                              message="start already within the convergence threshold")
        else:
            evs, _ = events.build(scene, p)
            traj = integrate(rhs, p, cfg, evs, guard=_angle_guard(scene), autonomous=True)
        out.append(instrument(gf, traj, every, part))
    return out


def winding_flow_period(scene: Scene, gf: GuidingField, start, cfg: IntegratorConfig | None = None,
                        theta_every: int = 5) -> tuple[float, Trajectory]:
    """Δθ̂ over one full base revolution of the winding-only flow."""
    cfg = cfg or IntegratorConfig.from_numerics(scene.numerics)
    p = vec(start)
    if scene.H(p) == 0.0:
        raise ValueError("winding flow is stationary on the path")
    evs, _ = EventSpec(None, None, TWO_PI, cfg.wall_seconds).build(scene, p)
    traj = integrate(gf.rhs("winding"), p, cfg, evs, guard=_angle_guard(scene), autonomous=True)
    if traj.termination is not Termination.EVENT:
        raise NoReturn(f"base angle did not complete a revolution ({traj.message})")
    instrument(gf, traj, theta_every, "winding")
    _, th, _ = traj.theta_samples()
    return float(th[-1] - th[0]), traj
