"""Runge–Kutta steppers on 3-tuples and the marching loop shared by flow and connection.

Dormand–Prince 5(4) with FSAL and the Hairer RMS error norm; classical RK4 for
fixed steps. States are plain tuples so a step costs a few microseconds of
interpreter time plus the field evaluations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import FieldError, NumericFailure, StepCollapse

# Dormand–Prince tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9


def dp45_step(rhs, t, y, k1, h, atol, rtol):
    """One Dormand–Prince step. Returns (y_new, k7, error_norm)."""
    y0, y1, y2 = y
    a0, a1, a2 = k1
    k2 = rhs(t + C2 * h, (y0 + h * A21 * a0, y1 + h * A21 * a1, y2 + h * A21 * a2))
    b0, b1, b2 = k2
    k3 = rhs(t + C3 * h, (y0 + h * (A31 * a0 + A32 * b0),
                          y1 + h * (A31 * a1 + A32 * b1),
                          y2 + h * (A31 * a2 + A32 * b2)))
    c0, c1, c2 = k3
    k4 = rhs(t + C4 * h, (y0 + h * (A41 * a0 + A42 * b0 + A43 * c0),
                          y1 + h * (A41 * a1 + A42 * b1 + A43 * c1),
                          y2 + h * (A41 * a2 + A42 * b2 + A43 * c2)))
    d0, d1, d2 = k4
    k5 = rhs(t + C5 * h, (y0 + h * (A51 * a0 + A52 * b0 + A53 * c0 + A54 * d0),
                          y1 + h * (A51 * a1 + A52 * b1 + A53 * c1 + A54 * d1),
                          y2 + h * (A51 * a2 + A52 * b2 + A53 * c2 + A54 * d2)))
    e0, e1, e2 = k5
    k6 = rhs(t + h, (y0 + h * (A61 * a0 + A62 * b0 + A63 * c0 + A64 * d0 + A65 * e0),
                     y1 + h * (A61 * a1 + A62 * b1 + A63 * c1 + A64 * d1 + A65 * e1),
                     y2 + h * (A61 * a2 + A62 * b2 + A63 * c2 + A64 * d2 + A65 * e2)))
    f0, f1, f2 = k6
    n0 = y0 + h * (B1 * a0 + B3 * c0 + B4 * d0 + B5 * e0 + B6 * f0)
    n1 = y1 + h * (B1 * a1 + B3 * c1 + B4 * d1 + B5 * e1 + B6 * f1)
    n2 = y2 + h * (B1 * a2 + B3 * c2 + B4 * d2 + B5 * e2 + B6 * f2)
    ynew = (n0, n1, n2)
    k7 = rhs(t + h, ynew)
    g0, g1, g2 = k7
    r0 = h * (E1 * a0 + E3 * c0 + E4 * d0 + E5 * e0 + E6 * f0 + E7 * g0)
    r1 = h * (E1 * a1 + E3 * c1 + E4 * d1 + E5 * e1 + E6 * f1 + E7 * g1)
    r2 = h * (E1 * a2 + E3 * c2 + E4 * d2 + E5 * e2 + E6 * f2 + E7 * g2)
    s0 = atol + rtol * max(abs(y0), abs(n0))
    s1 = atol + rtol * max(abs(y1), abs(n1))
    s2 = atol + rtol * max(abs(y2), abs(n2))
    err = math.sqrt(((r0 / s0) ** 2 + (r1 / s1) ** 2 + (r2 / s2) ** 2) / 3.0)
    return ynew, k7, err


def rk4_step(rhs, t, y, k1, h):
    y0, y1, y2 = y
    a = k1
    b = rhs(t + 0.5 * h, (y0 + 0.5 * h * a[0], y1 + 0.5 * h * a[1], y2 + 0.5 * h * a[2]))
    c = rhs(t + 0.5 * h, (y0 + 0.5 * h * b[0], y1 + 0.5 * h * b[1], y2 + 0.5 * h * b[2]))
    d = rhs(t + h, (y0 + h * c[0], y1 + h * c[1], y2 + h * c[2]))
    w = h / 6.0
    return (y0 + w * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]),
            y1 + w * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]),
            y2 + w * (a[2] + 2.0 * b[2] + 2.0 * c[2] + d[2]))


@dataclass
class Event:
    """Terminal event: fires when ``fn`` crosses zero in ``direction``.

    ``direction=-1`` means from positive to non-positive. ``gate`` can veto a
    detected crossing (e.g. a Poincaré section crossing far from its anchor).
    ``on_accept`` lets stateful events update after every accepted step.
    """

    name: str
    fn: Callable[[float, tuple], float]
    direction: int = -1
    kind: str = "Event"
    gate: Callable[[float, tuple], bool] | None = None
    on_accept: Callable[[float, tuple], None] | None = None

    def crossed(self, before: float, after: float) -> bool:
        if self.direction < 0:
            return before > 0.0 >= after
        if self.direction > 0:
            return before < 0.0 <= after
        return (before > 0.0 >= after) or (before < 0.0 <= after)


@dataclass
class MarchResult:
    ts: list
    ys: list
    status: str                # "end", "event", "max_steps", "wall", "stationary"
    event: Event | None = None
    stats: dict = field(default_factory=dict)


def _finite(v) -> bool:
    return math.isfinite(v[0]) and math.isfinite(v[1]) and math.isfinite(v[2])


def march(rhs, t0: float, y0, t_end: float, *, method: str = "rk45", h0: float | None = None,
          atol: float = 1e-10, rtol: float = 1e-10, max_steps: int = 1_000_000,
          min_step: float = 1e-14, max_step: float = math.inf, events=(),
          guard: Callable | None = None, wall_seconds: float | None = None,
          event_tol: float = 1e-9, record_every: int = 1,
          autonomous: bool = False) -> MarchResult:
    """Integrate ``y' = rhs(t, y)`` from t0 towards t_end.

    ``guard(y_old, y_new)`` may reject an otherwise acceptable step (the step
    is then halved). Events are checked after every accepted step and located
    by bisection on the step length to ``event_tol``. With ``autonomous`` a
    zero field at the start returns the constant solution in one segment.
    """
    if method not in ("rk45", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    t = float(t0)
    y = (float(y0[0]), float(y0[1]), float(y0[2]))
    try:
        k1 = rhs(t, y)
    except (ArithmeticError, ValueError) as exc:
        raise FieldError(f"field not evaluable at start {y}: {exc}") from exc
    if not _finite(k1):
        raise FieldError(f"field not finite at start {y}")
    ts, ys = [t], [y]
    stats = {"steps": 0, "rejected": 0, "evals": 1, "min_step": math.inf, "max_step": 0.0}
    ev_values = [ev.fn(t, y) for ev in events]
    span = t_end - t
    if span <= 0:
        return MarchResult(ts, ys, "end", None, stats)
    if autonomous and k1 == (0.0, 0.0, 0.0):
        # an equilibrium: the exact solution is constant
        ts.append(t_end)
        ys.append(y)
        return MarchResult(ts, ys, "stationary", None, stats)
    if h0 is None:
        scale = max(abs(y[0]), abs(y[1]), abs(y[2]), 1e-3)
        speed = max(abs(k1[0]), abs(k1[1]), abs(k1[2]), 1e-300)
        h = min(0.01 * scale / speed, span, max_step) if method == "rk45" else min(span, max_step)
    else:
        h = min(h0, span, max_step)
    fixed = method == "rk4"
    if fixed and h0 is None:
        raise ValueError("rk4 needs a step h0")
    try:
        return _run(rhs, t, y, k1, t_end, h, fixed, ts, ys, stats, ev_values, atol, rtol,
                    max_steps, min_step, max_step, events, guard, wall_seconds, event_tol,
                    record_every)
    except NumericFailure as exc:
        # keep what was accepted so callers can report a partial trajectory
        exc.partial = (ts, ys, stats)
        raise


def _run(rhs, t, y, k1, t_end, h, fixed, ts, ys, stats, ev_values, atol, rtol, max_steps,
         min_step, max_step, events, guard, wall_seconds, event_tol, record_every):
    clock = time.perf_counter()
    steps_since_record = 0
    while True:
        if stats["steps"] >= max_steps:
            _flush(ts, ys, t, y)
            return MarchResult(ts, ys, "max_steps", None, stats)
        if wall_seconds is not None and time.perf_counter() - clock > wall_seconds:
            _flush(ts, ys, t, y)
            return MarchResult(ts, ys, "wall", None, stats)
        remaining = t_end - t
        last = False
        if h >= remaining * (1.0 - 1e-12):
            h = remaining
            last = True
        if fixed:
            ynew = rk4_step(rhs, t, y, k1, h)
            stats["evals"] += 3
            if not _finite(ynew):
                raise FieldError(f"state not finite after step at t={t}")
            if guard is not None and not guard(y, ynew):
                raise StepCollapse(f"fixed step {h:g} rejected by step guard at t={t}")
            knew = rhs(t + h, ynew)
            stats["evals"] += 1
            err = 0.0
        else:
            ynew, knew, err = dp45_step(rhs, t, y, k1, h, atol, rtol)
            stats["evals"] += 6
            if not (err <= 1.0) or (guard is not None and not guard(y, ynew)):
                if not math.isfinite(err) and not _finite(ynew):
                    # shrink hard on overflow before giving up
                    err = 1e10
                stats["rejected"] += 1
                factor = 0.5 if err <= 1.0 else max(0.2, 0.9 * err ** -0.2)
                h *= factor
                if h < min_step * max(1.0, abs(t)):
                    raise StepCollapse(f"step {h:.3e} below {min_step:g} at t={t:.6g}, y={y}")
                continue
        tnew = t_end if last else t + h
        # events
        for i, ev in enumerate(events):
            val = ev.fn(tnew, ynew)
            if ev.crossed(ev_values[i], val) and (ev.gate is None or ev.gate(tnew, ynew)):
                tc, yc = _locate(rhs, ev, t, y, k1, h, ev_values[i], atol, rtol, fixed, event_tol)
                if ev.gate is None or ev.gate(tc, yc):
                    stats["steps"] += 1
                    ts.append(tc)
                    ys.append(yc)
                    return MarchResult(ts, ys, "event", ev, stats)
            ev_values[i] = val
        stats["steps"] += 1
        stats["min_step"] = min(stats["min_step"], h)
        stats["max_step"] = max(stats["max_step"], h)
        t, y, k1 = tnew, ynew, knew
        for ev in events:
            if ev.on_accept is not None:
                ev.on_accept(t, y)
        steps_since_record += 1
        if steps_since_record >= record_every or last:
            ts.append(t)
            ys.append(y)
            steps_since_record = 0
        if last:
            return MarchResult(ts, ys, "end", None, stats)
        if not fixed:
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(h * factor, max_step)


def _flush(ts, ys, t, y):
    if ts[-1] != t:
        ts.append(t)
        ys.append(y)


def _locate(rhs, ev, t, y, k1, h, v0, atol, rtol, fixed, tol):
    """Bisection on the sub-step length for the first zero of ``ev.fn``."""
    lo, hi = 0.0, h
    y_hi = None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ym = rk4_step(rhs, t, y, k1, mid) if fixed else dp45_step(rhs, t, y, k1, mid, atol, rtol)[0]
        if ev.crossed(v0, ev.fn(t + mid, ym)):
            hi, y_hi = mid, ym
        else:
            lo = mid
    if y_hi is None:
        y_hi = rk4_step(rhs, t, y, k1, hi) if fixed else dp45_step(rhs, t, y, k1, hi, atol, rtol)[0]
    return t + hi, y_hi
