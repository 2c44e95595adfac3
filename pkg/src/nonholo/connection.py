"""Horizontal lifts, the parallel projection onto the path, and the first-return chart.

A velocity v is horizontal when β(v) = 0. Given a desired change (w1, w2) of
(f, g), the horizontal velocity solves

    ∇f·v = w1,   ∇g·v = w2,   V_β·v = 0,

whose determinant is ∇f·(∇g × V_β) = β(∇f × ∇g). Lifting the straight base
segment from (f, g)(p) to the origin gives the projection Θ(p) onto the path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._rk import Event, march
from .calc3 import Vec3, cross, dot, norm, scale, sub, vec
from .errors import NoConvergence, NoReturn, NumericFailure, SectionDegenerate, TransversalityLost, TubeExit
from .scene import Scene, _min_norm_step, find_on_path, solve_on_section
from .trajectory import Termination, Trajectory

DET_TOL = 1e-10
CONNECTION_ATOL = 1e-10


@dataclass(frozen=True)
class HorizontalSolve:
    """The 3×3 system [∇f; ∇g; V_β] v = (w1, w2, 0) at a point."""

    rows: np.ndarray
    det: float
    condition: float

    @property
    def transversal(self) -> bool:
        scale_ = float(np.prod(np.linalg.norm(self.rows, axis=1)))
        return abs(self.det) > DET_TOL * scale_

    def solve(self, w) -> np.ndarray:
        if not self.transversal:
            raise TransversalityLost(f"horizontal system singular (det={self.det:.3e})")
        return np.linalg.solve(self.rows, np.array([w[0], w[1], 0.0]))


def horizontal_solve(scene: Scene, p) -> HorizontalSolve:
    j = scene.jet(p)
    rows = np.array([j.grad_f, j.grad_g, j.v])
    det = dot(j.grad_f, cross(j.grad_g, j.v))
    return HorizontalSolve(rows, det, float(np.linalg.cond(rows)))


def _velocity(df, dg, v, w1, w2):
    """Closed-form solution of the horizontal system (Cramer's rule)."""
    gxv = cross(dg, v)
    det = dot(df, gxv)
    size = norm(df) * norm(dg) * norm(v)
    if not abs(det) > DET_TOL * size:
        raise TransversalityLost(f"horizontal system singular: det={det:.3e}, scale={size:.3e}")
    vxf = cross(v, df)
    inv = 1.0 / det
    return ((w1 * gxv[0] + w2 * vxf[0]) * inv,
            (w1 * gxv[1] + w2 * vxf[1]) * inv,
            (w1 * gxv[2] + w2 * vxf[2]) * inv)


def horizontal_velocity(scene: Scene, p, w: Sequence[float]) -> Vec3:
    """The unique v with df(v) = w1, dg(v) = w2, β(v) = 0."""
    j = scene.jet(p)
    return _velocity(j.grad_f, j.grad_g, j.v, float(w[0]), float(w[1]))


def horizontal_velocity_batch(bj, w: np.ndarray) -> np.ndarray:
    """Vectorized horizontal velocities for a :class:`~nonholo.scene.BatchJet`."""
    gxv = np.cross(bj.grad_g, bj.v)
    vxf = np.cross(bj.v, bj.grad_f)
    det = np.einsum("ij,ij->i", bj.grad_f, gxv)
    size = (np.linalg.norm(bj.grad_f, axis=1) * np.linalg.norm(bj.grad_g, axis=1)
            * np.linalg.norm(bj.v, axis=1))
    if np.any(~(np.abs(det) > DET_TOL * size)):
        raise TransversalityLost("horizontal system singular at some batch points")
    return (w[:, :1] * gxv + w[:, 1:2] * vxf) / det[:, None]


def _lift_rhs(scene: Scene, base_velocity: Callable[[float], tuple]):
    kfn = scene.kernel.fn

    def rhs(t, y):
        k = kfn(y[0], y[1], y[2])
        w1, w2 = base_velocity(t)
        return _velocity((k[1], k[2], k[3]), (k[5], k[6], k[7]), (k[8], k[12], k[16]), w1, w2)
    return rhs


def _tube_guard(scene: Scene):
    limit = scene.delta ** 2
    fg = scene.loop.kernel.fn

    def guard(y_old, y_new):
        k = fg(y_new[0], y_new[1], y_new[2])
        if k[0] * k[0] + k[4] * k[4] > limit:
            raise TubeExit(f"lift left the tube at {y_new}")
        return True
    return guard


def _polish(scene: Scene, p, target) -> Vec3:
    f, g, df, dg = scene.loop.residual(p)
    step = _min_norm_step(f - target[0], g - target[1], df, dg)
    if step is None:
        return p
    return (p[0] + step[0], p[1] + step[1], p[2] + step[2])


def lift_path(scene: Scene, base: Callable[[float], Sequence[float]], start, steps: int = 100,
              base_velocity: Callable[[float], Sequence[float]] | None = None,
              t_span: tuple[float, float] = (0.0, 1.0), start_tol: float = 1e-8,
              enforce_tube: bool = True) -> Trajectory:
    """Horizontal lift of the base curve t ↦ (w1(t), w2(t)) starting at ``start``.

    ``steps`` sets the output resolution (the step size is capped at
    span/steps). Without ``base_velocity`` the derivative of ``base`` is taken
    by central differences.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    p0 = vec(start)
    f0, g0 = scene.fg(p0)
    b0 = base(t0)
    if max(abs(f0 - b0[0]), abs(g0 - b0[1])) > start_tol:
        raise ValueError(f"start residual ({f0}, {g0}) does not match base(t0) = {tuple(b0)}")
    if base_velocity is None:
        def base_velocity(t, _h=1e-6 * max(1.0, abs(t1 - t0))):
            a, b = base(t + _h), base(t - _h)
            return ((a[0] - b[0]) / (2 * _h), (a[1] - b[1]) / (2 * _h))
    rhs = _lift_rhs(scene, base_velocity)
    res = march(rhs, t0, p0, t1, atol=CONNECTION_ATOL, rtol=CONNECTION_ATOL,
                max_step=abs(t1 - t0) / max(int(steps), 1),
                guard=_tube_guard(scene) if enforce_tube else None)
    ts = np.array(res.ts)
    pts = np.array(res.ys)
    fg = np.array([scene.fg(p) for p in pts])
    target = np.array([base(t) for t in ts])
    tracking = np.max(np.abs(fg - target), axis=1)
    beta_res = np.array([abs(dot(scene.jet(p).v, rhs(t, p))) for t, p in zip(ts, pts)])
    h = fg[:, 0] ** 2 + fg[:, 1] ** 2
    stats = dict(res.stats, max_tracking_error=float(tracking.max()),
                 max_beta_residual=float(beta_res.max()))
    return Trajectory(ts, pts, H=h, beta_residual=beta_res, termination=Termination.BUDGET,
                      message="lift complete", stats=stats)


def _radial_lift(scene: Scene, p, w, t_end=1.0) -> Vec3:
    w1, w2 = float(w[0]), float(w[1])
    if w1 == 0.0 and w2 == 0.0:
        return vec(p)
    rhs = _lift_rhs(scene, lambda t: (w1, w2))
    res = march(rhs, 0.0, p, t_end, atol=CONNECTION_ATOL, rtol=CONNECTION_ATOL,
                record_every=1 << 30)
    return res.ys[-1]


def parallel_project(scene: Scene, p, tol: float = 1e-8) -> Vec3:
    """Θ(p): endpoint on the path of the lift of the base segment (f, g)(p) → (0, 0)."""
    p = vec(p)
    f0, g0 = scene.fg(p)
    if f0 == 0.0 and g0 == 0.0:
        return p
    q = _radial_lift(scene, p, (-f0, -g0))
    q = _polish(scene, q, (0.0, 0.0))
    f, g = scene.fg(q)
    if max(abs(f), abs(g)) > tol:
        raise NoConvergence(f"projection residual ({f:.3e}, {g:.3e}) above {tol:g}")
    return q


def psi(scene: Scene, q, zbar: Sequence[float], t: float) -> Vec3:
    """Lift of s ↦ s·z̄ (s from 0 to t) starting at the path point q."""
    q = vec(q)
    if t == 0.0:
        return q
    z1, z2 = float(zbar[0]), float(zbar[1])
    p = _radial_lift(scene, q, (z1, z2), t_end=float(t))
    return _polish(scene, p, (t * z1, t * z2))


def theta_hat(scene: Scene, p) -> float:
    """Angle on the path of Θ(p) in [0, 2π)."""
    from .scene import theta_on_path
    return theta_on_path(scene.polyline, parallel_project(scene, p))


# ---------------------------------------------------------------------------
# first-return chart

@dataclass
class ReturnResult:
    return_time: float
    trajectory: Trajectory
    start: Vec3
    end: Vec3


def _section(scene: Scene, anchor):
    anchor = find_on_path(scene.loop, anchor)
    t = scene.jet(anchor).t
    n = norm(t)
    if n == 0.0:
        raise SectionDegenerate(f"fiber direction vanishes at the anchor {anchor}")
    return anchor, scale(1.0 / n, t)


def section_point(scene: Scene, anchor, normal, z) -> Vec3:
    """q(z): the section point with (f, g) = z."""
    try:
        q = solve_on_section(scene.loop, anchor, z, anchor, normal)
    except NoConvergence as exc:
        raise SectionDegenerate(f"no section point with (f, g) = {tuple(z)}: {exc}") from exc
    t = scene.jet(q).t
    nt = norm(t)
    if nt == 0.0 or dot(t, normal) <= 0.1 * nt:
        raise SectionDegenerate(f"fiber direction not transverse to the section at {q}")
    return q


def _fiber_rhs(scene: Scene):
    kfn = scene.kernel.fn
    s = float(scene.sign)

    def rhs(t, y):
        k = kfn(y[0], y[1], y[2])
        fx, fy, fz, gx, gy, gz = k[1], k[2], k[3], k[5], k[6], k[7]
        tx = s * (fy * gz - fz * gy)
        ty = s * (fz * gx - fx * gz)
        tz = s * (fx * gy - fy * gx)
        c = 1.0 / (1.0 + tx * tx + ty * ty + tz * tz)
        return (c * tx, c * ty, c * tz)
    return rhs


def first_return(scene: Scene, anchor, z: Sequence[float], max_time: float = 1e3,
                 gate_radius: float | None = None, backward_from=None) -> ReturnResult:
    """Return time of the normalized fiber flow T/(1 + |T|²) to the section through ``anchor``.

    The section is the plane through the anchor normal to T(anchor); the
    start is the section point q(z) and the return is the first crossing of
    the plane from the negative to the positive side near the anchor.
    """
    anchor, n = _section(scene, anchor)
    if math.hypot(z[0], z[1]) > scene.delta:
        raise SectionDegenerate(f"z = {tuple(z)} outside the chart disk of radius {scene.delta}")
    q = section_point(scene, anchor, n, z)
    rhs = _fiber_rhs(scene)
    radius = gate_radius if gate_radius is not None else (
        0.25 * scene.polyline.length + norm(sub(q, anchor)))

    def plane(t, y):
        return n[0] * (y[0] - anchor[0]) + n[1] * (y[1] - anchor[1]) + n[2] * (y[2] - anchor[2])

    def gate(t, y):
        return norm(sub(y, anchor)) <= radius and dot(n, rhs(t, y)) > 0.0

    ev = Event("section", plane, direction=+1, gate=gate)
    res = march(rhs, 0.0, q, max_time, atol=CONNECTION_ATOL, rtol=CONNECTION_ATOL,
                events=[ev], max_step=0.05 * scene.polyline.length)
    if res.status != "event":
        raise NoReturn(f"no return to the section within time {max_time:g}")
    traj = Trajectory(np.array(res.ts), np.array(res.ys), termination=Termination.EVENT,
                      event="section", stats=res.stats)
    return ReturnResult(res.ts[-1], traj, q, res.ys[-1])


@dataclass
class ReturnChart:
    """First-return data over a grid of base points in a disk around z = 0."""

    scene: Scene
    anchor: Vec3
    normal: Vec3
    radius: float
    grid: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    return_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, scene: Scene, anchor, radius: float, rings: int = 3, per_ring: int = 8) -> "ReturnChart":
        anchor, n = _section(scene, anchor)
        pts = [(0.0, 0.0)]
        for i in range(1, rings + 1):
            r = radius * i / rings
            pts += [(r * math.cos(2 * math.pi * k / per_ring), r * math.sin(2 * math.pi * k / per_ring))
                    for k in range(per_ring)]
        grid = np.array(pts)
        times = np.array([first_return(scene, anchor, z).return_time for z in grid])
        if np.any(times <= 0):
            raise SectionDegenerate("non-positive return time on the chart grid")
        return cls(scene, anchor, n, radius, grid, times)

    def return_time(self, z) -> float:
        key = (round(float(z[0]), 12), round(float(z[1]), 12))
        if key not in self._cache:
            self._cache[key] = first_return(self.scene, self.anchor, z).return_time
        return self._cache[key]

    def angle(self, p) -> float:
        """Fiber angle 2π·s/𝔱₁(z) where s is the flow time from the section to p."""
        f, g = self.scene.fg(p)
        period = self.return_time((f, g))
        rhs = _fiber_rhs(self.scene)
        n, a = self.normal, self.anchor

        def back(t, y):
            r = rhs(t, y)
            return (-r[0], -r[1], -r[2])

        def plane(t, y):
            return dot(n, sub(y, a))

        start_side = plane(0.0, vec(p))
        if start_side == 0.0:
            return 0.0
        ev = Event("section", plane, direction=-1 if start_side > 0 else 0,
                   gate=lambda t, y: norm(sub(y, a)) <= 0.25 * self.scene.polyline.length + 2 * self.scene.delta)
        res = march(back, 0.0, vec(p), 2.0 * period, atol=CONNECTION_ATOL, rtol=CONNECTION_ATOL,
                    events=[ev], max_step=0.05 * self.scene.polyline.length)
        if res.status != "event":
            raise NoReturn("backward flow did not reach the section")
        return (2.0 * math.pi * res.ts[-1] / period) % (2.0 * math.pi)
