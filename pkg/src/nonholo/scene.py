"""Constraint + desired path, the traced path polyline, and the assumption battery.

The path is the regular level set {f = 0, g = 0}. ``ℌ = f² + g²`` is the
squared residual and the tube is ``ℌ ≤ δ²``. The fiber direction is
``T = s·(∇f × ∇g)`` with the sign ``s`` frozen once from the traced
polyline so that β(T) > 0 there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .calc3 import OneForm, Vec3, add, cross, curl_of, dot, norm, scale, sub, vec
from .errors import NoConvergence, NotClosed, OffPath, RankDeficient, TangencyLoss
from .expr import BinOp, Call, Expr, Pow, compile_kernel, parse
from .report import CheckResult, Report

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class Numerics:
    """Steps, tolerances and sample budgets used by every numeric routine."""

    trace_step: float = 0.05
    integrator: str = "rk45"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    fixed_step: float = 0.01
    max_time: float = 500.0
    max_steps: int = 5_000_000
    eps_conv: float = 1e-8
    theta_every: int = 10
    tube_samples: int = 10_000
    weight_samples: int = 400
    rng_seed: int = 0
    transversality_tol: float = 1e-3
    lambda_tol: float = 1e-8
    wall_seconds: float | None = None

    def __post_init__(self):
        if self.integrator not in ("rk45", "rk4"):
            raise ValueError(f"integrator must be 'rk45' or 'rk4', got {self.integrator!r}")
        for name in ("trace_step", "abs_tol", "rel_tol", "fixed_step", "max_time", "eps_conv"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1 or self.theta_every < 1 or self.tube_samples < 1:
            raise ValueError("step and sample budgets must be at least 1")


@dataclass(frozen=True)
class PfaffianConstraint:
    """The constraint β(v) = 0. With ``normalized`` the form is divided by |V_β|."""

    beta: OneForm
    normalized: bool = False

    @classmethod
    def from_texts(cls, texts: Sequence[str], normalized: bool = False) -> "PfaffianConstraint":
        form = OneForm.parse(texts)
        if normalized:
            size = Pow(BinOp("+", BinOp("+", Pow(form.b1, 2.0), Pow(form.b2, 2.0)),
                             Pow(form.b3, 2.0)), 0.5)
            form = OneForm(*(BinOp("/", b, size) for b in form.coefficients))
        return cls(form, normalized)


@dataclass(frozen=True)
class ImplicitLoop:
    f: Expr
    g: Expr
    seed: Vec3
    delta: float
    orientation_sign: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("tube radius delta must be positive")
        if self.orientation_sign not in (1, -1):
            raise ValueError("orientation_sign must be +1 or -1")
        object.__setattr__(self, "seed", vec(self.seed))

    @classmethod
    def from_texts(cls, f: str, g: str, seed, delta: float) -> "ImplicitLoop":
        return cls(parse(f), parse(g), vec(seed), float(delta))

    @cached_property
    def kernel(self):
        return compile_kernel([self.f, self.g], grads=True, name="loop")

    def residual(self, p):
        """(f, g, ∇f, ∇g) at p."""
        k = self.kernel.fn(float(p[0]), float(p[1]), float(p[2]))
        return k[0], k[4], (k[1], k[2], k[3]), (k[5], k[6], k[7])

    def bindings(self) -> dict:
        """Names usable in weight expressions: f, g and H = f^2 + g^2."""
        h = BinOp("+", Pow(self.f, 2.0), Pow(self.g, 2.0))
        return {"f": self.f, "g": self.g, "H": h}


@dataclass(frozen=True, eq=False)
class PathPolyline:
    """Closed polyline through points of the path, in the oriented direction.

    ``cumulative[i]`` is the arc length from node 0 to node i; the final
    entry is the total length L (back at node 0).
    """

    nodes: np.ndarray
    cumulative: np.ndarray
    length: float
    closure_gap: float
    step: float
    orientation_sign: int
    offpath_tol: float

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.cumulative)

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class Jet:
    """Everything the field needs at one point."""

    f: float
    g: float
    grad_f: Vec3
    grad_g: Vec3
    v: Vec3          # V_β
    curl: Vec3       # axial vector of dβ
    sign: int        # orientation sign applied to ∇f × ∇g

    @property
    def H(self) -> float:
        return self.f * self.f + self.g * self.g

    @property
    def grad_H(self) -> Vec3:
        return add(scale(2.0 * self.f, self.grad_f), scale(2.0 * self.g, self.grad_g))

    @property
    def t_raw(self) -> Vec3:
        return cross(self.grad_f, self.grad_g)

    @property
    def t(self) -> Vec3:
        return scale(float(self.sign), self.t_raw)

    @property
    def lam(self) -> float:
        return dot(self.v, self.curl)


@dataclass(frozen=True, eq=False)
class Scene:
    constraint: PfaffianConstraint
    loop: ImplicitLoop
    polyline: PathPolyline
    numerics: Numerics = field(default_factory=Numerics)
    chart_angle: Expr | None = None
    weights: dict = field(default_factory=lambda: {"mode": "default"})
    name: str = "scene"

    @classmethod
    def build(cls, constraint: PfaffianConstraint, loop: ImplicitLoop,
              numerics: Numerics | None = None, chart_angle: Expr | None = None,
              weights: dict | None = None, name: str = "scene") -> "Scene":
        """Trace the path, freeze its orientation and assemble the scene."""
        numerics = numerics or Numerics()
        poly = trace_path(loop, numerics.trace_step, constraint.beta)
        loop = replace(loop, orientation_sign=poly.orientation_sign)
        return cls(constraint, loop, poly, numerics, chart_angle,
                   dict(weights or {"mode": "default"}), name)

    @property
    def beta(self) -> OneForm:
        return self.constraint.beta

    @property
    def delta(self) -> float:
        return self.loop.delta

    @property
    def sign(self) -> int:
        return self.loop.orientation_sign

    @cached_property
    def kernel(self):
        """Scalar kernel for f, g, b1, b2, b3 with gradients (20 outputs)."""
        return compile_kernel([self.loop.f, self.loop.g, *self.beta.coefficients],
                              grads=True, name="scene")

    @cached_property
    def vkernel(self):
        return compile_kernel([self.loop.f, self.loop.g, *self.beta.coefficients],
                              grads=True, vectorized=True, name="scene_batch")

    @cached_property
    def chart_kernel(self):
        if self.chart_angle is None:
            return None
        return compile_kernel([self.chart_angle], grads=False, name="chart")

    def jet(self, p) -> Jet:
        return jet_from_kernel(self.kernel.fn(float(p[0]), float(p[1]), float(p[2])), self.sign)

    def batch(self, points: np.ndarray) -> "BatchJet":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return BatchJet(self.vkernel.fn(pts[:, 0], pts[:, 1], pts[:, 2]), self.sign)

    def fg(self, p) -> tuple[float, float]:
        k = self.loop.kernel.fn(float(p[0]), float(p[1]), float(p[2]))
        return k[0], k[4]

    def H(self, p) -> float:
        f, g = self.fg(p)
        return f * f + g * g

    def in_tube(self, p) -> bool:
        return self.H(p) <= self.delta ** 2


def jet_from_kernel(k, sign: int) -> Jet:
    grads = ((k[9], k[10], k[11]), (k[13], k[14], k[15]), (k[17], k[18], k[19]))
    return Jet(k[0], k[4], (k[1], k[2], k[3]), (k[5], k[6], k[7]),
               (k[8], k[12], k[16]), curl_of(grads), sign)


class BatchJet:
    """Vectorized counterpart of :class:`Jet`; every attribute is an (n, 3) or (n,) array."""

    def __init__(self, k, sign: int):
        self.f = k[0]
        self.g = k[4]
        self.grad_f = np.stack(k[1:4], axis=-1)
        self.grad_g = np.stack(k[5:8], axis=-1)
        self.v = np.stack([k[8], k[12], k[16]], axis=-1)
        d1 = np.stack(k[9:12], axis=-1)
        d2 = np.stack(k[13:16], axis=-1)
        d3 = np.stack(k[17:20], axis=-1)
        self.curl = np.stack([d3[:, 1] - d2[:, 2], d1[:, 2] - d3[:, 0], d2[:, 0] - d1[:, 1]], axis=-1)
        self.sign = sign

    @property
    def H(self):
        return self.f * self.f + self.g * self.g

    @property
    def grad_H(self):
        return 2.0 * (self.f[:, None] * self.grad_f + self.g[:, None] * self.grad_g)

    @property
    def t(self):
        return float(self.sign) * np.cross(self.grad_f, self.grad_g)

    @property
    def lam(self):
        return np.einsum("ij,ij->i", self.v, self.curl)


# ---------------------------------------------------------------------------
# ℌ and T

def lyapunov_H(loop: ImplicitLoop, p) -> float:
    f, g, _, _ = loop.residual(p)
    return f * f + g * g


def grad_H(loop: ImplicitLoop, p) -> Vec3:
    f, g, df, dg = loop.residual(p)
    return add(scale(2.0 * f, df), scale(2.0 * g, dg))


def fiber_direction(scene: Scene, p, tol: float = 1e-10) -> Vec3:
    """T = s·(∇f × ∇g); RankDeficient when the gradients are (nearly) parallel."""
    _, _, df, dg = scene.loop.residual(p)
    t = cross(df, dg)
    if norm(t) <= tol * max(norm(df) * norm(dg), 1e-300):
        raise RankDeficient(f"grad f and grad g are parallel at {tuple(p)}")
    return scale(float(scene.sign), t)


# ---------------------------------------------------------------------------
# projection onto the path and tracing

def _min_norm_step(r1, r2, df, dg):
    """Minimum-norm Δ with J Δ = −r for the 2×3 Jacobian J = [∇f; ∇g]."""
    a = dot(df, df)
    b = dot(df, dg)
    c = dot(dg, dg)
    det = a * c - b * b
    if not det > 1e-14 * max(a * c, 1e-300) or not math.isfinite(det):
        return None
    y1 = (c * r1 - b * r2) / det
    y2 = (a * r2 - b * r1) / det
    return (-(y1 * df[0] + y2 * dg[0]), -(y1 * df[1] + y2 * dg[1]), -(y1 * df[2] + y2 * dg[2]))


def find_on_path(loop: ImplicitLoop, guess, tol: float = 1e-10, max_iter: int = 50,
                 target=(0.0, 0.0)) -> Vec3:
    """Gauss–Newton (minimum-norm steps) onto {f = target0, g = target1}."""
    p = vec(guess)
    history = []
    for _ in range(max_iter + 1):
        f, g, df, dg = loop.residual(p)
        r1, r2 = f - target[0], g - target[1]
        res = max(abs(r1), abs(r2))
        history.append(res)
        if not math.isfinite(res):
            raise NoConvergence(f"residual not finite from guess {tuple(guess)}", history)
        if res < tol:
            if res > 1e-3 * tol:
                step = _min_norm_step(r1, r2, df, dg)
                if step is not None:
                    q = add(p, step)
                    f2, g2, _, _ = loop.residual(q)
                    if max(abs(f2 - target[0]), abs(g2 - target[1])) < res:
                        p = q
            return p
        if len(history) > max_iter:
            break
        step = _min_norm_step(r1, r2, df, dg)
        if step is None:
            raise NoConvergence(f"singular Jacobian at {p} (gradients dependent or zero)", history)
        p = add(p, step)
    raise NoConvergence(f"no convergence in {max_iter} iterations from {tuple(guess)}", history)


def solve_on_section(loop: ImplicitLoop, guess, target, anchor, normal,
                     tol: float = 1e-12, max_iter: int = 50) -> Vec3:
    """Newton on f = z1, g = z2, normal·(x − anchor) = 0."""
    p = np.array(vec(guess))
    n = np.array(vec(normal))
    a = np.array(vec(anchor))
    history = []
    for _ in range(max_iter):
        f, g, df, dg = loop.residual(p)
        r = np.array([f - target[0], g - target[1], float(n @ (p - a))])
        history.append(float(np.max(np.abs(r))))
        if history[-1] < tol:
            return vec(p)
        jac = np.array([df, dg, n])
        try:
            p = p - np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("section system singular", history) from exc
    raise NoConvergence("section solve did not converge", history)


def _unit(v):
    n = norm(v)
    return scale(1.0 / n, v)


def _arc_from_chord(chord: float, t0, t1) -> float:
    """Arc length of a smooth segment from its chord and unit end tangents.

    Exact for circular arcs to fifth order in the step.
    """
    c = max(-1.0, min(1.0, dot(t0, t1)))
    a = math.acos(c)
    return chord * (1.0 + a * a / 24.0)


def trace_path(loop: ImplicitLoop, step: float, beta: OneForm | None = None,
               max_steps: int | None = None) -> PathPolyline:
    """Predictor–corrector continuation of the path along ∇f × ∇g.

    Closure is detected when a step crosses the plane through the first node
    normal to the tangent there. When ``beta`` is given the node order is
    chosen so that the majority of nodes have β(T) > 0.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    p0 = find_on_path(loop, loop.seed)
    _, _, df, dg = loop.residual(p0)
    t0 = cross(df, dg)
    if norm(t0) < 1e-10 * max(norm(df) * norm(dg), 1e-300):
        raise TangencyLoss(f"grad f x grad g vanishes at {p0}")
    u0 = _unit(t0)
    if max_steps is None:
        max_steps = 100_000
    nodes = [p0]
    tangents = [u0]
    p, u = p0, u0
    gap = None
    for k in range(1, max_steps + 1):
        q = find_on_path(loop, add(p, scale(step, u)))
        dist = norm(sub(q, p))
        if not (0.2 * step <= dist <= 2.0 * step):
            raise NoConvergence(f"corrector jumped {dist:.3g} for step {step:g} at node {k}")
        _, _, df, dg = loop.residual(q)
        tq = cross(df, dg)
        if norm(tq) < 1e-10 * max(norm(df) * norm(dg), 1e-300):
            raise TangencyLoss(f"grad f x grad g vanishes near {q}")
        uq = _unit(tq)
        if dot(uq, u) < 0.0:
            raise TangencyLoss(f"tangent reversed between nodes {k - 1} and {k}")
        s_prev = dot(sub(p, p0), u0)
        s_new = dot(sub(q, p0), u0)
        if k >= 3 and s_prev < 0.0 <= s_new:
            frac = -s_prev / (s_new - s_prev)
            cross_pt = add(p, scale(frac, sub(q, p)))
            if norm(sub(cross_pt, p0)) <= 2.0 * step:
                on_curve = solve_on_section(loop, cross_pt, (0.0, 0.0), p0, u0)
                gap = norm(sub(on_curve, p0))
                break
        nodes.append(q)
        tangents.append(uq)
        p, u = q, uq
    if gap is None:
        raise NotClosed(f"path did not close within {max_steps} steps of size {step:g}")
    if len(nodes) > 1 and norm(sub(nodes[-1], p0)) < 0.2 * step:
        nodes.pop()
        tangents.pop()
    sign = 1
    if beta is not None:
        votes = 0
        for node, tan in zip(nodes, tangents):
            b = dot(beta.jet(node)[0], tan)
            votes += (b > 0) - (b < 0)
        sign = -1 if votes < 0 else 1
        if sign < 0:
            nodes = [nodes[0]] + nodes[:0:-1]
            tangents = [scale(-1.0, tangents[0])] + [scale(-1.0, t) for t in tangents[:0:-1]]
    arr = np.array(nodes)
    closed = nodes + [nodes[0]]
    tans = tangents + [tangents[0]]
    seg = []
    sag = 0.0
    for i in range(len(nodes)):
        chord = norm(sub(closed[i + 1], closed[i]))
        seg.append(_arc_from_chord(chord, tans[i], tans[i + 1]))
        ang = math.acos(max(-1.0, min(1.0, dot(tans[i], tans[i + 1]))))
        sag = max(sag, chord * ang / 8.0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return PathPolyline(arr, cum, float(cum[-1]), float(gap), float(step), sign,
                        1e-6 + 2.0 * sag)


def theta_on_path(poly: PathPolyline, q, tol: float | None = None) -> float:
    """S¹ coordinate of a point on the path: 2π·(arc length from node 0)/L."""
    a = poly.nodes
    b = np.roll(a, -1, axis=0)
    ab = b - a
    qq = np.asarray(q, dtype=float)
    t = np.einsum("ij,ij->i", qq - a, ab) / np.einsum("ij,ij->i", ab, ab)
    np.clip(t, 0.0, 1.0, out=t)
    d = np.linalg.norm(a + t[:, None] * ab - qq, axis=1)
    i = int(np.argmin(d))
    limit = poly.offpath_tol if tol is None else tol
    if d[i] > limit:
        raise OffPath(f"point {tuple(qq)} is {d[i]:.3e} from the path (limit {limit:.3e})")
    seg = poly.cumulative[i + 1] - poly.cumulative[i]
    s = poly.cumulative[i] + t[i] * seg
    return float((TWO_PI * s / poly.length) % TWO_PI)


def unwrap(angles) -> np.ndarray:
    """Continuous lift of a sequence of angles (nearest branch per step)."""
    return np.unwrap(np.asarray(angles, dtype=float))


def nearest_branch(previous: float, angle: float) -> float:
    """The representative of ``angle`` mod 2π closest to ``previous``."""
    return previous + math.remainder(angle - previous, TWO_PI)


# ---------------------------------------------------------------------------
# tube sampling

def sample_tube(scene: Scene, n: int, seed: int | np.random.Generator | None = None,
                radii: tuple[float, float] | None = None, max_rounds: int = 20):
    """Random tube points with prescribed (f, g) = z, z uniform (by area) in an annulus.

    Each sample starts on a random polyline point and is moved to its target
    residual by minimum-norm Gauss–Newton. Returns ``(points, z)``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(
        scene.numerics.rng_seed if seed is None else seed)
    lo, hi = radii if radii is not None else (0.0, scene.delta)
    poly = scene.polyline
    a = poly.nodes
    b = np.roll(a, -1, axis=0)
    lk = compile_batch_loop(scene)
    pts_out, z_out = [], []
    have = 0
    for _ in range(max_rounds):
        m = max(n - have, 1) + 8
        idx = rng.integers(len(a), size=m)
        s = rng.random(m)
        start = a[idx] + s[:, None] * (b[idx] - a[idx])
        r = np.sqrt(lo * lo + (hi * hi - lo * lo) * rng.random(m))
        ang = TWO_PI * rng.random(m)
        z = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)
        p = start.copy()
        ok = np.ones(m, dtype=bool)
        for _ in range(30):
            f, gf, g, gg = lk(p)
            r1 = f - z[:, 0]
            r2 = g - z[:, 1]
            aa = np.einsum("ij,ij->i", gf, gf)
            bb = np.einsum("ij,ij->i", gf, gg)
            cc = np.einsum("ij,ij->i", gg, gg)
            det = aa * cc - bb * bb
            bad = ~(det > 1e-14 * aa * cc)
            ok &= ~bad
            det = np.where(bad, 1.0, det)
            y1 = (cc * r1 - bb * r2) / det
            y2 = (aa * r2 - bb * r1) / det
            p = p - (y1[:, None] * gf + y2[:, None] * gg)
            if np.all(np.maximum(np.abs(r1), np.abs(r2))[ok] < 1e-14):
                break
        f, _, g, _ = lk(p)
        res = np.maximum(np.abs(f - z[:, 0]), np.abs(g - z[:, 1]))
        ok &= res < 1e-11
        ok &= np.linalg.norm(p - start, axis=1) < 10.0 * max(scene.delta, poly.step)
        pts_out.append(p[ok])
        z_out.append(z[ok])
        have += int(ok.sum())
        if have >= n:
            break
    pts = np.concatenate(pts_out)[:n]
    zz = np.concatenate(z_out)[:n]
    return pts, zz


def compile_batch_loop(scene: Scene):
    k = _batch_loop_kernel(scene.loop)

    def run(p):
        out = k.fn(p[:, 0], p[:, 1], p[:, 2])
        return (out[0], np.stack(out[1:4], axis=-1), out[4], np.stack(out[5:8], axis=-1))
    return run


_LOOP_BATCH_CACHE: dict = {}


def _batch_loop_kernel(loop: ImplicitLoop):
    key = (loop.f, loop.g)
    k = _LOOP_BATCH_CACHE.get(key)
    if k is None:
        k = compile_kernel([loop.f, loop.g], grads=True, vectorized=True, name="loop_batch")
        _LOOP_BATCH_CACHE[key] = k
    return k


# ---------------------------------------------------------------------------
# assumption battery

ANCHOR_KERNEL = "constraint distribution ker(beta) is two-dimensional"
ANCHOR_TRANSVERSAL = "path transverse to ker(beta)"
ANCHOR_NONHOLONOMIC = "complete non-holonomicity: beta ^ d(beta) nowhere zero"
ANCHOR_RATIO = "gradient-ratio bounds: |grad H|^2 / H bounded above and below"


def _witnesses(points, values, order, count=5):
    return [{"point": points[i].tolist(), "value": float(values[i])} for i in order[:count]]


def check_assumptions(scene: Scene, samples: int | None = None, seed: int | None = None) -> Report:
    """Sampled verification of the standing assumptions on the tube."""
    num = scene.numerics
    n = num.tube_samples if samples is None else samples
    pts, _ = sample_tube(scene, n, num.rng_seed if seed is None else seed)
    nodes = scene.polyline.nodes
    bj = scene.batch(np.concatenate([pts, nodes]))
    ns = len(pts)
    vnorm = np.linalg.norm(bj.v, axis=1)
    checks = []

    tol_a = 1e-8
    order = np.argsort(vnorm)
    checks.append(CheckResult(
        "kernel_rank", ANCHOR_KERNEL, bool(vnorm.min() > tol_a),
        {"min_norm_V": vnorm.min(), "samples": len(vnorm)}, {"min_norm_V": tol_a},
        _witnesses(np.concatenate([pts, nodes]), vnorm, order) if vnorm.min() <= tol_a else []))

    nb = bj.v[ns:]
    t = bj.t[ns:]
    bt = np.einsum("ij,ij->i", nb, t)
    denom = np.linalg.norm(nb, axis=1) * np.linalg.norm(t, axis=1)
    ratio = np.where(denom > 0, bt / np.where(denom > 0, denom, 1.0), 0.0)
    tol_b = num.transversality_tol
    failing = np.flatnonzero(ratio <= tol_b)
    nxt = np.roll(ratio, -1)
    flips = np.flatnonzero(np.sign(ratio) * np.sign(nxt) < 0)
    wit = [{"node": int(i), "point": nodes[i].tolist(), "value": float(ratio[i])}
           for i in failing[:8]]
    for i in flips[:8]:
        j = (i + 1) % len(nodes)
        w = ratio[i] / (ratio[i] - ratio[j])
        wit.append({"zero_between_nodes": [int(i), int(j)],
                    "point": (nodes[i] + w * (nodes[j] - nodes[i])).tolist(), "value": 0.0})
    checks.append(CheckResult(
        "transversality", ANCHOR_TRANSVERSAL, bool(failing.size == 0 and flips.size == 0),
        {"min_normalized_beta_T": float(np.abs(ratio).min()), "min_signed": float(ratio.min()),
         "nodes": len(nodes), "failing_nodes": int(failing.size), "sign_changes": int(flips.size)},
        {"min_normalized_beta_T": tol_b}, wit))

    lam = bj.lam
    tol_c = num.lambda_tol
    order = np.argsort(np.abs(lam))
    sign_ok = bool(np.all(lam > 0) or np.all(lam < 0))
    checks.append(CheckResult(
        "nonholonomic", ANCHOR_NONHOLONOMIC, bool(np.abs(lam).min() > tol_c and sign_ok),
        {"min_abs_lambda": np.abs(lam).min(), "lambda_min": lam.min(), "lambda_max": lam.max(),
         "constant_sign": sign_ok},
        {"min_abs_lambda": tol_c},
        _witnesses(np.concatenate([pts, nodes]), lam, order) if np.abs(lam).min() <= tol_c else []))

    h = bj.H[:ns]
    gh = bj.grad_H[:ns]
    keep = h > 0
    r = np.einsum("ij,ij->i", gh[keep], gh[keep]) / h[keep]
    if r.size:
        c1, c2 = float(r.min()), float(r.max())
        spread = c2 / c1 if c1 > 0 else math.inf
    else:
        c1 = c2 = spread = math.nan
    ok_d = bool(r.size > 0 and c1 > 0 and math.isfinite(c2) and spread < 1e4)
    checks.append(CheckResult(
        "gradient_ratio", ANCHOR_RATIO, ok_d,
        {"c1": c1, "c2": c2, "spread": spread, "samples": int(r.size)},
        {"spread_max": 1e4, "c1_min_exclusive": 0.0}))
    return Report("assumptions", checks, {"delta": scene.delta, "samples": n,
                                          "nodes": len(nodes), "path_length": scene.polyline.length})
