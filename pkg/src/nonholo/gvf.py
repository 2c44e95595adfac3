"""The guiding vector field, its weight strategies, and the weight checks.

    𝒳 = ā·V_β × ∇ℌ  +  b̄·V_β × (T × ∇ℌ)

The first summand (winding) keeps ℌ constant; the second (convergence) gives
dℌ(𝒳) = −b̄·β(T)·‖∇ℌ‖². Both are cross products with V_β, so β(𝒳) = 0
identically. T = s·(∇f × ∇g) with the orientation s frozen at path tracing so
that β(T) > 0 on the path.

The winding weight must satisfy ā·λ_β < 0 for the projected path angle to
increase (see the README for the sign convention). The default pair is
ā = −λ_β, b̄ = ℌ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .calc3 import Vec3, vec
from .connection import horizontal_velocity_batch
from .errors import AssumptionViolated, InputError, MismatchBug, RescaleSingular, SupremumUnstable
from .expr import BinOp, Expr, Num, compile_kernel, evaluate, is_constant, parse, to_text
from .report import CheckResult, Report
from .scene import ImplicitLoop, Scene, check_assumptions, sample_tube

DH_RTOL = 1e-10
RESCALE_TOL = 1e-9

ANCHOR_SIGN = "winding weight orientation: a * lambda_beta < 0"
ANCHOR_B_POSITIVE = "convergence weight positive off the path"
ANCHOR_BOUNDED = "convergence weight comparable to H: sup b/H finite"
ANCHOR_HOLONOMY = "path angle increases: d(beta)(X, radial lift) > 0"


# ---------------------------------------------------------------------------
# weight strategies

@dataclass(frozen=True)
class Default:
    """ā = −λ_β, b̄ = ℌ."""


@dataclass(frozen=True)
class Custom:
    """ā = a(p) + a_lambda·λ_β(p), b̄ = b(p).

    ``a`` and ``b`` are expressions in x1, x2, x3 that may use the names
    f, g and H of the scene's path. ``a_lambda`` allows weights proportional
    to λ_β, which has no closed expression in general.
    """

    a: Expr
    b: Expr
    a_lambda: float = 0.0
    provenance: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_texts(cls, loop: ImplicitLoop, a: str = "0", b: str = "H", a_lambda: float = 0.0) -> "Custom":
        names = loop.bindings()
        return cls(parse(a, names), parse(b, names), float(a_lambda))

    def describe(self) -> dict:
        return {"a": to_text(self.a), "a_lambda": self.a_lambda, "b": to_text(self.b)}


@dataclass(frozen=True)
class Robust:
    """ā built from a sampled supremum so that dβ(𝒳, ∂̄_r) > 0; see :func:`build_robust_weights`."""

    eps0: float = 0.1
    sample_budget: int = 400
    b: Expr | None = None

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.sample_budget < 12:
            raise ValueError("sample_budget must allow at least one sample per annulus")


WeightSpec = Default | Custom | Robust


def weight_spec_from_dict(d: Mapping, loop: ImplicitLoop) -> WeightSpec:
    """Scene-file form: {"mode": "default" | "custom" | "robust", ...}."""
    mode = d.get("mode", "default")
    if mode == "default":
        return Default()
    if mode == "custom":
        return Custom.from_texts(loop, d.get("a", "0"), d.get("b", "H"), d.get("a_lambda", 0.0))
    if mode == "robust":
        b = parse(d["b"], loop.bindings()) if "b" in d else None
        return Robust(float(d.get("eps0", 0.1)), int(d.get("budget", 400)), b)
    raise InputError(f"unknown weight mode {mode!r}")


def _resolve(scene: Scene, spec: WeightSpec) -> Custom:
    if isinstance(spec, Default):
        return Custom(Num(0.0), scene.loop.bindings()["H"], -1.0, {"mode": "default"})
    if isinstance(spec, Robust):
        return build_robust_weights(scene, spec.b, spec.eps0, spec.sample_budget)
    if isinstance(spec, Custom):
        return spec
    raise TypeError(f"not a weight spec: {spec!r}")


# ---------------------------------------------------------------------------
# field

def _parts(k, w, sign, a_lambda):
    """Winding and convergence summands from a scene-kernel row and the weights."""
    f, g = k[0], k[4]
    gh0 = 2.0 * (f * k[1] + g * k[5])
    gh1 = 2.0 * (f * k[2] + g * k[6])
    gh2 = 2.0 * (f * k[3] + g * k[7])
    v0, v1, v2 = k[8], k[12], k[16]
    a = w[0]
    if a_lambda:
        lam = v0 * (k[18] - k[15]) + v1 * (k[11] - k[17]) + v2 * (k[13] - k[10])
        a = a + a_lambda * lam
    b = w[1]
    t0 = sign * (k[2] * k[7] - k[3] * k[6])
    t1 = sign * (k[3] * k[5] - k[1] * k[7])
    t2 = sign * (k[1] * k[6] - k[2] * k[5])
    # V × ∇ℌ
    c0 = v1 * gh2 - v2 * gh1
    c1 = v2 * gh0 - v0 * gh2
    c2 = v0 * gh1 - v1 * gh0
    # V × (T × ∇ℌ)
    u0 = t1 * gh2 - t2 * gh1
    u1 = t2 * gh0 - t0 * gh2
    u2 = t0 * gh1 - t1 * gh0
    d0 = v1 * u2 - v2 * u1
    d1 = v2 * u0 - v0 * u2
    d2 = v0 * u1 - v1 * u0
    return (a * c0, a * c1, a * c2), (b * d0, b * d1, b * d2), a, b


@dataclass(frozen=True)
class FieldBatch:
    points: np.ndarray
    field: np.ndarray
    winding: np.ndarray
    convergence: np.ndarray
    a: np.ndarray
    b: np.ndarray
    lam: np.ndarray
    H: np.ndarray
    grad_H: np.ndarray
    v: np.ndarray
    t: np.ndarray
    f: np.ndarray
    g: np.ndarray
    grad_f: np.ndarray
    grad_g: np.ndarray
    curl: np.ndarray

    @property
    def beta_residual(self) -> np.ndarray:
        """|β(𝒳)| / (‖V_β‖‖𝒳‖), zero where 𝒳 vanishes."""
        num = np.abs(np.einsum("ij,ij->i", self.v, self.field))
        den = np.linalg.norm(self.v, axis=1) * np.linalg.norm(self.field, axis=1)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


class GuidingField:
    """𝒳 for a scene and a resolved weight pair. Immutable after construction."""

    def __init__(self, scene: Scene, weights: WeightSpec | None = None):
        self.scene = scene
        self.spec = weights if weights is not None else Default()
        self.weights: Custom = _resolve(scene, self.spec)

    def __repr__(self):
        return f"GuidingField({self.scene.name!r}, {self.weights.describe()})"

    @cached_property
    def weight_kernel(self):
        return compile_kernel([self.weights.a, self.weights.b], grads=False, name="weights")

    @cached_property
    def weight_vkernel(self):
        return compile_kernel([self.weights.a, self.weights.b], grads=False, vectorized=True,
                              name="weights_batch")

    def with_weights(self, weights: WeightSpec) -> "GuidingField":
        return GuidingField(self.scene, weights)

    # -- pointwise ---------------------------------------------------------
    def _eval(self, p):
        x, y, z = float(p[0]), float(p[1]), float(p[2])
        k = self.scene.kernel.fn(x, y, z)
        w = self.weight_kernel.fn(x, y, z)
        return k, _parts(k, w, self.scene.sign, self.weights.a_lambda)

    def weights_at(self, p) -> tuple[float, float]:
        _, (_, _, a, b) = self._eval(p)
        return a, b

    def winding_component(self, p) -> Vec3:
        return self._eval(p)[1][0]

    def convergence_component(self, p) -> Vec3:
        return self._eval(p)[1][1]

    def eval_field(self, p) -> Vec3:
        _, (wind, conv, _, _) = self._eval(p)
        return (wind[0] + conv[0], wind[1] + conv[1], wind[2] + conv[2])

    def dH_along(self, p) -> float:
        """dℌ(𝒳) in closed form −b̄·β(T)·‖∇ℌ‖², cross-checked against ∇ℌ·𝒳."""
        k, (wind, conv, _, b) = self._eval(p)
        j = self.scene.jet(p)
        gh = j.grad_H
        gh2 = gh[0] ** 2 + gh[1] ** 2 + gh[2] ** 2
        closed = -b * (j.v[0] * j.t[0] + j.v[1] * j.t[1] + j.v[2] * j.t[2]) * gh2
        direct = sum(gh[i] * (wind[i] + conv[i]) for i in range(3))
        size = math.sqrt(gh2) * (math.hypot(*wind) + math.hypot(*conv))
        if abs(closed - direct) > DH_RTOL * size + 1e-300:
            raise MismatchBug(f"dH closed form {closed!r} disagrees with grad H . X = {direct!r} at {tuple(p)}")
        return closed

    def base_angle_rate(self, p) -> float:
        """dφ(𝒳) for the base angle φ = atan2(g, f)."""
        k, (wind, conv, _, _) = self._eval(p)
        f, g = k[0], k[4]
        h = f * f + g * g
        if h == 0.0:
            raise RescaleSingular("base angle undefined on the path (H = 0)")
        x = (wind[0] + conv[0], wind[1] + conv[1], wind[2] + conv[2])
        df = k[1] * x[0] + k[2] * x[1] + k[3] * x[2]
        dg = k[5] * x[0] + k[6] * x[1] + k[7] * x[2]
        return (f * dg - g * df) / h

    def time_rescale(self, p) -> Vec3:
        """𝒳 / |dφ(𝒳)|: unit base angular speed."""
        rate = self.base_angle_rate(p)
        if abs(rate) < RESCALE_TOL:
            raise RescaleSingular(f"base angular speed {rate:.3e} below {RESCALE_TOL:g} at {tuple(p)}")
        x = self.eval_field(p)
        c = 1.0 / abs(rate)
        return (c * x[0], c * x[1], c * x[2])

    # -- ODE right-hand sides ---------------------------------------------
    def rhs(self, part: str = "full"):
        """Fast closure ``rhs(t, y) -> Vec3`` for ``full``, ``winding``, ``convergence`` or ``rescaled``."""
        kfn = self.scene.kernel.fn
        wfn = self.weight_kernel.fn
        sign = self.scene.sign
        al = self.weights.a_lambda
        if part == "full":
            def rhs(t, y):
                k = kfn(y[0], y[1], y[2])
                wind, conv, _, _ = _parts(k, wfn(y[0], y[1], y[2]), sign, al)
                return (wind[0] + conv[0], wind[1] + conv[1], wind[2] + conv[2])
        elif part == "winding":
            def rhs(t, y):
                return _parts(kfn(y[0], y[1], y[2]), wfn(y[0], y[1], y[2]), sign, al)[0]
        elif part == "convergence":
            def rhs(t, y):
                return _parts(kfn(y[0], y[1], y[2]), wfn(y[0], y[1], y[2]), sign, al)[1]
        elif part == "rescaled":
            def rhs(t, y):
                return self.time_rescale(y)
        else:
            raise ValueError(f"unknown field part {part!r}")
        return rhs

    # -- batch -------------------------------------------------------------
    def batch(self, points) -> FieldBatch:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        bj = self.scene.batch(pts)
        n = len(pts)
        wa, wb = self.weight_vkernel.fn(pts[:, 0], pts[:, 1], pts[:, 2])
        a = np.broadcast_to(np.asarray(wa, dtype=float), (n,)).copy()
        b = np.broadcast_to(np.asarray(wb, dtype=float), (n,)).copy()
        lam = bj.lam
        if self.weights.a_lambda:
            a = a + self.weights.a_lambda * lam
        gh = bj.grad_H
        wind = a[:, None] * np.cross(bj.v, gh)
        conv = b[:, None] * np.cross(bj.v, np.cross(bj.t, gh))
        return FieldBatch(pts, wind + conv, wind, conv, a, b, lam, bj.H, gh, bj.v, bj.t,
                          bj.f, bj.g, bj.grad_f, bj.grad_g, bj.curl)


# module-level wrappers
def eval_field(gf: GuidingField, p) -> Vec3:
    return gf.eval_field(p)


def winding_component(gf: GuidingField, p) -> Vec3:
    return gf.winding_component(p)


def convergence_component(gf: GuidingField, p) -> Vec3:
    return gf.convergence_component(p)


def dH_along(gf: GuidingField, p) -> float:
    return gf.dH_along(p)


def time_rescale(gf: GuidingField, p) -> Vec3:
    return gf.time_rescale(p)


# ---------------------------------------------------------------------------
# checks and the robust construction

def _radial_holonomy(fb: FieldBatch, vectors: np.ndarray) -> np.ndarray:
    """dβ(u, ∂̄_r) for each row u of ``vectors``, with ∂̄_r the lift of the base velocity (f, g)."""
    radial = horizontal_velocity_batch(fb, np.stack([fb.f, fb.g], axis=-1))
    return np.einsum("ij,ij->i", fb.curl, np.cross(vectors, radial))


def _witness(points, values, order, count=5):
    return [{"point": points[i].tolist(), "value": float(values[i])} for i in order[:count]]


def _annulus_bounds(lo_h: float = 1e-8, hi_h: float = 1e-2, count: int = 7):
    edges = np.logspace(math.log10(lo_h), math.log10(hi_h), count + 1)
    return list(zip(edges[:-1], edges[1:]))


def check_weights(gf: GuidingField, budget: int | None = None, seed: int | None = None) -> Report:
    """Sampled verification of the weight conditions on the tube.

    Boundedness of b̄/ℌ is judged on ℌ-annuli log-spaced over [1e-8, 1e-2]:
    it passes when the per-annulus maxima vary by less than 10³ and show no
    growth as ℌ shrinks (log-log slope of the maxima against ℌ ≥ −0.1).
    """
    scene = gf.scene
    n = budget or scene.numerics.weight_samples
    rng = np.random.default_rng(scene.numerics.rng_seed if seed is None else seed)
    pts, _ = sample_tube(scene, n, rng)
    fb = gf.batch(pts)
    checks = []

    prod = fb.a * fb.lam
    order = np.argsort(-prod)
    checks.append(CheckResult(
        "weight_orientation", ANCHOR_SIGN, bool(np.all(prod < 0)),
        {"max_a_lambda": prod.max(), "min_a_lambda": prod.min(), "samples": len(prod)},
        {"max_a_lambda": "< 0"},
        _witness(pts, prod, order) if prod.max() >= 0 else []))

    off = fb.H > 1e-10
    bvals = fb.b[off]
    ok_b = bool(np.all(bvals > 0)) if bvals.size else True
    checks.append(CheckResult(
        "b_positive", ANCHOR_B_POSITIVE, ok_b,
        {"min_b": bvals.min() if bvals.size else math.nan, "samples": int(off.sum())},
        {"min_b": "> 0", "H_floor": 1e-10},
        [] if ok_b else _witness(pts[off], bvals, np.argsort(bvals))))

    per = max(n // 7, 20)
    maxima, mids, wit = [], [], []
    for lo, hi in _annulus_bounds():
        ap, _ = sample_tube(scene, per, rng, radii=(math.sqrt(lo), math.sqrt(hi)))
        ab = gf.batch(ap)
        ratio = ab.b / ab.H
        i = int(np.argmax(ratio))
        maxima.append(float(ratio[i]))
        mids.append(math.sqrt(lo * hi))
        wit.append({"point": ap[i].tolist(), "H": float(ab.H[i]), "b_over_H": float(ratio[i])})
    maxima_arr = np.array(maxima)
    positive = maxima_arr > 0
    spread = (maxima_arr.max() / maxima_arr[positive].min()) if positive.any() else math.inf
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(np.array(mids)[positive]), np.log(maxima_arr[positive]), 1)[0])
    else:
        slope = math.nan
    bounded = bool(np.isfinite(spread) and spread < 1e3 and slope >= -0.1)
    checks.append(CheckResult(
        "b_over_H_bounded", ANCHOR_BOUNDED, bounded,
        {"max_b_over_H": maxima_arr.max(), "spread": spread, "loglog_slope": slope,
         "annulus_maxima": maxima},
        {"spread": 1e3, "loglog_slope": ">= -0.1", "H_range": [1e-8, 1e-2]},
        [] if bounded else wit))

    if off.any():
        sub = _select(fb, off)
        hol = _radial_holonomy(sub, sub.field) / sub.H
        ok_h = bool(np.all(hol > 0))
        checks.append(CheckResult(
            "holonomy_sign", ANCHOR_HOLONOMY, ok_h,
            {"min_dbeta_over_H": hol.min(), "max_dbeta_over_H": hol.max(), "samples": len(hol)},
            {"min_dbeta_over_H": "> 0"},
            [] if ok_h else _witness(sub.points, hol, np.argsort(hol))))
    return Report("weights", checks, {"weights": gf.weights.describe(), "samples": n})


def _select(fb: FieldBatch, mask) -> FieldBatch:
    return FieldBatch(*(getattr(fb, name)[mask] for name in FieldBatch.__dataclass_fields__))


def robust_ratio_annuli(scene: Scene, budget: int = 400, seed: int | None = None, annuli: int = 12):
    """Per-annulus maxima of |dβ(V×(T×∇ℌ), ∂̄_r)| / |dβ(V×∇ℌ, ∂̄_r)|.

    Annuli are ℌ ∈ [δ²/2^k, δ²/2^(k−1)], k = 1..annuli. Returns
    (maxima, sign of the denominator, witnesses).
    """
    rng = np.random.default_rng(scene.numerics.rng_seed if seed is None else seed)
    probe = GuidingField(scene, Custom(Num(1.0), Num(1.0)))
    d2 = scene.delta ** 2
    per = max(budget // annuli, 8)
    maxima, signs, wit = [], [], []
    for k in range(1, annuli + 1):
        lo, hi = d2 / 2 ** k, d2 / 2 ** (k - 1)
        pts, _ = sample_tube(scene, per, rng, radii=(math.sqrt(lo), math.sqrt(hi)))
        fb = probe.batch(pts)
        num = _radial_holonomy(fb, fb.convergence)
        den = _radial_holonomy(fb, fb.winding)
        signs.append(np.sign(den))
        ratio = np.abs(num) / np.abs(den)
        i = int(np.argmax(ratio))
        maxima.append(float(ratio[i]))
        wit.append({"point": pts[i].tolist(), "H": float(fb.H[i]), "ratio": float(ratio[i])})
    signs = np.concatenate(signs)
    if np.any(signs == 0) or abs(signs.sum()) != len(signs):
        raise AssumptionViolated("d(beta)(V x grad H, radial lift) changes sign on the tube")
    return np.array(maxima), int(signs[0]), wit


def build_robust_weights(scene: Scene, b: Expr | None = None, eps0: float = 0.1, budget: int = 400,
                         seed: int | None = None) -> Custom:
    """ā = σ·(S'·b̄ + ε0) with S' the sampled sup of the holonomy ratio and σ the winding sign.

    With this choice dβ(𝒳, ∂̄_r) = ā·D + b̄·N ≥ ε0·|D| > 0 wherever the
    sample supremum bounds |N|/|D|.
    """
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    rep = check_assumptions(scene)
    if not rep.passed:
        failed = [c.check for c in rep.checks if c.passed is False]
        raise AssumptionViolated(f"scene fails the standing assumptions: {', '.join(failed)}", rep)
    b = b if b is not None else scene.loop.bindings()["H"]
    bgf = GuidingField(scene, Custom(Num(0.0), b))
    pts, _ = sample_tube(scene, min(budget, 400), seed if seed is not None else scene.numerics.rng_seed)
    bvals = bgf.batch(pts).b
    if np.any(bvals < 0):
        raise AssumptionViolated("convergence weight b is negative somewhere on the tube")
    maxima, sigma, wit = robust_ratio_annuli(scene, budget, seed)
    top = np.sort(maxima)[-3:]
    floor = 1e-12 * max(1.0, float(top.max()))
    if top.max() > floor and (top.min() <= floor or top.max() / top.min() > 10.0):
        raise SupremumUnstable("top annulus estimates disagree by more than 10x", maxima.tolist())
    sup = float(maxima.max())
    zero_b = is_constant(b) and evaluate(b, (0.0, 0.0, 0.0)) == 0.0
    inner = Num(eps0) if sup == 0.0 or zero_b else BinOp("+", BinOp("*", Num(sup), b), Num(eps0))
    a = BinOp("*", Num(float(sigma)), inner)
    return Custom(a, b, 0.0, {"mode": "robust", "sup_ratio": sup, "sign": sigma, "eps0": eps0,
                              "annulus_maxima": maxima.tolist(), "witnesses": wit})
