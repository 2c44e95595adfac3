"""Vector algebra and exterior calculus on R^3 for a single Pfaffian form.

2-forms are carried as their axial vector: for ``dβ`` that is ``curl(V_β)``,
so ``dβ(u, w) = curl · (u × w)`` and ``β ∧ dβ = (V_β · curl) dx1∧dx2∧dx3``.
Vectors are plain 3-tuples of floats; the helpers below avoid numpy in
scalar hot paths where the call overhead would dominate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DegenerateForm, NotTangent
from .expr import Expr, compile_kernel, eval_grad, evaluate, parse

Vec3 = tuple  # (float, float, float)


def vec(p: Sequence[float]) -> Vec3:
    return (float(p[0]), float(p[1]), float(p[2]))


def dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b) -> Vec3:
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def norm(a) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def add(a, b) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def sub(a, b) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def scale(c: float, a) -> Vec3:
    return (c * a[0], c * a[1], c * a[2])


def triple(a, b, c) -> float:
    """det[a; b; c] = a · (b × c)."""
    return dot(a, cross(b, c))


@dataclass(frozen=True)
class OneForm:
    """β = b1 dx1 + b2 dx2 + b3 dx3 with expression coefficients."""

    b1: Expr
    b2: Expr
    b3: Expr

    @classmethod
    def parse(cls, texts: Sequence[str], bindings=None) -> "OneForm":
        if len(texts) != 3:
            raise ValueError("a 1-form needs exactly three coefficient expressions")
        return cls(*(parse(t, bindings) for t in texts))

    @property
    def coefficients(self) -> tuple:
        return (self.b1, self.b2, self.b3)

    @cached_property
    def kernel(self):
        return compile_kernel(self.coefficients, grads=True, name="one_form")

    def jet(self, p) -> tuple[Vec3, tuple[Vec3, Vec3, Vec3]]:
        """Coefficient vector and the gradient of each coefficient at ``p``."""
        k = self.kernel.fn(float(p[0]), float(p[1]), float(p[2]))
        return ((k[0], k[4], k[8]),
                ((k[1], k[2], k[3]), (k[5], k[6], k[7]), (k[9], k[10], k[11])))

    def __call__(self, p, w) -> float:
        return dot(riesz(self, p), w)


@dataclass(frozen=True)
class TwoFormAt:
    """A 2-form at one point, stored as its antisymmetric component matrix."""

    matrix: np.ndarray

    @classmethod
    def from_axial(cls, a) -> "TwoFormAt":
        m = np.array([[0.0, a[2], -a[1]],
                      [-a[2], 0.0, a[0]],
                      [a[1], -a[0], 0.0]])
        return cls(m)

    @property
    def axial(self) -> Vec3:
        m = self.matrix
        return (float(m[1, 2]), float(m[2, 0]), float(m[0, 1]))

    def __call__(self, u, w) -> float:
        return dot(self.axial, cross(u, w))


def riesz(beta: OneForm, p) -> Vec3:
    """V_β(p): the coefficient vector of β."""
    k = beta.kernel.fn(float(p[0]), float(p[1]), float(p[2]))
    return (k[0], k[4], k[8])


def curl_of(grads) -> Vec3:
    (d1, d2, d3) = grads
    return (d3[1] - d2[2], d1[2] - d3[0], d2[0] - d1[1])


def exterior_derivative(beta: OneForm, p) -> TwoFormAt:
    """dβ at p with entries ∂_i b_j − ∂_j b_i."""
    _, grads = beta.jet(p)
    m = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            m[i, j] = grads[j][i] - grads[i][j]
    return TwoFormAt(m)


def lambda_beta(beta: OneForm, p) -> float:
    """λ_β with β∧dβ = λ_β dx1∧dx2∧dx3."""
    v, grads = beta.jet(p)
    return dot(v, curl_of(grads))


def dual_of_wedge(tau1: OneForm, tau2: OneForm, p) -> Vec3:
    """Vector field dual to τ1∧τ2 under the standard volume form."""
    return cross(riesz(tau1, p), riesz(tau2, p))


def factor_vector(v, x, tol: float = 1e-10) -> Vec3:
    """u with v × u = x and u ⟂ v, for x ⟂ v."""
    nv = norm(v)
    if nv < tol:
        raise DegenerateForm(f"|V_beta| = {nv:.3e} below {tol:g}")
    nx = norm(x)
    if abs(dot(v, x)) > tol * nx * nv:
        raise NotTangent(f"beta(X) = {dot(v, x):.3e} is not zero (|X|={nx:.3e}, |V|={nv:.3e})")
    return scale(1.0 / (nv * nv), cross(x, v))


def factor_tau(beta: OneForm, x, p, tol: float = 1e-10) -> Vec3:
    """Coefficients of a 1-form τ with V_β × V_τ = x, for x tangent to ker β."""
    try:
        return factor_vector(riesz(beta, p), x, tol)
    except (DegenerateForm, NotTangent) as exc:
        raise type(exc)(f"{exc} at {tuple(p)}") from None


def conserving_field(beta: OneForm, potential: Expr, coefficient: Expr, p) -> Vec3:
    """c · (V_β × ∇F): tangent to ker β and tangent to the level sets of F."""
    _, grad = eval_grad(potential, p)
    c = evaluate(coefficient, p)
    return scale(c, cross(riesz(beta, p), grad))
