import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import build, scene_dict
from nonholo.errors import NoConvergence, NotClosed, RankDeficient, TangencyLoss
from nonholo.scene import (ImplicitLoop, check_assumptions, fiber_direction, find_on_path, grad_H,
                           lyapunov_H, sample_tube, theta_on_path, trace_path, unwrap)

CIRCLE = ImplicitLoop.from_texts("x1^2 + x2^2 - 1", "x3", (1, 0, 0), 0.5)


def test_find_on_path():
    p = find_on_path(CIRCLE, (1.1, 0, 0.05))
    assert np.allclose(p, (1, 0, 0), atol=1e-9)
    assert np.allclose(find_on_path(CIRCLE, (0.6, 0.8, 0.0)), (0.6, 0.8, 0.0), atol=1e-12)
    with pytest.raises(NoConvergence):
        find_on_path(CIRCLE, (0, 0, 0))


def test_trace_length_and_orientation(golden):
    poly = trace_path(CIRCLE, 0.05, golden.beta)
    assert poly.length == pytest.approx(2 * math.pi, rel=1e-3)
    n = poly.nodes
    assert np.max(np.abs(n[:, 0] ** 2 + n[:, 1] ** 2 - 1)) < 1e-8
    assert np.max(np.abs(n[:, 2])) < 1e-8
    assert poly.closure_gap < 1e-6 * poly.length
    seg = poly.segment_lengths
    assert seg.min() >= 0.2 * 0.05 and seg.max() <= 2 * 0.05
    ang = np.unwrap(np.arctan2(n[:, 1], n[:, 0]))
    assert np.all(np.diff(ang) > 0)


def test_trace_too_coarse():
    wiggly = ImplicitLoop.from_texts("x1^2 + x2^2 - 1", "x3 - 0.05*sin(40*atan2(x2, x1))", (1, 0, 0), 0.01)
    with pytest.raises((NotClosed, NoConvergence, TangencyLoss)):
        trace_path(wiggly, 2.0)


def test_lyapunov():
    assert lyapunov_H(CIRCLE, (1, 0, 0)) == 0
    assert grad_H(CIRCLE, (0, 1, 0)) == (0, 0, 0)
    assert lyapunov_H(CIRCLE, (1.1, 0, 0)) == pytest.approx(0.0441)
    assert grad_H(CIRCLE, (1.1, 0, 0)) == pytest.approx((0.924, 0, 0))


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-2, 2)] * 3))
def test_grad_H_matches_differences(p):
    h = 1e-6
    fd = []
    for i in range(3):
        a = list(p)
        b = list(p)
        a[i] += h
        b[i] -= h
        fd.append((lyapunov_H(CIRCLE, a) - lyapunov_H(CIRCLE, b)) / (2 * h))
    assert np.allclose(grad_H(CIRCLE, p), fd, atol=1e-6 * (1 + np.linalg.norm(fd)))


def test_fiber_direction(golden):
    assert fiber_direction(golden, (1, 0, 0)) == pytest.approx((0, 2, 0))
    raw = golden.jet((1, 0, 0)).t_raw
    assert raw == pytest.approx((0, -2, 0))
    with pytest.raises(RankDeficient):
        fiber_direction(golden, (0, 0, 0))


def test_fiber_direction_scaling():
    raw = scene_dict()
    raw["path"]["f"] = "3*(x1^2 + x2^2 - 1)"
    s = build(raw).scene
    t = fiber_direction(s, (1, 0, 0))
    assert t == pytest.approx((0, 6, 0))
    assert np.dot(s.jet((1, 0, 0)).v, t) > 0


def test_assumptions_golden(golden):
    rep = check_assumptions(golden)
    assert rep.passed
    lam = rep["nonholonomic"].measured
    assert lam["lambda_min"] == pytest.approx(2, abs=1e-9)
    assert lam["lambda_max"] == pytest.approx(2, abs=1e-9)


def test_assumptions_integrable(integrable):
    rep = check_assumptions(integrable.scene)
    assert rep["transversality"].passed is False
    assert rep["nonholonomic"].passed is False
    assert rep["nonholonomic"].witness


def test_assumptions_vertical_circle(vertical):
    rep = check_assumptions(vertical.scene)
    tr = rep["transversality"]
    assert tr.passed is False
    zeros = [w for w in tr.witness if "zero_between_nodes" in w]
    assert len(zeros) == 2
    for w in zeros:
        assert abs(w["point"][0]) < 0.05


def test_assumption_checks_monotone_in_delta(golden):
    raw = scene_dict()
    for d in (0.5, 0.3, 0.1):
        raw["path"]["delta"] = d
        rep = check_assumptions(build(raw).scene, 500)
        assert rep["kernel_rank"].passed and rep["nonholonomic"].passed


def test_theta_on_path(golden):
    poly = golden.polyline
    assert theta_on_path(poly, poly.nodes[0]) == 0
    ang = theta_on_path(poly, (-1.0, 0.0, 0.0))
    assert ang == pytest.approx(math.pi, abs=2 * math.pi * poly.step / poly.length)


def test_unwrap_is_continuous():
    raw = np.array([3.0, 3.1, -3.1, -3.0, 3.1])
    u = unwrap(raw)
    assert np.all(np.abs(np.diff(u)) < 1)


def test_retrace_from_another_node(golden):
    raw = scene_dict()
    node = golden.polyline.nodes[len(golden.polyline) // 3]
    raw["path"]["seed"] = [float(x) for x in node]
    other = build(raw).scene
    assert other.polyline.length == pytest.approx(golden.polyline.length, rel=1e-6)
    assert other.sign == golden.sign


def test_gradient_ratio_bounds(golden):
    pts, _ = sample_tube(golden, 10_000, 1)
    bj = golden.batch(pts)
    keep = bj.H > 0
    r = np.einsum("ij,ij->i", bj.grad_H, bj.grad_H)[keep] / bj.H[keep]
    assert 0 < r.min() <= r.max() < math.inf
    assert r.max() / r.min() < 1e4


def test_tube_samples_respect_radius(golden):
    pts, z = sample_tube(golden, 200, 3, radii=(0.1, 0.45))
    h = golden.batch(pts).H
    assert np.allclose(h, np.sum(z ** 2, axis=1), atol=1e-10)
    assert h.min() >= 0.01 - 1e-12 and h.max() <= 0.2025 + 1e-12
