"""Acceptance criteria C1 to C10, one PASS/FAIL line each with measured values and wall time.

Run under pytest (lines appear in the "acceptance criteria" summary section)
or directly with ``python tests/test_acceptance.py``.
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from nonholo.calc3 import OneForm, lambda_beta
from nonholo.flow import EventSpec, IntegratorConfig, simulate_gvf, theta_track
from nonholo.gvf import Custom, GuidingField, check_weights
from nonholo.scene import check_assumptions, sample_tube
from nonholo.scenefile import load_scene
from nonholo.verify import (verify_circling, verify_duality, verify_helix, verify_obstruction,
                            verify_projection, verify_return, verify_tangency)

SEED = 0
RUNS = 20


@lru_cache(None)
def golden():
    return load_scene("heisenberg")


@lru_cache(None)
def golden_runs():
    """The 20 default-weight runs shared by C2, C4 and C5, with their simulation time."""
    loaded = golden()
    scene = loaded.scene
    starts, _ = sample_tube(scene, RUNS, SEED, radii=(0.1, math.sqrt(0.2)))
    t0 = time.perf_counter()
    runs = simulate_gvf(scene, loaded.field(), starts, IntegratorConfig(max_time=500.0),
                        EventSpec(1e-8, scene.delta ** 2), theta_every=0)
    return runs, time.perf_counter() - t0


def line(n, ok, limit, elapsed, detail):
    timed = elapsed < limit
    verdict = "PASS" if ok and timed else "FAIL"
    return verdict == "PASS", f"C{n} {verdict} [{elapsed:.2f}s < {limit:g}s: {'yes' if timed else 'no'}] {detail}"


def c1():
    t0 = time.perf_counter()
    r = verify_duality(SEED, 1000, tol=1e-10)
    el = time.perf_counter() - t0
    m = r.measured
    return line(1, r.passed and m["trials"] == 1000, 1.0, el,
                f"duality 1000 trials: max rel det err {m['max_rel_error_det']:.2e}, "
                f"factor err {m['max_rel_error_factor']:.2e} (tol 1e-10)")


def c2():
    runs, _ = golden_runs()
    gf = golden().field()
    t0 = time.perf_counter()
    r = verify_tangency(gf, runs, samples=10_000, seed=SEED, tol=1e-9)
    el = time.perf_counter() - t0
    m = r.measured
    return line(2, r.passed, 5.0, el,
                f"|beta(X)| normalized: samples {m['max_residual_samples']:.2e}, "
                f"{len(runs)} trajectories {m['max_residual_trajectories']:.2e} (tol 1e-9)")


def c3():
    t0 = time.perf_counter()
    scene = golden().scene
    pts, _ = sample_tube(scene, 10_000, SEED)
    lam = scene.batch(pts).lam
    err_golden = float(np.max(np.abs(lam - 2.0)))
    dx3 = OneForm.parse(["0", "0", "1"])
    err_int = max(abs(lambda_beta(dx3, p)) for p in pts[:1000])
    el = time.perf_counter() - t0
    return line(3, err_golden <= 1e-9 and err_int <= 1e-9, 1.0, el,
                f"max |lambda-2| golden {err_golden:.1e}, max |lambda| for dx3 {err_int:.1e} (tol 1e-9)")


def c4():
    runs, el = golden_runs()
    gf = golden().field()
    monotone = all(np.all(np.diff(t.H) < 0) for t in runs)
    reached = sum(t.H[-1] < 1e-8 for t in runs)
    worst = 0.0
    for t in runs:
        fb = gf.batch(t.points)
        gh2 = np.einsum("ij,ij->i", fb.grad_H, fb.grad_H)
        closed = -fb.b * np.einsum("ij,ij->i", fb.v, fb.t) * gh2
        direct = np.einsum("ij,ij->i", fb.grad_H, fb.field)
        keep = closed != 0
        if keep.any():
            worst = max(worst, float(np.max(np.abs(closed - direct)[keep] / np.abs(closed[keep]))))
    h_end = max(t.H[-1] for t in runs)
    ok = monotone and reached == RUNS and worst <= 1e-10
    return line(4, ok, 60.0, el,
                f"H strictly decreasing: {monotone}; reached H<1e-8 in t<=500: {reached}/{RUNS} "
                f"(largest H(500) {h_end:.2e}); dH closed-form rel err {worst:.1e} (tol 1e-10)")


def c5():
    runs, sim = golden_runs()
    scene = golden().scene
    t0 = time.perf_counter()
    results = []
    for t in runs:
        t.theta_hat = theta_track(scene, t.points, scene.numerics.theta_every)
        results.append(verify_circling(t, min_total=4 * math.pi, min_r2=0.5))
    el = sim + time.perf_counter() - t0
    adv = [r.measured["total_advance"] for r in results]
    nondec = sum(bool(r.measured["nondecreasing"]) for r in results)
    fit = sum(r.measured["slope"] > 0 and r.measured["r2"] > 0.5 for r in results)
    return line(5, all(r.passed for r in results), 120.0, el,
                f"non-decreasing {nondec}/{RUNS}, slope>0 & R2>0.5 {fit}/{RUNS}, "
                f"total advance {min(adv):.3f}..{max(adv):.3f} rad (need >= 4pi = {4 * math.pi:.3f})")


def c6():
    t0 = time.perf_counter()
    loaded = golden()
    r = verify_helix(loaded.scene, loaded.field(), levels=(0.0025, 0.01, 0.04))
    el = time.perf_counter() - t0
    adv = ", ".join(f"{a:.4f}" for a in r.measured["advances"])
    return line(6, r.passed, 30.0, el, f"one-revolution advances at H=0.0025,0.01,0.04: {adv}")


def c7():
    t0 = time.perf_counter()
    loaded = golden()
    r = verify_obstruction(loaded.scene, loaded.field(), disks=8, radii=10, angles=20)
    el = time.perf_counter() - t0
    m = r.measured
    return line(7, r.passed is True, 30.0, el,
                f"{m['disks_with_sign_change']}/{m['disks']} disks x {m['points_per_disk']} points with "
                f"both signs of d(theta)(X); dH(X) in [{m['dH_min']:.2e}, {m['dH_max']:.2e}]")


def c8():
    t0 = time.perf_counter()
    scene = golden().scene
    p = verify_projection(scene, samples=8, seed=SEED, idem_tol=2e-8, roundtrip_tol=1e-7)
    r = verify_return(scene)
    el = time.perf_counter() - t0
    t1 = r.measured["return_time"]
    ok = p.passed and r.passed and abs(t1 - 5 * math.pi) <= 1e-5
    return line(8, ok, 30.0, el,
                f"idempotence {p.measured['max_idempotence_error']:.1e} (2e-8), roundtrip "
                f"{p.measured['max_roundtrip_error']:.1e} (1e-7), return time {t1:.9f} vs 5pi "
                f"(err {abs(t1 - 5 * math.pi):.1e}, tol 1e-5)")


def c9():
    t0 = time.perf_counter()
    scene = golden().scene
    pts, _ = sample_tube(scene, 10_000, SEED)
    bj = scene.batch(pts)
    keep = bj.H > 0
    r = np.einsum("ij,ij->i", bj.grad_H, bj.grad_H)[keep] / bj.H[keep]
    el = time.perf_counter() - t0
    lo, hi = float(r.min()), float(r.max())
    ok = 0 < lo <= hi < math.inf and hi / lo < 1e4 and keep.sum() == 10_000
    return line(9, ok, 2.0, el, f"|grad H|^2/H in [{lo:.4g}, {hi:.4g}], max/min {hi / lo:.3g} (< 1e4)")


def c10():
    parts = []
    worst = 0.0
    t0 = time.perf_counter()
    rep = check_assumptions(load_scene("integrable").scene)
    el = time.perf_counter() - t0
    worst = max(worst, el)
    a_fail = rep["transversality"].passed is False
    c_fail = rep["nonholonomic"].passed is False
    parts.append(f"integrable: transversality fails {a_fail}, nonholonomic fails {c_fail}")

    t0 = time.perf_counter()
    flipped = load_scene("sign_flipped")
    s = flipped.scene
    starts, _ = sample_tube(s, 2, SEED, radii=(0.1, math.sqrt(0.2)))
    runs = simulate_gvf(s, flipped.field(), starts, IntegratorConfig(max_time=500.0), theta_every=10)
    circ = [verify_circling(t) for t in runs]
    el = time.perf_counter() - t0
    worst = max(worst, el)
    flip_fail = all(r.passed is False for r in circ)
    decreasing = all(r.measured["total_advance"] < 0 for r in circ)
    adv = ", ".join(f"{r.measured['total_advance']:.3f}" for r in circ)
    parts.append(f"sign-flipped: circling fails {flip_fail}, theta decreasing {decreasing} ({adv})")

    t0 = time.perf_counter()
    g = golden().scene
    w = check_weights(GuidingField(g, Custom.from_texts(g.loop, "0", "sqrt(H)", a_lambda=-1)), seed=SEED)
    el = time.perf_counter() - t0
    worst = max(worst, el)
    bound_fail = w["b_over_H_bounded"].passed is False
    parts.append(f"b=sqrt(H): boundedness fails {bound_fail}")
    ok = a_fail and c_fail and flip_fail and decreasing and bound_fail
    return line(10, ok, 30.0, worst, "; ".join(parts))


CRITERIA = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"C{i}" for i in range(1, 11)])
def test_criterion(criterion, record):
    ok, text = criterion()
    record(text)
    assert ok, text


if __name__ == "__main__":
    for crit in CRITERIA:
        print(crit()[1], flush=True)
