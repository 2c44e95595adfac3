import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonholo.errors import NoReturn
from nonholo.flow import EventSpec, IntegratorConfig, integrate, simulate_gvf, winding_flow_period
from nonholo.gvf import Custom, GuidingField
from nonholo.scene import sample_tube
from nonholo.trajectory import Termination
from nonholo.verify import helix_starts


def test_zero_field_is_stationary():
    tr = integrate(lambda p: (0.0, 0.0, 0.0), (1, 2, 3))
    assert tr.message == "stationary"
    assert len(tr) == 2
    assert np.all(tr.points == (1, 2, 3))


def test_exponential_adaptive():
    tr = integrate(lambda p: p, (1, 0, 0), IntegratorConfig(max_time=1.0, abs_tol=1e-10, rel_tol=1e-10))
    assert tr.s[-1] == pytest.approx(1.0, abs=1e-14)
    assert abs(tr.end[0] - math.e) < 1e-8


def test_rk4_fourth_order():
    errs = []
    for h in (0.1, 0.05):
        tr = integrate(lambda p: p, (1, 0, 0), IntegratorConfig(method="rk4", step=h, max_time=1.0))
        errs.append(abs(tr.end[0] - math.e))
    assert 14 < errs[0] / errs[1] < 17


def test_time_dependent_field():
    tr = integrate(lambda t, p: (t, 0.0, 0.0), (0, 0, 0), IntegratorConfig(max_time=2.0))
    assert tr.end[0] == pytest.approx(2.0, rel=1e-10)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(step=0)
    with pytest.raises(ValueError):
        EventSpec(None, None, None, None)


def test_start_on_path_is_converged(golden, golden_field):
    [tr] = simulate_gvf(golden, golden_field, [(1, 0, 0)])
    assert tr.termination is Termination.CONVERGED and len(tr) == 1


def test_out_of_tube_start_rejected(golden, golden_field):
    with pytest.raises(ValueError):
        simulate_gvf(golden, golden_field, [(2, 0, 0)])


def test_reference_start_converges(golden, golden_field):
    # Expected red: with b = H the decay is algebraic (H ~ 1/t), so 1e-8 needs t of order 1e6.
    [tr] = simulate_gvf(golden, golden_field, [(1.3, 0.0, 0.1)], theta_every=0, require_in_tube=False,
                        events=EventSpec(1e-8, None))
    assert np.all(np.diff(tr.H) < 0)
    assert tr.termination is Termination.CONVERGED and tr.H[-1] < 1e-8


def test_converged_event_fires(golden):
    gf = GuidingField(golden, Custom.from_texts(golden.loop, "0", "1", a_lambda=-1))
    [tr] = simulate_gvf(golden, gf, [(1.2, 0.0, 0.1)], theta_every=0)
    assert tr.termination is Termination.CONVERGED
    assert tr.H[-1] == pytest.approx(1e-8, rel=1e-6)


def test_tube_exit_event(golden):
    gf = GuidingField(golden, Custom.from_texts(golden.loop, "0", "-H", a_lambda=-1))
    [tr] = simulate_gvf(golden, gf, [(1.2, 0.0, 0.1)], theta_every=0)
    assert tr.termination is Termination.TUBE_EXIT
    assert tr.H[-1] == pytest.approx(0.25, rel=1e-6)


def test_no_tube_exit_for_nonnegative_b(golden, golden_field):
    starts, _ = sample_tube(golden, 100, 21, radii=(0.05, 0.49))
    runs = simulate_gvf(golden, golden_field, starts, IntegratorConfig(max_time=20.0), theta_every=0)
    assert all(t.termination is not Termination.TUBE_EXIT for t in runs)
    assert all(t.H[-1] < t.H[0] for t in runs)


def test_diagnostic_columns(golden, golden_field):
    [tr] = simulate_gvf(golden, golden_field, [(1.2, 0.1, -0.1)], IntegratorConfig(max_time=30.0),
                        theta_every=5)
    assert np.max(tr.beta_residual) < 1e-9
    assert np.all(np.abs(np.diff(tr.phi_base)) < math.pi / 4)
    s, th, _ = tr.theta_samples()
    assert len(th) >= len(tr) // 5
    assert np.all(np.abs(np.diff(th)) < math.pi)


def test_adaptive_and_fixed_agree(golden, golden_field):
    start = (1.2, 0.1, -0.1)
    a = integrate(golden_field.rhs(), start, IntegratorConfig(max_time=5.0))
    b = integrate(golden_field.rhs(), start, IntegratorConfig(method="rk4", step=5e-4, max_time=5.0))
    assert np.linalg.norm(a.end - b.end) < 10 * 1e-10 * (1 + np.linalg.norm(a.end))


def test_winding_period(golden, golden_field):
    last = 0.0
    for h, p in zip((0.01, 0.1), helix_starts(golden, (0.01, 0.1))):
        dth, tr = winding_flow_period(golden, golden_field, p)
        assert dth > last
        last = dth
        assert np.ptp(tr.H) < 1e-9
        assert tr.H[0] == pytest.approx(h, rel=1e-9)


def test_reversed_winding_turns_the_other_way(golden):
    p = helix_starts(golden, (0.04,))[0]
    fwd = GuidingField(golden, Custom.from_texts(golden.loop, "0", "H", a_lambda=-1))
    rev = GuidingField(golden, Custom.from_texts(golden.loop, "0", "H", a_lambda=1))
    cfg = IntegratorConfig(max_time=1.0)
    a = simulate_gvf(golden, fwd, [p], cfg, EventSpec(None, 0.25), theta_every=0, part="winding")[0]
    b = simulate_gvf(golden, rev, [p], cfg, EventSpec(None, 0.25), theta_every=0, part="winding")[0]
    assert np.sign(a.phi_base[-1] - a.phi_base[0]) == -np.sign(b.phi_base[-1] - b.phi_base[0]) != 0


def test_no_revolution_raises(golden):
    gf = GuidingField(golden, Custom.from_texts(golden.loop, "0", "H"))
    with pytest.raises(NoReturn):
        winding_flow_period(golden, gf, (1.2, 0.0, 0.1), IntegratorConfig(max_time=5.0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_H_strictly_decreasing(golden, golden_field, seed):
    start = sample_tube(golden, 1, seed, radii=(0.05, 0.49))[0]
    [tr] = simulate_gvf(golden, golden_field, start, IntegratorConfig(max_time=15.0), theta_every=0)
    assert np.all(np.diff(tr.H) < 1e-12)
    assert np.max(tr.beta_residual) < 1e-9
