import math

import numpy as np
import pytest
from conftest import random_params
from hypothesis import given
from hypothesis import strategies as st

from drivermodel.edm import (DegenerateReference, EdmMode, EdmParams, EdmState, ReferenceProfile,
                             SimulationTimeout, edm_derivative, edm_mode, generate_reference, replay,
                             simulate_edm)
from drivermodel.scenario import RouteMap, StopKind, StopPoint

P = EdmParams(a=1.5, b=2.0, delta=4.0, theta0=0.0, s_brake=50.0)

param_st = st.builds(EdmParams, a=st.floats(0.8, 2.5), b=st.floats(1.0, 3.5), delta=st.floats(1.0, 6.0),
                     theta0=st.floats(0.0, 2.0), s_brake=st.floats(20.0, 80.0))


def test_mode_examples():
    assert edm_mode(P, EdmState(5.0), 15.0) is EdmMode.ACCELERATE
    assert edm_mode(P, EdmState(15.0), 15.0) is EdmMode.DECELERATE
    assert edm_mode(P, EdmState(10.0), 15.0, dist_to_stop=20.0) is EdmMode.STOP


def test_derivative_examples():
    assert edm_derivative(P, EdmState(0.0), 20.0) == 1.5
    q = EdmParams(1.5, 2.0, 4.0, 1.0, 50.0)
    assert edm_derivative(q, EdmState(14.0), 15.0) == pytest.approx(0.0, abs=1e-15)
    assert edm_derivative(P, EdmState(10.0), 15.0, dist_to_stop=25.0) == pytest.approx(-2.0, rel=1e-15)


def test_degenerate_reference():
    with pytest.raises(DegenerateReference):
        edm_derivative(EdmParams(1, 1, 2, 2.0, 30), EdmState(1.0), 1.5)


@given(param_st, st.floats(3.0, 30.0), st.floats(0.0, 1.0))
def test_accelerate_branch_sign(p, v_r, frac):
    ref = v_r - p.theta0
    v = frac * v_r * 0.999
    d = edm_derivative(p, EdmState(v), v_r)
    if v < ref - 1e-9:
        assert d > 0
    elif v > ref + 1e-9:
        assert d < 0


@given(param_st, st.floats(3.0, 30.0), st.floats(1.0, 3.0))
def test_decelerate_branch_sign(p, v_r, ratio):
    assert edm_derivative(p, EdmState(v_r * ratio), v_r) <= 0


@given(param_st, st.floats(0.5, 30.0), st.floats(0.2, 19.0), st.floats(0.01, 10.0))
def test_stop_magnitude_decreases_with_distance(p, v, d1, gap):
    p = EdmParams(p.a, p.b, p.delta, p.theta0, 80.0)
    near = edm_derivative(p, EdmState(v), 15.0, dist_to_stop=d1)
    far = edm_derivative(p, EdmState(v), 15.0, dist_to_stop=d1 + gap)
    assert abs(near) >= abs(far)


@pytest.mark.parametrize("bad", [dict(a=0), dict(b=-1), dict(delta=0), dict(theta0=-0.1), dict(s_brake=0)])
def test_param_validation(bad):
    base = dict(a=1.0, b=1.0, delta=2.0, theta0=0.5, s_brake=30.0)
    base.update(bad)
    with pytest.raises(ValueError):
        EdmParams(**base)


def test_param_array_round_trip():
    assert EdmParams.from_array(P.as_array()) == P


def _rk4_oracle(p: EdmParams, v_r: float, v0: float, dt: float, n: int) -> list[float]:
    """Independent scalar integration of the accelerate/decelerate branches."""
    ref = v_r - p.theta0

    def f(v):
        if v < v_r:
            return p.a * (1.0 - (v / ref) ** p.delta)
        return -p.b * (1.0 - (ref / v) ** p.delta)

    out, v = [v0], v0
    for _ in range(n):
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        v = max(v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)
        out.append(v)
    return out


def test_single_zone_converges_monotonically():
    route = RouteMap(20000.0, [(0.0, 20.0)])
    p = EdmParams(1.5, 2.0, 4.0, 1.0, 40.0)
    tr = simulate_edm(p, route, duration=150.0)
    assert np.all(np.diff(tr.v) >= -1e-12)
    assert abs(tr.v[-1] - 19.0) < 0.01 * 19.0
    fine = _rk4_oracle(p, 20.0, 0.0, 0.001, 30000)[::100]
    n = len(fine)
    assert np.max(np.abs(tr.v[:n] - np.array(fine))) < 0.05


def test_zero_duration_gives_initial_state(flat_route, params):
    tr = simulate_edm(params, flat_route, duration=0.0, v0=3.0)
    assert len(tr) == 1
    assert tr.v[0] == 3.0 and tr.positions[0] == 0.0


def test_stop_sign_slows_to_rolling_speed(stop_route, params):
    tr = simulate_edm(params, stop_route)
    k = int(np.argmax(tr.positions >= 500.0))
    assert tr.v[k] <= 0.5
    assert tr.positions[-1] >= 1000.0


def test_stop_dwell_holds_for_two_seconds(stop_route, params):
    tr = simulate_edm(params, stop_route)
    at_stop = (tr.positions > 490.0) & (tr.positions < 500.5)
    assert at_stop.sum() * tr.dt >= 2.0


def test_deterministic(stop_route, params):
    a = simulate_edm(params, stop_route)
    b = simulate_edm(params, stop_route)
    np.testing.assert_array_equal(a.features, b.features)


def test_timeout_carries_partial_trace(flat_route):
    slow = EdmParams(0.8, 1.0, 1.0, 0.0, 20.0)
    with pytest.raises(SimulationTimeout) as err:
        simulate_edm(slow, flat_route, max_time=5.0)
    assert len(err.value.trace) == 51


def test_trace_consistency(stop_route, params):
    tr = simulate_edm(params, stop_route)
    assert tr.consistency_violation() < 1e-9
    np.testing.assert_array_equal(tr.err, tr.v_ref - tr.v)


def test_generate_reference_examples(stop_route):
    rng = np.random.default_rng(3)
    cals = [random_params(rng) for _ in range(10)]
    profiles = generate_reference(cals, stop_route)
    assert len(profiles) == 10
    assert {p.dt for p in profiles} == {0.1}
    again = generate_reference(cals[:1] * 2, stop_route)
    np.testing.assert_array_equal(again[0].v_ref, again[1].v_ref)
    zero_offset = EdmParams(1.5, 2.0, 4.0, 0.0, 40.0)
    prof = generate_reference([zero_offset], stop_route)[0]
    assert prof.v_ref.max() <= stop_route.max_limit + 1e-9


def test_reference_profile_validation():
    with pytest.raises(ValueError):
        ReferenceProfile(np.array([]), 0.1)
    with pytest.raises(ValueError):
        ReferenceProfile(np.array([1.0, -1.0]), 0.1)
    with pytest.raises(ValueError):
        ReferenceProfile(np.array([1.0, 2.0]), 0.1, positions=np.array([5.0, 1.0]))


def test_profile_tracking_follows_profile(flat_route, params):
    prof = ReferenceProfile(np.full(2000, 10.0), 0.1)
    tr = simulate_edm(params, flat_route, prof, duration=100.0)
    assert tr.v[-1] == pytest.approx(10.0 - params.theta0, rel=0.01)
    np.testing.assert_allclose(tr.v_ref, 10.0)


def test_replay_reproduces_source(stop_route, params):
    prof = generate_reference([params], stop_route)[0].time_indexed()
    tr = simulate_edm(params, stop_route, prof)
    v = replay(params, tr, stop_route)
    assert len(v) == len(tr)
    assert math.sqrt(np.mean((v - tr.v) ** 2)) < 1e-9
