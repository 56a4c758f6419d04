"""Enhanced Driver Model: three-mode longitudinal response to a reference speed."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from enum import Enum

import numba
import numpy as np

from .scenario import AT_STOP_EPS, PHASE_CODE, Phase, RouteMap, StopKind, light_features
from .trace import DriveTrace

DIST_EPS = 1e-3  # floor on distance to stop, m
V_EPS = 1e-3  # floor on speed in the deceleration branch, m/s
REF_FLOOR = 0.1  # floor on v_r - theta0 inside the integrator, m/s
V_STOP_EPS = 0.5
STOP_DWELL = 2.0
MAX_TIME = 1800.0
PREVIEW = 10.0  # advisory look-ahead along the route, m
STIFF_STEP = 0.5  # largest |lambda h| per RK4 substep
MAX_SUBSTEPS = 64

SRC_SPEED_LIMIT = 0
SRC_PROFILE_TIME = 1
SRC_PROFILE_POSITION = 2


class DegenerateReference(ValueError):
    """Reference speed does not exceed the driver's offset."""


class SimulationTimeout(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class EdmMode(str, Enum):
    ACCELERATE = "Accelerate"
    DECELERATE = "Decelerate"
    STOP = "Stop"


@dataclass(frozen=True)
class EdmParams:
    a: float
    b: float
    delta: float
    theta0: float
    s_brake: float

    def __post_init__(self):
        values = astuple(self)
        if not all(math.isfinite(x) for x in values):
            raise ValueError(f"non-finite EDM parameter in {self}")
        if min(self.a, self.b, self.delta, self.s_brake) <= 0 or self.theta0 < 0:
            raise ValueError(f"invalid EDM parameters {self}")

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, arr) -> EdmParams:
        return cls(*(float(x) for x in arr))


@dataclass(frozen=True)
class EdmState:
    v_d: float
    s_pos: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class ReferenceProfile:
    """Advisory speed sampled every ``dt`` starting at t = 0.

    When ``positions`` holds the route positions of the generating run,
    the advisory is displayed by route position (looking ``PREVIEW`` m
    ahead) instead of by elapsed time.
    """

    v_ref: np.ndarray
    dt: float
    positions: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "v_ref", np.asarray(self.v_ref, dtype=float))
        if not self.dt > 0:
            raise ValueError("profile dt must be positive")
        if len(self.v_ref) == 0:
            raise ValueError("empty reference profile")
        if np.any(self.v_ref < 0):
            raise ValueError("reference speeds must be non-negative")
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != self.v_ref.shape or np.any(np.diff(pos) < 0):
                raise ValueError("profile positions must match v_ref and be nondecreasing")
            object.__setattr__(self, "positions", pos)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.v_ref)) * self.dt

    @property
    def duration(self) -> float:
        return (len(self.v_ref) - 1) * self.dt

    @property
    def by_position(self) -> bool:
        return self.positions is not None

    def value_at(self, t):
        return np.interp(t, self.t, self.v_ref)

    def displayed(self, times, positions):
        """Advisory shown to a driver at the given times and route positions."""
        if self.by_position:
            return np.array([_profile_at_position(s + PREVIEW, self.positions, self.v_ref)
                             for s in np.asarray(positions, dtype=float)])
        return self.value_at(times)

    def time_indexed(self) -> ReferenceProfile:
        return ReferenceProfile(self.v_ref, self.dt)


def edm_mode(params: EdmParams, state: EdmState, v_r: float, dist_to_stop: float | None = None) -> EdmMode:
    if dist_to_stop is not None and dist_to_stop < params.s_brake:
        return EdmMode.STOP
    if state.v_d < v_r:
        return EdmMode.ACCELERATE
    return EdmMode.DECELERATE


def edm_derivative(params: EdmParams, state: EdmState, v_r: float, dist_to_stop: float | None = None) -> float:
    """Driver acceleration in m/s^2 for the mode selected by :func:`edm_mode`.

    The stop branch is evaluated as printed, ``-(1/b) (v^2 / 2s)^2``.
    """
    mode = edm_mode(params, state, v_r, dist_to_stop)
    v_d = max(state.v_d, 0.0)
    if mode is EdmMode.STOP:
        q = v_d * v_d / (2.0 * max(dist_to_stop, DIST_EPS))
        return -(q * q) / params.b
    ref = v_r - params.theta0
    if ref <= 0:
        raise DegenerateReference(f"v_r={v_r} does not exceed theta0={params.theta0}")
    if mode is EdmMode.ACCELERATE:
        return params.a * (1.0 - (v_d / ref) ** params.delta)
    return -params.b * (1.0 - (ref / max(v_d, V_EPS)) ** params.delta)


# ---------------------------------------------------------------------------
# compiled integrator


@numba.njit(cache=True)
def _zone_limit(s, zone_starts, zone_limits):
    k = 0
    for i in range(len(zone_starts)):
        if zone_starts[i] <= s:
            k = i
    return zone_limits[k]


@numba.njit(cache=True)
def _profile_value(t, prof_v, prof_dt):
    x = t / prof_dt
    if x <= 0.0:
        return prof_v[0]
    last = len(prof_v) - 1
    if x >= last:
        return prof_v[last]
    i = int(x)
    w = x - i
    return prof_v[i] * (1.0 - w) + prof_v[i + 1] * w


@numba.njit(cache=True)
def _profile_at_position(s, prof_s, prof_v):
    last = len(prof_s) - 1
    if s <= prof_s[0]:
        return prof_v[0]
    if s >= prof_s[last]:
        return prof_v[last]
    i = np.searchsorted(prof_s, s, side="right")
    span = prof_s[i] - prof_s[i - 1]
    if span <= 0.0:
        return prof_v[i]
    w = (s - prof_s[i - 1]) / span
    return prof_v[i - 1] * (1.0 - w) + prof_v[i] * w


@numba.njit(cache=True)
def _delayed_position(tau, s_now, t_now, s_hist, n_rec, dt):
    """Position at time ``tau`` from the recorded history, or the current one if not yet recorded."""
    if tau >= t_now:
        return s_now
    if tau <= 0.0:
        return s_hist[0]
    x = tau / dt
    i = int(x)
    if i + 1 >= n_rec:
        return s_hist[n_rec - 1]
    w = x - i
    return s_hist[i] * (1.0 - w) + s_hist[i + 1] * w


@numba.njit(cache=True)
def _reference(mode, t, s, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v, prof_dt,
               prof_s, delay, preview, total):
    if mode == SRC_PROFILE_TIME:
        return _profile_value(t - delay, prof_v, prof_dt)
    if mode == SRC_PROFILE_POSITION:
        sd = s if delay == 0.0 else _delayed_position(t - delay, s, t_now, s_hist, n_rec, dt)
        return _profile_at_position(sd + preview, prof_s, prof_v)
    return _zone_limit(min(max(s, 0.0), total), zone_starts, zone_limits)


@numba.njit(cache=True)
def _stop_active(j, t, stop_light, light_dur, light_nph, light_code, light_offset):
    li = stop_light[j]
    if li < 0:
        return True
    total = 0.0
    for q in range(light_nph[li]):
        total += light_dur[li, q]
    tau = (t - light_offset[li]) % total
    if tau >= total:
        tau = 0.0
    for q in range(light_nph[li]):
        if tau < light_dur[li, q]:
            return light_code[li, q] > 0.0
        tau -= light_dur[li, q]
    return light_code[li, light_nph[li] - 1] > 0.0


@numba.njit(cache=True)
def _rhs(s, v, vr, p, stop_s):
    a, b, delta, theta0, s_brake = p[0], p[1], p[2], p[3], p[4]
    if v < 0.0:
        v = 0.0
    if stop_s >= 0.0:
        dist = stop_s - s
        if dist < s_brake:
            if dist < DIST_EPS:
                dist = DIST_EPS
            q = v * v / (2.0 * dist)
            return -(q * q) / b
    ref = vr - theta0
    if ref < REF_FLOOR:
        ref = REF_FLOOR
    if v < vr:
        return a * (1.0 - (v / ref) ** delta)
    vd = v if v > V_EPS else V_EPS
    if ref > vd:
        # floored reference above a near-zero speed; the branch must not accelerate
        return 0.0
    return -b * (1.0 - (ref / vd) ** delta)


@numba.njit(cache=True, inline="always")
def _stiffness(s, v, vr, p, stop_s):
    """Magnitude of d(dv/dt)/dv for the active branch."""
    a, b, delta, theta0, s_brake = p[0], p[1], p[2], p[3], p[4]
    v = max(v, 0.0)
    if stop_s >= 0.0 and stop_s - s < s_brake:
        dist = max(stop_s - s, DIST_EPS)
        return v ** 3 / (dist * dist * b) + math.sqrt(v ** 4 / (2.0 * dist ** 3 * b))
    ref = max(vr - theta0, REF_FLOOR)
    if v < vr:
        return a * delta * v ** (delta - 1.0) / ref ** delta if v > 0.0 else 0.0
    vd = max(v, V_EPS)
    return b * delta * ref ** delta / vd ** (delta + 1.0)


@numba.njit(cache=True, inline="always")
def _rk4_step(s, v, t, h, p, stop_s, mode, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v,
              prof_dt, prof_s, delay, preview, total):
    vr = _reference(mode, t, s, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v, prof_dt,
                    prof_s, delay, preview, total)
    k1v = _rhs(s, v, vr, p, stop_s)
    k1s = max(v, 0.0)
    v2 = v + 0.5 * h * k1v
    s2 = s + 0.5 * h * k1s
    vr = _reference(mode, t + 0.5 * h, s2, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v,
                    prof_dt, prof_s, delay, preview, total)
    k2v = _rhs(s2, v2, vr, p, stop_s)
    k2s = max(v2, 0.0)
    v3 = v + 0.5 * h * k2v
    s3 = s + 0.5 * h * k2s
    vr = _reference(mode, t + 0.5 * h, s3, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v,
                    prof_dt, prof_s, delay, preview, total)
    k3v = _rhs(s3, v3, vr, p, stop_s)
    k3s = max(v3, 0.0)
    v4 = v + h * k3v
    s4 = s + h * k3s
    vr = _reference(mode, t + h, s4, t_now, s_hist, n_rec, dt, zone_starts, zone_limits, prof_v, prof_dt,
                    prof_s, delay, preview, total)
    k4v = _rhs(s4, v4, vr, p, stop_s)
    k4s = max(v4, 0.0)
    return (s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


@numba.njit(cache=True)
def _integrate(p, zone_starts, zone_limits, mode, prof_v, prof_dt, prof_s, delay, preview,
               stop_pos, stop_light, light_dur, light_nph, light_code, light_offset,
               total, dt, v0, n_max, noise, v_stop_eps, dwell_steps):
    s_out = np.empty(n_max)
    v_out = np.empty(n_max)
    s_brake = p[4]
    s = 0.0
    v = v0
    s_out[0] = s
    v_out[0] = v
    k = 0
    n_stops = len(stop_pos)
    dwell_left = 0
    dwell_stop = -1
    v_hold = 0.0
    n = 1
    finished = s >= total
    while n < n_max and not finished:
        t = (n - 1) * dt
        while k < n_stops and stop_pos[k] < s - AT_STOP_EPS and dwell_stop != k:
            k += 1
        if dwell_left > 0:
            dwell_left -= 1
            vn = v_hold
            sn = s + v_hold * dt
            if dwell_left == 0:
                k = dwell_stop + 1
                dwell_stop = -1
        else:
            stop_s = -1.0
            j = k
            while j < n_stops and stop_pos[j] - s < s_brake:
                if _stop_active(j, t, stop_light, light_dur, light_nph, light_code, light_offset):
                    stop_s = stop_pos[j]
                    break
                j += 1
            vr = _reference(mode, t, s, t, s_out, n, dt, zone_starts, zone_limits, prof_v, prof_dt,
                            prof_s, delay, preview, total)
            lam = _stiffness(s, v, vr, p, stop_s)
            v_pred = max(v + dt * _rhs(s, v, vr, p, stop_s), 0.0)
            lam = max(lam, _stiffness(s, v_pred, vr, p, stop_s))
            n_sub = int(math.ceil(lam * dt / STIFF_STEP))
            if (v < vr) != (v_pred < vr):
                # the step crosses the accelerate/decelerate switch, where dv/dt jumps
                n_sub = max(n_sub, MAX_SUBSTEPS)
            capped = n_sub > MAX_SUBSTEPS
            n_sub = min(max(n_sub, 1), MAX_SUBSTEPS)
            h = dt / n_sub
            sn, vn = s, v
            for q in range(n_sub):
                sn, vn = _rk4_step(sn, vn, t + q * h, h, p, stop_s, mode, t, s_out, n, dt, zone_starts,
                                   zone_limits, prof_v, prof_dt, prof_s, delay, preview, total)
                if vn < 0.0:
                    vn = 0.0
            if capped:
                # too stiff to resolve: keep the step between v and the branch's fixed point,
                # which the exact solution for a frozen reference never crosses
                target = 0.0 if stop_s >= 0.0 and stop_s - s < s_brake else max(vr - p[3], 0.0)
                lo, hi = min(v, target), max(v, target)
                vn = min(max(vn, lo), hi)
            if len(noise) > 0:
                vn += noise[n - 1] * dt
            if vn < 0.0:
                vn = 0.0
            if sn < s:
                sn = s
            if stop_s >= 0.0 and stop_s - sn < s_brake and vn < v_stop_eps:
                dwell_stop = j
                dwell_left = dwell_steps
                v_hold = vn
                if dwell_left == 0:
                    k = j + 1
                    dwell_stop = -1
        s = sn
        v = vn
        s_out[n] = s
        v_out[n] = v
        n += 1
        finished = s >= total
    return s_out[:n], v_out[:n], finished


class _CompiledRoute:
    """Array form of a RouteMap for the integrator."""

    def __init__(self, route: RouteMap):
        self.total = float(route.total_length)
        self.zone_starts = np.array([z[0] for z in route.limit_zones])
        self.zone_limits = np.array([z[1] for z in route.limit_zones])
        self.stop_pos = np.array([s.position for s in route.stops], dtype=float)
        self.stop_light = np.array(
            [route.light_index_at(s.position) if s.kind is StopKind.SIGNALIZED else -1 for s in route.stops],
            dtype=np.int64,
        )
        n_l = len(route.lights)
        n_ph = max([len(lt.cycle) for lt in route.lights], default=1)
        self.light_dur = np.ones((max(n_l, 1), n_ph))
        self.light_code = np.zeros((max(n_l, 1), n_ph))
        self.light_nph = np.ones(max(n_l, 1), dtype=np.int64)
        self.light_offset = np.zeros(max(n_l, 1))
        for i, lt in enumerate(route.lights):
            self.light_nph[i] = len(lt.cycle)
            self.light_offset[i] = lt.cycle_offset
            for q, (phase, dur) in enumerate(lt.cycle):
                self.light_dur[i, q] = dur
                self.light_code[i, q] = PHASE_CODE[Phase(phase)]


_ROUTE_CACHE: dict[int, tuple[RouteMap, _CompiledRoute]] = {}


def _compiled(route: RouteMap) -> _CompiledRoute:
    hit = _ROUTE_CACHE.get(id(route))
    if hit is None or hit[0] is not route:
        hit = (route, _CompiledRoute(route))
        _ROUTE_CACHE[id(route)] = hit
    return hit[1]


def integrate(params: EdmParams | np.ndarray, route: RouteMap, profile: ReferenceProfile | None = None,
              dt: float = 0.1, v0: float = 0.0, n_max: int = 10**6, noise=None,
              profile_delay: float = 0.0, v_stop_eps: float = V_STOP_EPS,
              stop_dwell: float = STOP_DWELL) -> tuple[np.ndarray, np.ndarray, bool]:
    """Raw fixed-step integration; returns positions, speeds and whether the route end was reached."""
    r = _compiled(route)
    p = params.as_array() if isinstance(params, EdmParams) else np.asarray(params, dtype=float)
    prof_s = np.zeros(1)
    if profile is None:
        mode, prof_v, prof_dt = SRC_SPEED_LIMIT, np.zeros(1), 1.0
    else:
        mode, prof_v, prof_dt = SRC_PROFILE_TIME, profile.v_ref, float(profile.dt)
        if profile.by_position:
            mode, prof_s = SRC_PROFILE_POSITION, profile.positions
    noise = np.zeros(0) if noise is None else np.asarray(noise, dtype=float)
    return _integrate(p, r.zone_starts, r.zone_limits, mode, prof_v, prof_dt, prof_s, float(profile_delay),
                      PREVIEW, r.stop_pos, r.stop_light, r.light_dur, r.light_nph, r.light_code,
                      r.light_offset, r.total, float(dt), float(v0), int(n_max), noise, float(v_stop_eps),
                      int(round(stop_dwell / dt)))


def build_trace(route: RouteMap, positions, speeds, v_ref, dt: float, driver_id: str) -> DriveTrace:
    """Assemble the feature table; acceleration is the forward difference so v[k+1] = v[k] + acc[k] dt."""
    speeds = np.asarray(speeds, dtype=float)
    acc = np.zeros_like(speeds)
    acc[:-1] = np.diff(speeds) / dt
    times = np.arange(len(speeds)) * dt
    d_tl, tau = light_features(route, positions, times)
    feats = np.column_stack([speeds, acc, d_tl, v_ref, tau, v_ref - speeds])
    return DriveTrace(driver_id, dt, positions, feats)


def _speed_limits(route: RouteMap, positions) -> np.ndarray:
    starts = np.array([z[0] for z in route.limit_zones])
    limits = np.array([z[1] for z in route.limit_zones])
    idx = np.searchsorted(starts, np.minimum(positions, route.total_length), side="right") - 1
    return limits[idx]


def simulate_edm(params: EdmParams, route: RouteMap, v_r_source: ReferenceProfile | None = None,
                 dt: float = 0.1, v0: float = 0.0, duration: float | None = None,
                 max_time: float = MAX_TIME, driver_id: str = "edm",
                 v_stop_eps: float = V_STOP_EPS, stop_dwell: float = STOP_DWELL) -> DriveTrace:
    """Drive the route from its start until the end is reached.

    ``v_r_source=None`` tracks the speed limits, a :class:`ReferenceProfile`
    tracks the advisory by time.  ``duration`` truncates the horizon and
    returns normally; running past ``max_time`` raises
    :class:`SimulationTimeout` carrying the partial trace.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if v0 < 0:
        raise ValueError("initial speed must be non-negative")
    if route.total_length <= 0:
        raise ValueError("route has zero length")
    horizon = max_time if duration is None else min(duration, max_time)
    n_max = int(math.floor(horizon / dt + 1e-9)) + 1
    s, v, finished = integrate(params, route, v_r_source, dt, v0, n_max,
                               v_stop_eps=v_stop_eps, stop_dwell=stop_dwell)
    if v_r_source is None:
        v_ref = _speed_limits(route, s)
    else:
        v_ref = v_r_source.displayed(np.arange(len(s)) * dt, s)
    trace = build_trace(route, s, v, v_ref, dt, driver_id)
    if not finished and (duration is None or duration > max_time):
        raise SimulationTimeout(f"route not completed within {max_time} s", trace)
    return trace


def replay(params: EdmParams | np.ndarray, target: DriveTrace, route: RouteMap) -> np.ndarray:
    """EDM speeds tracking a trace's own advisory from its initial speed, at most as long as the trace."""
    profile = ReferenceProfile(target.v_ref, target.dt)
    _, v, _ = integrate(params, route, profile, target.dt, max(float(target.v[0]), 0.0), len(target))
    return v


def generate_reference(calibrations: list[EdmParams], route: RouteMap, dt: float = 0.1) -> list[ReferenceProfile]:
    """One advisory profile per calibration, each driving the speed limits.

    Profiles keep the generating run's positions so they can be shown by
    route position.
    """
    if not calibrations:
        raise ValueError("need at least one calibration")
    profiles = []
    for p in calibrations:
        trace = simulate_edm(p, route, None, dt)
        profiles.append(ReferenceProfile(trace.v, dt, trace.positions))
    return profiles
