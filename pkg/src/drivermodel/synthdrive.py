"""Synthetic human drivers and sliding-window datasets."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .edm import MAX_TIME, EdmParams, ReferenceProfile, SimulationTimeout, build_trace, integrate
from .scenario import RouteMap
from .trace import FEATURES, DriveTrace

__all__ = [
    "DEFAULT_BOUNDS", "DriveTrace", "FeatureScaler", "NoiseConfig", "NormStats", "WindowConfig",
    "WindowedDataset", "denormalize", "normalize", "sample_driver_params", "simulate_human",
    "window_dataset",
]

DEFAULT_BOUNDS = {
    "a": (0.8, 2.5),
    "b": (1.0, 3.5),
    "delta": (1.0, 6.0),
    "theta0": (0.0, 2.0),
    "s_brake": (20.0, 80.0),
}
OUTPUT_CHANNELS = (FEATURES.index("v"), FEATURES.index("err"))
# Phase codes already live in [0, 1]; their scaling is fixed.
FIXED_RANGES = {"tau_sp": (0.0, 1.0)}


class ConfigError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


def check_bounds(bounds: dict) -> dict:
    out = {}
    for name in EdmParams.names():
        if name not in bounds:
            raise ConfigError(f"missing bounds for {name}")
        lo, hi = (float(x) for x in bounds[name])
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ConfigError(f"inverted or non-finite bounds for {name}: ({lo}, {hi})")
        out[name] = (lo, hi)
    return out


def sample_driver_params(rng_seed, bounds: dict | None = None) -> EdmParams:
    bounds = check_bounds(bounds or DEFAULT_BOUNDS)
    rng = np.random.default_rng(rng_seed)
    return EdmParams(**{k: float(rng.uniform(lo, hi)) if hi > lo else lo for k, (lo, hi) in bounds.items()})


@dataclass(frozen=True)
class NoiseConfig:
    sigma_a: float = 0.5
    tau_noise: float = 8.0
    perception_delay: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.sigma_a < 0:
            raise ConfigError("sigma_a must be >= 0")
        if not self.tau_noise > 0:
            raise ConfigError("tau_noise must be > 0")
        if self.perception_delay < 0:
            raise ConfigError("perception_delay must be >= 0")


def correlated_noise(n: int, dt: float, sigma: float, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary first-order autoregressive sequence with std ``sigma`` and correlation time ``tau``."""
    if sigma == 0 or n == 0:
        return np.zeros(n)
    phi = math.exp(-dt / tau)
    innov = rng.standard_normal(n) * sigma * math.sqrt(1.0 - phi * phi)
    out = np.empty(n)
    x = rng.standard_normal() * sigma
    for k in range(n):
        out[k] = x
        x = phi * x + innov[k]
    return out


def simulate_human(params: EdmParams, noise: NoiseConfig, advisory: ReferenceProfile, route: RouteMap,
                   dt: float = 0.1, driver_id: str = "driver", max_time: float = MAX_TIME) -> DriveTrace:
    """EDM driver tracking a delayed advisory under a correlated acceleration disturbance.

    The recorded ``v_ref`` and ``err`` channels use the advisory as
    displayed, without the perception delay.  A position-indexed advisory
    is read at the driver's own (delayed) position.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    ratio = advisory.dt / dt
    if abs(ratio - round(ratio)) > 1e-9 and abs(1 / ratio - round(1 / ratio)) > 1e-9:
        raise ConfigError(f"advisory dt {advisory.dt} and dt {dt} are not in integer ratio")
    n_max = int(math.floor(max_time / dt + 1e-9)) + 1
    rng = np.random.default_rng(noise.seed)
    disturbance = correlated_noise(n_max, dt, noise.sigma_a, noise.tau_noise, rng)
    s, v, finished = integrate(params, route, advisory, dt, 0.0, n_max, noise=disturbance,
                               profile_delay=noise.perception_delay)
    t = np.arange(len(s)) * dt
    if advisory.by_position:
        short = advisory.positions[-1] < min(s[-1], route.total_length) - 1e-9
    else:
        short = t[-1] > advisory.duration + 1e-9
    if short:
        warnings.warn(f"{driver_id}: advisory ends before the drive does, holding its last value", stacklevel=2)
    trace = build_trace(route, s, v, advisory.displayed(t, s), dt, driver_id)
    if not finished:
        raise SimulationTimeout(f"{driver_id}: route not completed within {max_time} s", trace)
    return trace


# ---------------------------------------------------------------------------
# windows and normalization


@dataclass(frozen=True)
class WindowConfig:
    t_h: float = 30.0
    t_p: float = 5.0
    dt: float = 0.1

    def __post_init__(self):
        if not (self.dt > 0 and self.t_h > 0 and self.t_p > 0):
            raise ConfigError("window spans and dt must be positive")
        if self.n_h < 1 or self.n_p < 1:
            raise ConfigError("windows must hold at least one point")

    @property
    def n_h(self) -> int:
        return int(round(self.t_h / self.dt))

    @property
    def n_p(self) -> int:
        return int(round(self.t_p / self.dt))

    @property
    def span(self) -> int:
        return self.n_h + self.n_p

    def n_windows(self, length: int) -> int:
        return max(length - self.span + 1, 0)


@dataclass(frozen=True)
class NormStats:
    """Per-channel (min, max) for the six input features."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if len(self.mins) != len(FEATURES) or len(self.maxs) != len(FEATURES):
            raise ConfigError("NormStats needs one range per feature")
        for name, lo, hi in zip(FEATURES, self.mins, self.maxs):
            if not hi > lo:
                raise ConfigError(f"degenerate channel {name}: min={lo}, max={hi}")

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> NormStats:
        rows = np.asarray(rows, dtype=float).reshape(-1, len(FEATURES))
        mins, maxs = rows.min(axis=0).tolist(), rows.max(axis=0).tolist()
        for name, (lo, hi) in FIXED_RANGES.items():
            k = FEATURES.index(name)
            mins[k], maxs[k] = lo, hi
        return cls(tuple(mins), tuple(maxs))

    def channel(self, channel) -> int:
        return FEATURES.index(channel) if isinstance(channel, str) else int(channel)

    def to_dict(self) -> dict:
        return {name: [lo, hi] for name, lo, hi in zip(FEATURES, self.mins, self.maxs)}

    @classmethod
    def from_dict(cls, data: dict) -> NormStats:
        return cls(tuple(float(data[n][0]) for n in FEATURES), tuple(float(data[n][1]) for n in FEATURES))

    def lo_hi(self, channels=None) -> tuple[np.ndarray, np.ndarray]:
        idx = list(range(len(FEATURES))) if channels is None else [self.channel(c) for c in channels]
        return np.array([self.mins[i] for i in idx]), np.array([self.maxs[i] for i in idx])


def normalize(x, stats: NormStats, channel):
    """Map a raw value onto [0, 1] using the channel range; out-of-range values are clamped."""
    k = stats.channel(channel)
    lo, hi = stats.mins[k], stats.maxs[k]
    return np.clip((np.asarray(x, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


def denormalize(z, stats: NormStats, channel):
    k = stats.channel(channel)
    lo, hi = stats.mins[k], stats.maxs[k]
    return lo + np.asarray(z, dtype=float) * (hi - lo)


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Min-max scaler over the feature axis (last axis) with clamping.

    ``channels`` selects which features the last axis holds; the default
    is all six inputs.  ``(v, err)`` outputs reuse the input statistics.
    """

    def __init__(self, channels=None):
        self.channels = channels

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.stats_ = NormStats.from_rows(X.reshape(-1, len(FEATURES)))
        return self

    @classmethod
    def from_stats(cls, stats: NormStats, channels=None) -> FeatureScaler:
        scaler = cls(channels)
        scaler.stats_ = stats
        return scaler

    def transform(self, X):
        check_is_fitted(self, "stats_")
        lo, hi = self.stats_.lo_hi(self.channels)
        return np.clip((np.asarray(X, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    def inverse_transform(self, Z):
        check_is_fitted(self, "stats_")
        lo, hi = self.stats_.lo_hi(self.channels)
        return lo + np.asarray(Z, dtype=float) * (hi - lo)


class Sample(NamedTuple):
    X: np.ndarray  # 6 x n_h
    Y: np.ndarray  # 2 x n_p
    driver_id: str
    start: int


@dataclass
class WindowedDataset:
    """Normalized stride-1 windows over whole traces, materialized on demand."""

    cfg: WindowConfig
    norm: NormStats
    driver_ids: list[str]
    series: list[np.ndarray]  # normalized (n_i, 6) per driver
    index: np.ndarray = field(init=False)

    def __post_init__(self):
        pairs = [(i, k) for i, z in enumerate(self.series) for k in range(self.cfg.n_windows(len(z)))]
        self.index = np.array(pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.index)

    def __getitem__(self, n) -> Sample:
        i, k = self.index[n]
        X, Y = self.batch([n])
        return Sample(X[0].T, Y[0].T, self.driver_ids[i], int(k))

    def batch(self, rows) -> tuple[np.ndarray, np.ndarray]:
        """Network layout: X ``(B, n_h, 6)`` and Y ``(B, n_p, 2)``."""
        n_h, n_p = self.cfg.n_h, self.cfg.n_p
        out_x = np.empty((len(rows), n_h, len(FEATURES)))
        out_y = np.empty((len(rows), n_p, len(OUTPUT_CHANNELS)))
        for b, n in enumerate(rows):
            i, k = self.index[n]
            z = self.series[i]
            out_x[b] = z[k:k + n_h]
            out_y[b] = z[k + n_h:k + n_h + n_p][:, OUTPUT_CHANNELS]
        return out_x, out_y


def window_dataset(traces: list[DriveTrace], cfg: WindowConfig, split_seed: int,
                   n_test: int) -> tuple[WindowedDataset, WindowedDataset]:
    """Hold out ``n_test`` whole traces, window the rest, and normalize both from the training side."""
    usable = []
    for tr in traces:
        if len(tr) < cfg.span:
            warnings.warn(f"trace {tr.driver_id} has {len(tr)} samples, needs {cfg.span}; skipped", stacklevel=2)
        else:
            usable.append(tr)
    if not usable:
        raise EmptyDatasetError("every trace is shorter than one window")
    if not 0 <= n_test < len(usable):
        raise ConfigError(f"n_test={n_test} must be below the number of usable traces ({len(usable)})")
    order = np.random.default_rng(split_seed).permutation(len(usable))
    test = [usable[i] for i in sorted(order[:n_test])]
    train = [usable[i] for i in sorted(order[n_test:])]
    norm = NormStats.from_rows(np.concatenate([tr.features for tr in train]))
    scaler = FeatureScaler.from_stats(norm)

    def build(group):
        return WindowedDataset(cfg, norm, [tr.driver_id for tr in group],
                               [scaler.transform(tr.features) for tr in group])

    return build(train), build(test)


def write_manifest(path, files: dict[str, str], train_ids, test_ids, norm: NormStats, extra=None) -> None:
    doc = {
        "traces": files,
        "split": {"train": sorted(train_ids), "test": sorted(test_ids)},
        "norm": norm.to_dict(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["norm"] = NormStats.from_dict(doc["norm"])
    return doc
