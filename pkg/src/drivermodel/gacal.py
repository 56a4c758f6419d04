"""Genetic-algorithm calibration of EDM parameters against recorded traces."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .edm import EdmParams, SimulationTimeout, replay
from .evalcmp import rmse
from .scenario import RouteMap
from .synthdrive import DEFAULT_BOUNDS, ConfigError, check_bounds
from .trace import DriveTrace

MISSING_PENALTY = 0.1  # m/s per second of horizon the replay falls short
TOURNAMENT = 3


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    mutation_sigma_frac: float = 0.1
    elitism: int = 2
    seed: int = 0
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self):
        if self.population < 4:
            raise ConfigError("population must be >= 4")
        if not 0 <= self.elitism < self.population:
            raise ConfigError("elitism must be in [0, population)")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma_frac < 0:
            raise ConfigError("mutation_sigma_frac must be >= 0")
        bounds = check_bounds(self.bounds)
        for name in ("a", "b", "delta", "s_brake"):
            if bounds[name][0] <= 0:
                raise ConfigError(f"lower bound of {name} must be positive")
        if bounds["theta0"][0] < 0:
            raise ConfigError("lower bound of theta0 must be >= 0")
        object.__setattr__(self, "bounds", bounds)

    def bound_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        names = EdmParams.names()
        return (np.array([self.bounds[n][0] for n in names]),
                np.array([self.bounds[n][1] for n in names]))


@dataclass
class CalibrationResult:
    best: EdmParams
    best_fitness: float
    history: list[float]

    def to_dict(self) -> dict:
        return {"best": asdict(self.best), "best_fitness": self.best_fitness, "history": list(self.history)}

    @classmethod
    def from_dict(cls, data: dict) -> CalibrationResult:
        return cls(EdmParams(**data["best"]), float(data["best_fitness"]), [float(h) for h in data["history"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> CalibrationResult:
        return cls.from_dict(json.loads(Path(path).read_text()))


def fitness(params: EdmParams | np.ndarray, target: DriveTrace, route: RouteMap) -> float:
    """Velocity RMSE of the replay, plus a penalty for each second the replay ends early.

    Any simulation failure scores +inf.
    """
    if len(target) == 0:
        raise ValueError("empty target trace")
    try:
        v = replay(params, target, route)
    except (SimulationTimeout, ValueError, ZeroDivisionError, FloatingPointError):
        return math.inf
    if not np.all(np.isfinite(v)):
        return math.inf
    n = min(len(v), len(target))
    missing = (len(target) - n) * target.dt
    return rmse(target.v[:n], v[:n]) + MISSING_PENALTY * missing


def _tournament(rng, fit) -> int:
    picks = rng.integers(0, len(fit), TOURNAMENT)
    return int(picks[np.argmin(fit[picks])])


def calibrate(target: DriveTrace, route: RouteMap, cfg: GaConfig | None = None) -> CalibrationResult:
    """Tournament selection, uniform crossover, Gaussian mutation clipped to bounds, elitism."""
    cfg = cfg or GaConfig()
    if len(target) == 0:
        raise ValueError("empty target trace")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bound_arrays()
    sigma = cfg.mutation_sigma_frac * (hi - lo)
    n_genes = len(lo)

    pop = rng.uniform(lo, hi, size=(cfg.population, n_genes))
    fit = np.array([fitness(ind, target, route) for ind in pop])
    history = [float(fit.min())]
    for _ in range(cfg.generations):
        elite = np.argsort(fit, kind="stable")[:cfg.elitism]
        children = []
        for _ in range(cfg.population - cfg.elitism):
            p1 = pop[_tournament(rng, fit)]
            p2 = pop[_tournament(rng, fit)]
            if rng.random() < cfg.crossover_rate:
                child = np.where(rng.random(n_genes) < 0.5, p1, p2)
            else:
                child = p1.copy()
            mutate = rng.random(n_genes) < cfg.mutation_rate
            child = child + mutate * rng.normal(0.0, 1.0, n_genes) * sigma
            children.append(np.clip(child, lo, hi))
        children = np.array(children).reshape(-1, n_genes)
        child_fit = np.array([fitness(ind, target, route) for ind in children])
        pop = np.vstack([pop[elite], children])
        fit = np.concatenate([fit[elite], child_fit])
        history.append(float(fit.min()))
    k = int(np.argmin(fit))
    return CalibrationResult(EdmParams.from_array(pop[k]), float(fit[k]), history)


@dataclass
class ParamSummary:
    mean: float
    std: float
    edges: np.ndarray
    counts: np.ndarray


def population_summary(results: list[CalibrationResult], bounds: dict | None = None,
                       bins: int = 10) -> dict[str, ParamSummary]:
    """Mean, population std (ddof=0) and fixed-range histogram of each calibrated parameter."""
    if not results:
        raise ValueError("need at least one calibration result")
    bounds = check_bounds(bounds or DEFAULT_BOUNDS)
    out = {}
    for name in EdmParams.names():
        vals = np.array([getattr(r.best, name) for r in results])
        lo, hi = bounds[name]
        counts, edges = np.histogram(np.clip(vals, lo, hi), bins=bins, range=(lo, hi))
        out[name] = ParamSummary(float(vals.mean()), float(vals.std()), edges, counts)
    return out


def summary_csv(summary: dict[str, ParamSummary]) -> str:
    lines = ["parameter,mean,std,bin_lo,bin_hi,count"]
    for name, ps in summary.items():
        for lo, hi, c in zip(ps.edges[:-1], ps.edges[1:], ps.counts):
            lines.append(f"{name},{ps.mean:.6g},{ps.std:.6g},{lo:.6g},{hi:.6g},{int(c)}")
    return "\n".join(lines) + "\n"


class EdmCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate`.

    ``fit`` takes one :class:`DriveTrace`; ``predict`` replays the fitted
    driver on another trace's advisory and returns its speed series.
    """

    def __init__(self, route: RouteMap | None = None, population=50, generations=100, crossover_rate=0.9,
                 mutation_rate=0.2, mutation_sigma_frac=0.1, elitism=2, bounds=None, seed=0):
        self.route = route
        self.population = population
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.mutation_sigma_frac = mutation_sigma_frac
        self.elitism = elitism
        self.bounds = bounds
        self.seed = seed

    def _config(self) -> GaConfig:
        return GaConfig(self.population, self.generations, self.crossover_rate, self.mutation_rate,
                        self.mutation_sigma_frac, self.elitism, self.seed, dict(self.bounds or DEFAULT_BOUNDS))

    def _route(self) -> RouteMap:
        if self.route is None:
            from .scenario import default_route
            return default_route()
        return self.route

    def fit(self, X: DriveTrace, y=None):
        self.result_ = calibrate(X, self._route(), self._config())
        self.params_ = self.result_.best
        return self

    def predict(self, X: DriveTrace) -> np.ndarray:
        check_is_fitted(self, "params_")
        return replay(self.params_, X, self._route())

    def score(self, X: DriveTrace, y=None) -> float:
        """Negative fitness, so larger is better."""
        check_is_fitted(self, "params_")
        return -fitness(self.params_, X, self._route())
