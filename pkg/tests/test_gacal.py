import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivermodel import gacal
from drivermodel.edm import EdmParams, SimulationTimeout, simulate_edm
from drivermodel.gacal import (CalibrationResult, EdmCalibrator, GaConfig, calibrate, fitness, population_summary,
                               summary_csv)
from drivermodel.scenario import RouteMap, StopPoint
from drivermodel.synthdrive import ConfigError

ROUTE = RouteMap(400.0, [(0.0, 12.0), (200.0, 16.0)], [StopPoint(250.0)], [])
TRUE = EdmParams(1.6, 2.2, 3.0, 0.8, 45.0)


@pytest.fixture(scope="module")
def target():
    return simulate_edm(TRUE, ROUTE, driver_id="target")


def test_self_replay_fitness(target):
    assert fitness(TRUE, target, ROUTE) < 0.05


def test_zero_motion_fitness_is_rms_of_target(target):
    crawl = EdmParams(1e-12, 2.0, 3.0, 0.0, 20.0)
    expected = math.sqrt(np.mean(target.v ** 2))
    assert fitness(crawl, target, ROUTE) == pytest.approx(expected, rel=1e-6)


def test_simulation_failure_scores_infinity(target, monkeypatch):
    def boom(*args, **kwargs):
        raise SimulationTimeout("no", None)
    monkeypatch.setattr(gacal, "replay", boom)
    assert fitness(TRUE, target, ROUTE) == math.inf


def test_nonfinite_replay_scores_infinity(target):
    assert fitness(np.array([np.nan, 2.0, 3.0, 0.5, 30.0]), target, ROUTE) == math.inf


def test_fitness_deterministic(target):
    p = EdmParams(1.0, 1.5, 2.0, 1.0, 30.0)
    assert fitness(p, target, ROUTE) == fitness(p, target, ROUTE)


def test_generations_zero(target):
    res = calibrate(target, ROUTE, GaConfig(population=8, generations=0))
    assert len(res.history) == 1
    assert res.best_fitness == res.history[0]


def test_calibration_deterministic(target):
    cfg = GaConfig(population=10, generations=5, seed=3)
    assert calibrate(target, ROUTE, cfg) == calibrate(target, ROUTE, cfg)


def test_calibration_improves(target):
    res = calibrate(target, ROUTE, GaConfig(population=20, generations=25, seed=1))
    assert res.best_fitness < res.history[0]
    assert res.best_fitness == pytest.approx(fitness(res.best, target, ROUTE))


@settings(max_examples=15)
@given(st.integers(0, 1000), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_bounds_and_elitism(seed, cx, mut, sigma):
    target = simulate_edm(TRUE, ROUTE)
    seen = []
    real = gacal.fitness

    def recording(ind, tgt, route):
        seen.append(np.array(ind, dtype=float))
        return real(ind, tgt, route)

    cfg = GaConfig(population=6, generations=4, crossover_rate=cx, mutation_rate=mut,
                   mutation_sigma_frac=sigma, seed=seed)
    gacal.fitness = recording
    try:
        res = calibrate(target, ROUTE, cfg)
    finally:
        gacal.fitness = real
    lo, hi = cfg.bound_arrays()
    pop = np.array(seen)
    assert np.all(pop >= lo) and np.all(pop <= hi)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


@pytest.mark.parametrize("kwargs", [dict(population=2), dict(elitism=50), dict(crossover_rate=1.5),
                                    dict(mutation_rate=-0.1), dict(mutation_sigma_frac=-1.0),
                                    dict(generations=-1)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        GaConfig(**kwargs)


def _result(theta0):
    return CalibrationResult(EdmParams(1.0, 2.0, 3.0, theta0, 40.0), 0.5, [1.0, 0.5])


def test_population_summary_examples():
    summary = population_summary([_result(0.0), _result(2.0)])
    assert summary["theta0"].mean == 1.0 and summary["theta0"].std == 1.0
    assert population_summary([_result(1.3)])["theta0"].std == 0.0


def test_theta0_histogram_has_no_mass_above_two():
    summary = population_summary([_result(x) for x in np.linspace(0, 2, 25)])
    edges, counts = summary["theta0"].edges, summary["theta0"].counts
    assert counts.sum() == 25
    assert counts[edges[:-1] >= 2.0].sum() == 0
    assert summary_csv(summary).startswith("parameter,mean,std")


def test_result_round_trip(tmp_path):
    res = _result(0.7)
    res.save(tmp_path / "r.json")
    assert CalibrationResult.load(tmp_path / "r.json") == res


def test_estimator_api(target):
    est = EdmCalibrator(route=ROUTE, population=8, generations=3, seed=2)
    assert est.get_params()["population"] == 8
    est.fit(target)
    v = est.predict(target)
    assert 0 < len(v) <= len(target)  # a replay may finish the route early
    assert est.score(target) == pytest.approx(-est.result_.best_fitness)
