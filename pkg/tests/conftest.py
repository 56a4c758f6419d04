import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from drivermodel.edm import EdmParams
from drivermodel.scenario import RouteMap, StopKind, StopPoint

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def flat_route():
    """1 km, one 20 m/s zone, no stops."""
    return RouteMap(1000.0, [(0.0, 20.0)], [], [])


@pytest.fixture
def stop_route():
    return RouteMap(1000.0, [(0.0, 15.0)], [StopPoint(500.0, StopKind.STOP_SIGN)], [])


@pytest.fixture
def params():
    return EdmParams(a=1.5, b=2.0, delta=4.0, theta0=1.0, s_brake=40.0)


@pytest.fixture(autouse=True)
def _quiet_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


def random_params(rng: np.random.Generator) -> EdmParams:
    return EdmParams(a=rng.uniform(0.8, 2.5), b=rng.uniform(1.0, 3.5), delta=rng.uniform(1.0, 6.0),
                     theta0=rng.uniform(0.0, 2.0), s_brake=rng.uniform(20.0, 80.0))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
