import sys

import numpy as np
import pytest

from tdcrbench.kinematics import ConfigSpace


def random_config(rng, theta_max=np.pi / 2, theta_min=0.0):
    return ConfigSpace(rng.uniform(theta_min, theta_max), rng.uniform(-np.pi, np.pi),
                       rng.uniform(theta_min, theta_max), rng.uniform(-np.pi, np.pi),
                       rng.uniform(-np.pi, np.pi), rng.uniform(-10, 10))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    from tdcrbench.datagen import monte_carlo_collect, split
    return split(monte_carlo_collect(60.0, 5.0, rng_seed=7), min_size=6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
