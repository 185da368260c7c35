"""Shared fixtures and hypothesis profile."""

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from facederiv.simulate import make_replicate
from facederiv.splinebasis import make_basis

settings.register_profile(
    "facederiv", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("facederiv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def basis38():
    return make_basis(0.0, 1.0, 38, 3)


@pytest.fixture(scope="session")
def basis10():
    return make_basis(0.0, 1.0, 10, 3)


@pytest.fixture(scope="session")
def replicates():
    """Cached simulated replicates keyed by ``(setting, seed)``."""
    cache = {}

    def get(setting, seed=0, **kwargs):
        key = (setting, seed, tuple(sorted(kwargs.items())))
        if key not in cache:
            cache[key] = make_replicate(setting, seed=seed, **kwargs)
        return cache[key]

    return get


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
