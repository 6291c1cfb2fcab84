"""Shared fixtures: one m=5 build pipeline reused across test modules."""

import numpy as np
import pytest

from momentforge import (
    PushforwardDist,
    SlopeTarget,
    evolve,
    hermite_rule,
    layout,
    reduce_rule,
)

M_DEFAULT = 5
EPS0_DEFAULT = 1e-6
EPS_TARGET_DEFAULT = 1e-3
NU_DEFAULT = 1e-4
SIGMA_DEFAULT = 0.05


@pytest.fixture(scope="session")
def reduced5():
    return reduce_rule(hermite_rule(M_DEFAULT))


@pytest.fixture(scope="session")
def instance5(reduced5):
    return layout(reduced5, EPS0_DEFAULT, NU_DEFAULT)


@pytest.fixture(scope="session")
def build5(instance5):
    """(initial, evolved, trace) for the default m=5 pipeline."""
    evolved, trace = evolve(instance5, SlopeTarget(eps_target=EPS_TARGET_DEFAULT))
    return instance5, evolved, trace


@pytest.fixture(scope="session")
def dist5(build5):
    _, evolved, _ = build5
    return PushforwardDist.from_instance(evolved, SIGMA_DEFAULT)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240613)
