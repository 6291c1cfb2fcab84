"""Whole-pipeline runs at other rule orders than the default m=5."""

import numpy as np
import pytest

from momentforge import (
    PushforwardDist,
    SlopeTarget,
    compile_instance,
    evolve,
    hermite_rule,
    instance_eval,
    layout,
    reduce_rule,
)
from momentforge.bumps import instance_pushforward_moment
from momentforge.gaussian import gaussian_moment

# The degree-m moment error scales like eps0 * h_max^m, so higher orders need
# smaller initial ramp widths to stay within the nu/2 construction budget.
CASES = [
    (3, 1e-6),
    (7, 1e-8),
    (9, 1e-9),
]

NU = 1e-4
SIGMA = 0.05


@pytest.mark.parametrize("m,eps0", CASES)
def test_full_pipeline(m, eps0):
    reduced = reduce_rule(hermite_rule(m))
    initial = layout(reduced, eps0, NU)
    evolved, trace = evolve(initial, SlopeTarget(eps_target=1e-3))
    assert trace.target_reached
    assert evolved.eps == pytest.approx(1e-3, rel=1e-12)

    # The flow conserves all tracked even moments and the mirror symmetry.
    assert trace.max_moment_drift() <= 1e-6
    for k in range(2, m, 2):
        drift = abs(
            instance_pushforward_moment(evolved, k)
            - instance_pushforward_moment(initial, k)
        )
        assert drift <= 1e-6
    for k in range(1, m + 1, 2):
        assert abs(instance_pushforward_moment(evolved, k)) <= 1e-12

    # Slopes shrink by the ramp growth factor while heights barely move.
    assert evolved.max_slope() <= 1.01 * initial.max_slope() * eps0 / 1e-3

    # Compiled network reproduces the evolved instance pointwise.
    net = compile_instance(evolved)
    z = np.random.default_rng(m).uniform(-5.0, 5.0, size=5000)
    hmax = float(np.max(np.abs(evolved.heights())))
    assert np.max(np.abs(net.eval(z) - instance_eval(evolved, z))) <= 1e-9 * max(
        1.0, hmax
    )

    # The smoothed pushforward matches Gaussian moments to nu up to degree m.
    dist = PushforwardDist.from_instance(evolved, SIGMA)
    for k in range(1, m + 1):
        assert abs(dist.moment(k) - gaussian_moment(k)) < NU
