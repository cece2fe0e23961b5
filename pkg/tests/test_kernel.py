import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpgame.errors import ConfigurationError, StabilityError
from jumpgame.kernel import (Engine, child_states, conditional_moments, euler_update, freeze, gauss_hermite,
                             implicit_solve, step_rule)
from jumpgame.problem import make_spec


@given(st.integers(1, 8), st.integers(1, 2))
def test_gauss_hermite_moments(m, d):
    nodes, w = gauss_hermite(m, d)
    assert nodes.shape == (m ** d, d)
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-14)
    assert np.all(w > 0)
    np.testing.assert_allclose(w @ nodes, 0.0, atol=1e-14)
    if m >= 2:
        np.testing.assert_allclose(w @ nodes ** 2, 1.0, rtol=1e-13)
    if m >= 3:
        np.testing.assert_allclose(w @ nodes ** 4, 3.0, rtol=1e-13)


def test_engine_limits():
    with pytest.raises(ConfigurationError):
        Engine(mode="tree", gauss=4)
    with pytest.raises(ConfigurationError):
        Engine(mode="bogus")


def test_step_refusals():
    spec = make_spec(atoms=[(1.0, 1.0)], C=2.0)
    with pytest.raises(ConfigurationError):
        step_rule(spec, 0.3, 3)
    with pytest.raises(StabilityError):
        step_rule(make_spec(C=5.0), 0.2, 3)


def test_rule_weights_sum_to_one():
    spec = make_spec(atoms=[(1.0, 1.0), (-1.0, 0.5)])
    rule = step_rule(spec, 0.1, 3)
    assert math.isclose(rule.weights.sum(), 1.0, rel_tol=1e-15)
    assert rule.branching == 9


def test_euler_update_matches_formula():
    spec = make_spec(b=lambda t, x, u, v: 0.5 + u - v, sigma=lambda t, x, u, v: np.full((len(x), 1, 1), 0.3),
                     gamma=lambda t, x, u, v, e: 0.2 * e[0] + 0 * x, atoms=[(1.0, 2.0)], U=(1.0,), V=(0.25,))
    x = np.array([[0.1], [-0.4]])
    fc = freeze(spec, 0.0, x, spec.u_set[0], spec.v_set[0])
    out = euler_update(fc, 0.1, np.array([0.2]), np.array([1.0]))
    expect = x + (0.5 + 1 - 0.25) * 0.1 + 0.3 * 0.2 + 0.2 - 0.1 * 2.0 * 0.2
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-15)


def test_conditional_moments_of_linear_function():
    # y' = a + b*dB + c*jump  => z = b, K = c, ybar = a + c*lambda*delta
    spec = make_spec(sigma=lambda t, x, u, v: np.ones((len(x), 1, 1)), gamma=lambda t, x, u, v, e: e[0] + 0 * x,
                     atoms=[(1.0, 1.5)])
    rule = step_rule(spec, 0.1, 3)
    x = np.zeros((1, 1))
    kids = child_states(spec, rule, 0.0, x, spec.u_set[0], spec.v_set[0])
    y_next = 2.0 + 3.0 * kids[..., 0]
    ybar, z, K = conditional_moments(rule, y_next)
    np.testing.assert_allclose(z, 3.0, rtol=1e-13)
    np.testing.assert_allclose(K, 3.0, rtol=1e-13)
    np.testing.assert_allclose(ybar, 2.0, atol=1e-14)  # compensated jump keeps the mean


def test_implicit_solve_linear_driver():
    spec = make_spec(f=lambda t, x, y, z, k, u, v: 0.5 * y + 1.0, C=1.0)
    x = np.zeros((3, 1))
    y = implicit_solve(spec, 0.0, x, np.array([1.0, 2.0, -1.0]), np.zeros((3, 1)), np.zeros(3),
                       spec.u_set[0], spec.v_set[0], 0.1)
    np.testing.assert_allclose(y, (np.array([1.0, 2.0, -1.0]) + 0.1) / (1 - 0.05), rtol=1e-13)
