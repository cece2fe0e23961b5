import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpgame import bsde, oracle
from jumpgame.errors import ConfigurationError, StabilityError
from jumpgame.grids import StateGrid
from jumpgame.kernel import Engine
from jumpgame.levy_paths import TimeGrid
from jumpgame.policies import constant_policy
from jumpgame.problem import load_problem, make_spec


def affine(**kw):
    defaults = dict(b=lambda t, x, u, v: 0.1 - 0.2 * x + 0.5 * u,
                    sigma=lambda t, x, u, v: (0.3 + 0.05 * np.cos(x))[:, :, None],
                    gamma=lambda t, x, u, v, e: 0.2 * e[0] + 0 * x,
                    f=lambda t, x, y, z, k, u, v: 0.2 * y + 0.1 * z[:, 0] + 0.4 * k + 0.1 * x[:, 0],
                    phi=lambda x: x[:, 0] + 0.5 * np.sqrt(1 + x[:, 0] ** 2),
                    l=lambda x, e: 0.5 + 0 * x[:, 0], atoms=[(1.0, 1.0)], C=2.0)
    defaults.update(kw)
    return make_spec(**defaults)


def test_zero_dynamics_keeps_terminal():
    spec = make_spec(phi=lambda x: np.abs(x[:, 0]), atoms=[(1.0, 1.0)])
    sg = StateGrid.uniform(-1, 1, 9)
    sol = bsde.solve_bsde(spec, TimeGrid(0, 1, 10), sg)
    np.testing.assert_allclose(sol.y, np.abs(sg.nodes[:, 0])[None, :].repeat(11, 0), atol=1e-14)


@given(st.floats(-2, 2))
def test_constant_driver_ode(c):
    spec = make_spec(f=lambda t, x, y, z, k, u, v: c + 0 * y, phi=lambda x: x[:, 0], atoms=[(1.0, 1.0)])
    sg = StateGrid.uniform(-1, 1, 5)
    g = TimeGrid(0, 1, 8)
    sol = bsde.solve_bsde(spec, g, sg)
    expect = sg.nodes[:, 0][None, :] + c * (1 - g.nodes)[:, None]
    np.testing.assert_allclose(sol.y, expect, atol=1e-13)


def test_tree_mode_matches_oracle_three_steps():
    spec = affine()
    g = TimeGrid(0, 0.3, 3)
    sg = StateGrid.uniform(-1, 1, 5)
    sol = bsde.solve_bsde(spec, g, sg, engine=Engine("tree", 3))
    ref = oracle.oracle_bsde(spec, g, sg.nodes, m=3).root_y
    assert np.max(np.abs(sol.y[0] - ref)) <= 1e-12


def test_grid_mode_affine_terminal_matches_oracle():
    spec = affine(phi=lambda x: 1.0 + 0.5 * x[:, 0], f=None,
                  b=lambda t, x, u, v: 0.1 + 0 * x, sigma=lambda t, x, u, v: np.full((len(x), 1, 1), 0.3))
    g = TimeGrid(0, 0.3, 3)
    sg = StateGrid.uniform(-2, 2, 21)
    sol = bsde.solve_bsde(spec, g, sg, engine=Engine(gauss=3))
    ref = oracle.oracle_bsde(spec, g, sg.nodes, m=3).root_y
    assert np.max(np.abs(sol.y[0] - ref)) <= 1e-12


def test_refuses_large_step():
    spec = affine(C=6.0)
    with pytest.raises(StabilityError):
        bsde.solve_bsde(spec, TimeGrid(0, 1, 5), StateGrid.uniform(-1, 1, 5))


def test_semigroup_empty_block_and_decoupled_driver():
    spec = affine(f=lambda t, x, y, z, k, u, v: 0.3 * np.cos(x[:, 0]) + 0 * y)
    sg = StateGrid.uniform(-2, 2, 41)
    eta = lambda x: np.sin(x[:, 0])  # noqa: E731
    empty = bsde.semigroup_apply(spec, None, sg, eta=eta)
    x = np.array([[0.3], [-0.2]])
    np.testing.assert_array_equal(empty(x), eta(x))
    # decoupled driver: G[eta](x) = E[eta(X) + sum f delta] on the tree
    g = TimeGrid(0, 0.1, 1)
    blk = bsde.semigroup_apply(spec, g, sg, eta=eta, engine=Engine("tree", 3))
    tree = oracle.build_policy_tree(spec, g, x, constant_policy(0), constant_policy(0), 3)
    leaves = tree.levels[-1].reshape(len(x), -1, 1)
    w = tree.rule.weights.reshape(-1)
    direct = (leaves[..., 0] * 0 + np.sin(leaves[..., 0])) @ w + 0.1 * 0.3 * np.cos(x[:, 0])
    np.testing.assert_allclose(blk(x), direct, atol=1e-14)


def test_flow_property_on_tree():
    spec = affine()
    g = TimeGrid(0, 0.3, 3)
    x = np.array([[0.1]])
    whole = oracle.oracle_bsde(spec, g, x).root_y
    tail = lambda y: oracle.oracle_bsde(spec, g.restrict(1), y).root_y  # noqa: E731
    head = oracle.oracle_bsde(spec, g.restrict(0, 1), x, terminal=tail).root_y
    assert abs(whole[0] - head[0]) <= 1e-10


def test_comparison_identical_and_shifted():
    spec = affine()
    g = TimeGrid(0, 0.2, 2)
    roots = np.array([[0.0], [0.5]])
    same = bsde.comparison_check(spec, spec, g, roots)
    assert same.passed and same.min_difference == 0.0
    phi = spec.coefficients.phi
    lower = spec.with_coefficients(phi=lambda x: phi(x) - 1.0)
    rep = bsde.comparison_check(spec, lower, g, roots)
    assert rep.passed and rep.min_difference >= np.exp(-2.0 * 0.2) * 0.5


def test_comparison_reports_unmet_hypotheses():
    spec = affine()
    prime = spec.with_coefficients(phi=lambda x: spec.coefficients.phi(x) + 1.0)
    rep = bsde.comparison_check(spec, prime, TimeGrid(0, 0.2, 2), np.zeros((1, 1)))
    assert rep.status == "hypotheses not met" and rep.unmet


def test_stability_threshold_and_trivial_case():
    assert bsde.stability_threshold(0.5) == 4.0
    spec = affine()
    g = TimeGrid(0, 0.3, 3)
    rep = bsde.stability_check(spec, g, np.zeros((1, 1)), spec.terminal, spec.terminal)
    assert rep.passed and np.all(rep.lhs == 0)
    with pytest.raises(ConfigurationError):
        bsde.stability_check(spec, g, np.zeros((1, 1)), spec.terminal, spec.terminal, beta=1.0)


def test_markov_identity_tree_and_grid():
    spec = affine()
    g = TimeGrid(0, 0.3, 3)
    labels = np.array([0, 1, 1, 0, 1])
    rep = bsde.markov_identity_check(spec, g, np.array([[-0.3], [0.4]]), labels)
    assert rep.discrepancy <= 1e-12
    single = bsde.markov_identity_check(spec, g, np.array([[0.2]]), np.zeros(4, dtype=int))
    assert single.discrepancy == 0.0
    sg = StateGrid.uniform(-2, 2, 81)
    gridrep = bsde.markov_identity_check(spec, TimeGrid(0, 0.5, 5), np.array([[-0.3], [0.4]]), labels, sgrid=sg,
                                         engine=Engine(gauss=5))
    assert gridrep.discrepancy <= gridrep.bound


def test_solution_fields():
    spec = load_problem("driver_coupled")
    sg = StateGrid.uniform(-2, 2, 21)
    sol = bsde.solve_bsde(spec, TimeGrid(0, 1, 10), sg)
    x = np.array([[0.05]])
    assert np.isfinite(sol.field(0, "y")(x)).all()
    assert np.isfinite(sol.field(0, "z1")(x)).all()
    assert np.isfinite(sol.field(0, "kbar")(x)).all()
