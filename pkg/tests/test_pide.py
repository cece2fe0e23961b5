import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpgame import pide
from jumpgame.errors import CFLError, DomainError
from jumpgame.grids import StateGrid
from jumpgame.levy_paths import TimeGrid
from jumpgame.problem import load_problem, make_spec
from jumpgame.verify import hamiltonian_consistency, pide_monotonicity


def test_all_terms_vanish():
    spec = make_spec(atoms=[(1.0, 1.0)])
    x = np.linspace(-1, 1, 5)[:, None]
    h = pide.hamiltonian(spec, lambda y: np.sin(3 * y[:, 0]), 0.0, x, 0.0, 0.0)
    np.testing.assert_allclose(h.total, 0.0, atol=1e-12)


@given(st.floats(0.1, 5.0))
def test_linear_psi_kills_compensated_jump(rate):
    spec = make_spec(gamma=lambda t, x, u, v, e: e[0] + 0 * x, atoms=[(1.0, rate)])
    x = np.linspace(-1, 1, 5)[:, None]
    h = pide.hamiltonian(spec, lambda y: y[:, 0], 0.0, x, 0.0, 0.0)
    np.testing.assert_allclose(h.b_nonlocal, 0.0, atol=1e-10)


@given(st.floats(0.05, 2.0))
def test_quadratic_diffusion_term(s):
    spec = make_spec(sigma=lambda t, x, u, v: np.full((len(x), 1, 1), s))
    x = np.linspace(-1, 1, 5)[:, None]
    h = pide.hamiltonian(spec, lambda y: y[:, 0] ** 2, 0.0, x, 0.0, 0.0, h=0.1)
    np.testing.assert_allclose(h.total, s * s, rtol=1e-12)


def test_small_jump_taylor_exact_on_quadratics():
    spec = make_spec(gamma=lambda t, x, u, v, e: 0.1 * e[0] + 0 * x, atoms=[(0.5, 2.0)])
    x = np.linspace(-1, 1, 5)[:, None]
    psi = lambda y: y[:, 0] ** 2  # noqa: E731
    direct = pide.hamiltonian(spec, psi, 0.0, x, 0.0, 0.0, h=0.1)
    taylor = pide.hamiltonian(spec, psi, 0.0, x, 0.0, 0.0, h=0.1, small_jump=1.0)
    np.testing.assert_allclose(direct.b_nonlocal, taylor.b_nonlocal, atol=1e-12)


def test_jump_out_of_margin_names_atom():
    spec = make_spec(gamma=lambda t, x, u, v, e: 10 * e[0] + 0 * x, atoms=[(0.5, 1.0), (1.0, 1.0)])
    sg = StateGrid.uniform(-1, 1, 11, margin=0.5)
    psi = sg.interpolant(sg.nodes[:, 0])
    with pytest.raises(DomainError, match="atom 0"):
        pide.hamiltonian(spec, psi, 0.0, np.zeros((1, 1)), 0.0, 0.0)


def test_zero_dynamics_and_constant_driver():
    spec = load_problem("zero_dynamics")
    sg = StateGrid.uniform(-2, 2, 21)
    sol = pide.solve_pide(spec, "lower", TimeGrid(0, 1, 10), sg)
    np.testing.assert_allclose(sol.values, np.broadcast_to(spec.terminal(sg.nodes), sol.values.shape), atol=1e-14)
    c = 0.3
    shifted = spec.with_coefficients(f=lambda t, x, y, z, k, u, v: c + 0 * y)
    sol = pide.solve_pide(shifted, "upper", TimeGrid(0, 1, 10), sg)
    np.testing.assert_allclose(sol.values[0], spec.terminal(sg.nodes) + c, atol=1e-13)


def test_cfl_refusal_reports_required_steps():
    spec = load_problem("separated_drift")
    sg = StateGrid.uniform(-2, 2, 81)
    need = pide.required_steps(spec, sg, 1.0)
    with pytest.raises(CFLError) as info:
        pide.solve_pide(spec, "lower", TimeGrid(0, 1, 5), sg)
    assert info.value.required_steps == need
    sol = pide.solve_pide(spec, "lower", TimeGrid(0, 1, need), sg)
    assert sol.cfl <= 0.9


@pytest.mark.parametrize("name", ["separated_drift", "jump_heavy", "driver_coupled", "bilinear_gap"])
def test_one_step_monotone(name):
    spec = load_problem(name)
    worst, used = pide_monotonicity(spec, StateGrid.uniform(-2, 2, 41), n_pairs=30)
    assert used > 20
    assert worst <= 1e-12


def test_consistency_second_order_off_grid_jumps():
    spec = make_spec(b=lambda t, x, u, v: 0.3 + 0.1 * x, sigma=lambda t, x, u, v: np.full((len(x), 1, 1), 0.3),
                     gamma=lambda t, x, u, v, e: 0.13 * e[0] + 0 * x,
                     f=lambda t, x, y, z, k, u, v: 0.2 * y + 0.3 * z[:, 0] + 0.5 * k,
                     l=lambda x, e: 0.5 + 0 * x[:, 0], atoms=[(1.0, 1.0), (-1.0, 0.5)], C=2.0)
    errors, order = hamiltonian_consistency(spec)
    assert order >= 1.8
    assert errors[-1] < errors[0]


def test_isaacs_gap_cases():
    sg = StateGrid.uniform(-2, 2, 41)
    g = TimeGrid(0, 1, 10)
    probe = lambda x: x[:, 0] + 0.5 * np.sqrt(1 + x[:, 0] ** 2)  # noqa: E731
    sep = pide.isaacs_gap(load_problem("separated_drift"), g, sg, probe, steps=[0])
    assert sep.max_gap <= 1e-12
    one = pide.isaacs_gap(load_problem("zero_dynamics"), g, sg, probe, steps=[0])
    assert one.max_gap == 0.0
    bil = pide.isaacs_gap(load_problem("bilinear_gap"), g, sg, probe, steps=[0])
    assert bil.max_gap > 0.1
    assert set(bil.to_dict()) == {"max_gap", "mean_gap", "argmax"}
