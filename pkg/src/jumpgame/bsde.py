"""Backward solver for BSDEs with jumps along the controlled forward dynamics.

The discrete scheme is implicit in ``y`` and explicit in ``(z, k)``::

    y_k(x) = E[y_{k+1}(X')] + dt f(s_k, x, y_k(x), z_k(x), kbar_k(x), u, v)
    z_k(x) = E[y_{k+1}(X') dB] / dt
    K_k(x)_i = E[y_{k+1}(X') | jump of atom i] - E[y_{k+1}(X') | no jump]
    kbar_k(x) = sum_i lambda_i K_k(x)_i l(x, e_i)

where ``X'`` is the one-step Euler successor of ``x``.  In grid mode the next
field is a multilinear interpolant on a :class:`StateGrid`; in tree mode
every node value is an exact enumeration of the outcome tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernel, oracle
from .errors import ConfigurationError, NumericalError
from .grids import StateGrid
from .kernel import Engine
from .levy_paths import TimeGrid
from .policies import Policy, choose, constant_policy, control_groups


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    grid: TimeGrid
    sgrid: StateGrid
    y: np.ndarray       # (n_steps+1, N)
    z: np.ndarray       # (n_steps, N, d)
    kbar: np.ndarray    # (n_steps, N)
    k: np.ndarray       # (n_steps, N, A)
    u_index: np.ndarray  # (n_steps, N)
    v_index: np.ndarray
    engine: Engine

    def field(self, step: int, what: str = "y"):
        """Interpolant of ``y``, ``kbar`` or ``z<j>`` (1-based Brownian component) at a time step."""
        if what == "y":
            return self.sgrid.interpolant(self.y[step])
        if what == "kbar":
            return self.sgrid.interpolant(self.kbar[step])
        if what.startswith("z"):
            j = int(what[1:] or 1) - 1
            if not 0 <= j < self.z.shape[2]:
                raise ConfigurationError(f"no Brownian component {what!r}")
            return self.sgrid.interpolant(self.z[step][:, j])
        raise ConfigurationError(f"unknown field {what!r}")


def _as_callable(terminal, sgrid: StateGrid | None, spec) -> Callable:
    if terminal is None:
        return spec.terminal
    if callable(terminal):
        return terminal
    if sgrid is None:
        raise ConfigurationError("nodal terminal values need a state grid")
    return sgrid.interpolant(np.asarray(terminal, dtype=float))


def grid_step(spec, rule, t, x, iu, iv, next_fn, engine: Engine):
    """One backward step at states ``x`` with per-node control indices."""
    N = len(x)
    y = np.empty(N)
    z = np.empty((N, spec.brownian_dim))
    kb = np.empty(N)
    kk = np.empty((N, spec.n_atoms))
    for a, b, mask in control_groups(iu, iv):
        u, v = spec.u_set[a], spec.v_set[b]
        children = kernel.child_states(spec, rule, t, x[mask], u, v)
        y_next = np.asarray(next_fn(children.reshape(-1, spec.state_dim)), dtype=float).reshape(children.shape[:-1])
        res = kernel.step_value(spec, rule, t, x[mask], u, v, y_next, tol=engine.tol, max_iter=engine.max_iter)
        y[mask], z[mask], kb[mask], kk[mask] = res.y, res.z, res.kbar, res.k
    return y, z, kb, kk


def solve_bsde(spec, grid: TimeGrid, sgrid: StateGrid, u_policy: Policy | None = None,
               v_policy: Policy | None = None, terminal=None, engine: Engine = Engine()) -> BsdeSolution:
    """Solve the discrete BSDE at every (step, node) of ``grid`` x ``sgrid``.

    ``terminal`` is a callable ``x -> values`` or nodal values on ``sgrid``;
    it defaults to the terminal function of the problem.  Policies must be
    feedback maps; reacting policies are honoured but noise-reading ones
    are refused.
    """
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    if u_policy.reads_noise or v_policy.reads_noise:
        raise ConfigurationError("backward solvers need feedback policies", module="bsde", operation="solve_bsde")
    kernel.check_step(spec, grid.delta, operation="solve_bsde")
    term = _as_callable(terminal, sgrid, spec)
    x = sgrid.nodes
    n, N = grid.n_steps, len(x)
    y = np.empty((n + 1, N))
    z = np.empty((n, N, spec.brownian_dim))
    kb = np.empty((n, N))
    kk = np.empty((n, N, spec.n_atoms))
    ui = np.empty((n, N), dtype=np.int64)
    vi = np.empty((n, N), dtype=np.int64)
    y[n] = np.broadcast_to(np.asarray(term(x), dtype=float), (N,))
    times = grid.nodes
    if engine.mode == "tree":
        for k in range(n - 1, -1, -1):
            res = oracle.oracle_bsde(spec, grid.restrict(k), x, u_policy, v_policy, term, m=engine.gauss,
                                     step_offset=k, tol=engine.tol, max_iter=engine.max_iter)
            y[k], z[k], kb[k], kk[k] = res.root_y, res.z[0], res.kbar[0], res.k[0]
            ui[k], vi[k] = res.tree.controls[0]
    else:
        rule = kernel.step_rule(spec, grid.delta, engine.gauss)
        for k in range(n - 1, -1, -1):
            next_fn = term if k == n - 1 else sgrid.interpolant(y[k + 1])
            iu, iv = choose(k, x, u_policy, v_policy)
            y[k], z[k], kb[k], kk[k] = grid_step(spec, rule, float(times[k]), x, iu, iv, next_fn, engine)
            ui[k], vi[k] = iu, iv
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite BSDE value", module="bsde", operation="solve_bsde")
    return BsdeSolution(grid, sgrid, y, z, kb, kk, ui, vi, engine)


class BlockValue:
    """``x -> Y_t(x)`` for a block BSDE started from a terminal datum."""

    def __init__(self, spec, grid, sgrid, u_policy, v_policy, eta, engine, solution=None):
        self.spec, self.grid, self.sgrid = spec, grid, sgrid
        self.u_policy, self.v_policy, self.eta, self.engine = u_policy, v_policy, eta, engine
        self.solution = solution

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.grid is None:
            return np.asarray(self.eta(x), dtype=float)
        if self.engine.mode == "tree":
            return oracle.oracle_bsde(self.spec, self.grid, x, self.u_policy, self.v_policy, self.eta,
                                      m=self.engine.gauss, tol=self.engine.tol).root_y
        return self.sgrid.interpolant(self.solution.y[0])(x)


def semigroup_apply(spec, grid: TimeGrid | None, sgrid: StateGrid, u_policy=None, v_policy=None, eta=None,
                    engine: Engine = Engine()) -> BlockValue:
    """Backward semigroup: map a terminal datum at the block end to the value at the block start.

    ``grid=None`` denotes an empty block and returns ``eta`` itself.
    """
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    eta = _as_callable(eta, sgrid, spec)
    if grid is None:
        return BlockValue(spec, None, sgrid, u_policy, v_policy, eta, engine)
    sol = None
    if engine.mode == "grid":
        sol = solve_bsde(spec, grid, sgrid, u_policy, v_policy, eta, engine)
    return BlockValue(spec, grid, sgrid, u_policy, v_policy, eta, engine, sol)


# --------------------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ComparisonReport:
    status: str               # "pass" | "fail" | "hypotheses not met"
    min_difference: float | None
    tolerance: float
    witness: dict | None
    unmet: tuple = ()

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self):
        return {"status": self.status, "min_difference": self.min_difference, "tolerance": self.tolerance,
                "witness": self.witness, "unmet": list(self.unmet)}


def driver_sensitivities(spec, rng, n_probe=256, box=3.0, t=0.0):
    """Probe estimates of sup |df/dz| and the range of df/dk (by difference quotients)."""
    n, d = spec.state_dim, spec.brownian_dim
    x = rng.uniform(-box, box, (n_probe, n))
    y = rng.uniform(-box, box, n_probe)
    z = rng.uniform(-box, box, (n_probe, d))
    k = rng.uniform(-box, box, n_probe)
    h = 1e-4
    lz, lk_max, lk_min = 0.0, 0.0, math.inf
    for u in spec.u_set.points:
        for v in spec.v_set.points:
            base = spec.driver(t, x, y, z, k, u, v)
            for j in range(d):
                dz = np.zeros(d)
                dz[j] = h
                lz = max(lz, float(np.max(np.abs(spec.driver(t, x, y, z + dz, k, u, v) - base))) / h)
            dk = (spec.driver(t, x, y, z, k + h, u, v) - base) / h
            lk_max = max(lk_max, float(dk.max()))
            lk_min = min(lk_min, float(dk.min()))
    return lz, lk_min, lk_max


def _drivers_ordered(spec, spec_prime, grid, x, y, z, kb, kbp) -> bool:
    for t in grid.nodes[:-1]:
        for u in spec.u_set.points:
            for v in spec.v_set.points:
                g = spec.driver(float(t), x, y, z, kb, u, v)
                gp = spec_prime.driver(float(t), x, y, z, kbp, u, v)
                if np.any(g < gp - 1e-15 * np.maximum(1, np.abs(g))):
                    return False
    return True


def comparison_preconditions(spec, spec_prime, grid: TimeGrid, states, m: int, rng, n_probe=256, box=3.0):
    """List of unmet hypotheses (empty when the comparison may be asserted)."""
    unmet = []
    if spec.levy != spec_prime.levy or spec.u_set != spec_prime.u_set or spec.v_set != spec_prime.v_set:
        unmet.append("instances must share noise and control sets")
    xi, xi_p = spec.terminal(states), spec_prime.terminal(states)
    if np.any(xi < xi_p):
        unmet.append("terminal values not ordered")
    n, d = spec.state_dim, spec.brownian_dim
    x = rng.uniform(-box, box, (n_probe, n))
    y = rng.uniform(-box, box, n_probe)
    z = rng.uniform(-box, box, (n_probe, d))
    C = spec.lipschitz_C
    kvec = rng.uniform(-box, box, (n_probe, spec.n_atoms))
    w, wp = (spec.jump_weights(x), spec_prime.jump_weights(x)) if spec.n_atoms else (np.zeros((n_probe, 0)),) * 2
    rates = np.asarray(spec.levy.rates)
    kb = (kvec * w * rates).sum(axis=1)
    kbp = (kvec * wp * rates).sum(axis=1)
    if not _drivers_ordered(spec, spec_prime, grid, x, y, z, kb, kbp):
        unmet.append("driver not ordered")
    for e in spec.levy.marks:
        lv = spec.jump_weight(x, e)
        if np.any(lv < 0) or np.any(lv > C * min(1.0, float(np.linalg.norm(e))) * (1 + 1e-12)):
            unmet.append("jump weight l outside [0, C(1 ^ |e|)]")
            break
    lz, lk_min, lk_max = driver_sensitivities(spec, rng, n_probe, box)
    if lk_min < -1e-9:
        unmet.append("driver not nondecreasing in k")
    # Discrete monotonicity of the one-step operator.
    rule = kernel.step_rule(spec, grid.delta, m)
    db = float(np.max(np.abs(rule.dB))) if rule.dB.size else 0.0
    lmax = max([C * min(1.0, float(np.linalg.norm(e))) for e in spec.levy.marks], default=0.0)
    p0 = float(rule.jump_probs[0])
    if lz * db > 1.0 or p0 * (1 - lz * db) < grid.delta * max(lk_max, 0.0) * lmax * spec.levy.total_rate:
        unmet.append("step too coarse for a monotone scheme (|f_z| max|dB| or jump weight too large)")
    return unmet


def comparison_check(spec, spec_prime, grid: TimeGrid, roots=None, sgrid: StateGrid | None = None,
                     engine: Engine = Engine(mode="tree", gauss=3), u_policy=None, v_policy=None,
                     tol: float | None = None, seed: int = 0) -> ComparisonReport:
    """Solve both instances on a shared discretisation and report ``min (y - y')``.

    Tree mode compares every node of the outcome tree grown from ``roots``;
    grid mode compares every (step, node) of ``sgrid``.
    """
    rng = np.random.default_rng(seed)
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    if engine.mode == "tree":
        tol = 1e-10 if tol is None else tol
        roots = np.atleast_2d(np.asarray(roots if roots is not None else np.zeros(spec.state_dim), dtype=float))
        tree = oracle.build_policy_tree(spec, grid, roots, u_policy, v_policy, engine.gauss)
        unmet = comparison_preconditions(spec, spec_prime, grid, tree.levels[-1], engine.gauss, rng)
        if unmet:
            return ComparisonReport("hypotheses not met", None, tol, None, tuple(unmet))
        a = oracle.oracle_bsde(spec, grid, roots, tree=tree, tol=engine.tol)
        b = oracle.oracle_bsde(spec_prime, grid, roots, tree=tree, tol=engine.tol)
        diffs = [ya - yb for ya, yb in zip(a.y, b.y)]
    else:
        tol = 1e-6 if tol is None else tol
        unmet = comparison_preconditions(spec, spec_prime, grid, sgrid.nodes, engine.gauss, rng)
        if unmet:
            return ComparisonReport("hypotheses not met", None, tol, None, tuple(unmet))
        a = solve_bsde(spec, grid, sgrid, u_policy, v_policy, engine=engine)
        b = solve_bsde(spec_prime, grid, sgrid, u_policy, v_policy, engine=engine)
        diffs = list(a.y - b.y)
    mins = [float(dv.min()) for dv in diffs]
    step = int(np.argmin(mins))
    node = int(np.argmin(diffs[step]))
    worst = mins[step]
    status = "pass" if worst >= -tol else "fail"
    return ComparisonReport(status, worst, tol, {"step": step, "node": node})


# --------------------------------------------------------------------------- stability


def stability_threshold(C: float) -> float:
    return 2.0 + 2.0 * C + 4.0 * C * C


@dataclass(frozen=True)
class StabilityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    beta: float
    slack: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1.0 + self.slack)))

    @property
    def worst_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.rhs > 0, self.lhs / np.where(self.rhs > 0, self.rhs, 1), np.where(self.lhs > 0, np.inf, 0))
        return float(np.max(r))

    def to_dict(self):
        return {"lhs": self.lhs.tolist(), "rhs": self.rhs.tolist(), "beta": self.beta, "slack": self.slack,
                "passed": self.passed, "worst_ratio": self.worst_ratio}


def _level_probabilities(rule: kernel.StepRule, depth: int, n_roots: int):
    w = rule.weights.reshape(-1)
    probs = [np.ones(n_roots)]
    for _ in range(depth):
        probs.append(np.multiply.outer(probs[-1], w).reshape(-1))
    return probs


def stability_check(spec, grid: TimeGrid, roots, xi1, xi2, phi1=None, phi2=None, beta: float | None = None, *,
                    m: int = 3, u_policy=None, v_policy=None, slack: float | None = None) -> StabilityReport:
    """Evaluate both sides of the a-priori difference estimate on the outcome tree.

    The two BSDEs share the problem's driver ``g`` and differ by terminal values
    ``xi1``/``xi2`` (callables of the state) and additive driver
    perturbations ``phi1``/``phi2`` (callables ``(t, x) -> values``).
    Integrals become left-point sums with weights ``exp(beta (s_k - t0))``.
    """
    C = spec.lipschitz_C
    thr = stability_threshold(C)
    beta = thr if beta is None else float(beta)
    if beta < thr:
        raise ConfigurationError(f"beta = {beta} is below the threshold 2 + 2C + 4C^2 = {thr}",
                                 module="bsde", operation="stability_check", witness={"beta": beta, "threshold": thr})
    zero = lambda t, x: np.zeros(len(x))  # noqa: E731
    phi1, phi2 = phi1 or zero, phi2 or zero
    delta = grid.delta
    slack = 10.0 * delta if slack is None else slack

    def perturbed(phi):
        f = spec.coefficients.f
        return spec.with_coefficients(f=lambda t, x, y, z, k, u, v: f(t, x, y, z, k, u, v) + phi(t, x))

    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    tree = oracle.build_policy_tree(spec, grid, roots, u_policy or constant_policy(0), v_policy or constant_policy(0), m)
    s1 = oracle.oracle_bsde(perturbed(phi1), grid, roots, tree=tree, terminal=xi1)
    s2 = oracle.oracle_bsde(perturbed(phi2), grid, roots, tree=tree, terminal=xi2)
    R = len(roots)
    probs = _level_probabilities(tree.rule, tree.depth, R)
    rates = np.asarray(spec.levy.rates)
    times = grid.nodes
    lhs_int = np.zeros(R)
    rhs_int = np.zeros(R)
    for k in range(tree.depth):
        wgt = probs[k] * math.exp(beta * (times[k] - grid.t0)) * delta
        dy = (s1.y[k] - s2.y[k]) ** 2
        dz = np.sum((s1.z[k] - s2.z[k]) ** 2, axis=1)
        dk = np.sum(rates * (s1.k[k] - s2.k[k]) ** 2, axis=1) if spec.n_atoms else 0.0
        x = tree.levels[k]
        dphi = (np.asarray(phi1(times[k], x), dtype=float) - np.asarray(phi2(times[k], x), dtype=float)) ** 2
        lhs_int += (wgt * (0.5 * (dy + dz) + 0.5 * dk)).reshape(R, -1).sum(axis=1)
        rhs_int += (wgt * dphi).reshape(R, -1).sum(axis=1)
    leaves = tree.levels[-1]
    dxi = (np.asarray(xi1(leaves), dtype=float) - np.asarray(xi2(leaves), dtype=float)) ** 2
    term = (probs[-1] * math.exp(beta * (grid.T - grid.t0)) * dxi).reshape(R, -1).sum(axis=1)
    lhs = (s1.y[0] - s2.y[0]) ** 2 + lhs_int
    rhs = term + rhs_int
    return StabilityReport(lhs, rhs, beta, slack)


# --------------------------------------------------------------------------- Markov identity


@dataclass(frozen=True)
class MarkovReport:
    discrepancy: float
    bound: float
    mode: str
    values: tuple

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.bound

    def to_dict(self):
        return {"discrepancy": self.discrepancy, "bound": self.bound, "mode": self.mode,
                "passed": self.passed, "values": list(self.values)}


def partition_states(xs, labels):
    """Random initial state ``zeta = sum_i x_i 1_{A_i}`` from per-path partition labels."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return xs[np.asarray(labels)]


def markov_identity_check(spec, grid: TimeGrid, xs, labels, *, sgrid: StateGrid | None = None,
                          engine: Engine = Engine(mode="tree", gauss=3), u_policy=None, v_policy=None,
                          tol: float = 1e-12, safety: float = 2.0) -> MarkovReport:
    """Compare ``Y`` started from the random state ``zeta`` with ``sum_i 1_{A_i} u(t, x_i)``.

    ``labels[p]`` is the partition cell of sample path ``p`` (generated from
    pre-``t`` noise by the caller).  In tree mode both sides are exact; in
    grid mode the left side is read off the solved field at ``zeta`` and the
    right side is a pointwise first step, so they differ by interpolation
    error and the reported bound is ``safety * h^2/8 * max|D^2 y_1|``.
    """
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    zeta = partition_states(xs, labels)
    if engine.mode == "tree":
        joint = oracle.oracle_bsde(spec, grid, zeta, u_policy, v_policy, m=engine.gauss, tol=engine.tol).root_y
        single = np.array([oracle.oracle_bsde(spec, grid, x[None], u_policy, v_policy, m=engine.gauss,
                                              tol=engine.tol).root_y[0] for x in xs])
        rhs = single[np.asarray(labels)]
        disc = float(np.max(np.abs(joint - rhs)))
        return MarkovReport(disc, tol, "tree", tuple(single.tolist()))
    if sgrid is None:
        raise ConfigurationError("grid mode needs a state grid")
    sol = solve_bsde(spec, grid, sgrid, u_policy, v_policy, engine=engine)
    lhs = sol.field(0)(zeta)
    rule = kernel.step_rule(spec, grid.delta, engine.gauss)
    nxt = spec.terminal if grid.n_steps == 1 else sol.field(1)
    iu, iv = choose(0, xs, u_policy, v_policy)
    single = grid_step(spec, rule, grid.t0, xs, iu, iv, nxt, engine)[0]
    rhs = single[np.asarray(labels)]
    disc = float(np.max(np.abs(lhs - rhs)))
    curv = 0.0
    for axis, h in enumerate(sgrid.spacing):
        vals = sol.y[0].reshape(sgrid.shape)
        d2 = np.abs(np.diff(vals, 2, axis=axis)) / h ** 2 if sgrid.shape[axis] > 2 else np.zeros(1)
        curv = max(curv, float(d2.max()) * h ** 2 / 8)
    bound = safety * curv + tol
    return MarkovReport(disc, bound, "grid", tuple(single.tolist()))
