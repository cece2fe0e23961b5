"""Lower and upper value functions by backward dynamic programming, plus checks.

At every step and node the players face a finite matrix game whose entries
are one-step backward-semigroup values ``G^{u,v}[W_{k+1}](x)``.  The lower
value lets the minimiser answer each action of the maximiser (max-min); the
upper value reverses the roles (min-max).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel, oracle
from .bsde import grid_step, solve_bsde
from .errors import AlignmentError, ConfigurationError, DomainError, NumericalError
from .forward import simulate_batch
from .grids import StateGrid
from .kernel import Engine
from .levy_paths import TimeGrid, sample_paths, segment_swap
from .oracle import minimax
from .policies import Policy, constant_policy, feedback_policy


@dataclass(frozen=True, eq=False)
class ValueField:
    which: str
    tgrid: TimeGrid
    sgrid: StateGrid
    values: np.ndarray      # (n_steps+1, N)
    u_index: np.ndarray     # (n_steps, N) saddle selection
    v_index: np.ndarray
    pair_values: np.ndarray | None = None  # (n_steps, N, p, q) when kept
    engine: Engine = field(default_factory=Engine)

    def at(self, step: int):
        return self.sgrid.interpolant(self.values[step])

    def saddle_policies(self):
        """Feedback policies replaying the stored selection (nearest node)."""
        axes = self.sgrid.axes

        def nearest(states):
            idx = []
            for j, a in enumerate(axes):
                i = np.clip(np.searchsorted(a, states[:, j]), 1, len(a) - 1)
                left = np.abs(states[:, j] - a[i - 1]) <= np.abs(a[i] - states[:, j])
                idx.append(np.where(left, i - 1, i))
            return np.ravel_multi_index(tuple(idx), self.sgrid.shape)

        return (feedback_policy(lambda k, s: self.u_index[k][nearest(s)], "saddle-u"),
                feedback_policy(lambda k, s: self.v_index[k][nearest(s)], "saddle-v"))


def _check_which(which):
    if which not in ("lower", "upper"):
        raise ConfigurationError(f"which must be 'lower' or 'upper', got {which!r}")


def step_game(spec, rule, t, x, next_fn, engine: Engine):
    """(N, p, q) matrix of one-step semigroup values at states ``x``."""
    p, q = len(spec.u_set), len(spec.v_set)
    N, n = len(x), spec.state_dim
    children = np.empty((p, q, N, rule.n_gauss, rule.n_alternatives, n))
    for a in range(p):
        for b in range(q):
            children[a, b] = kernel.child_states(spec, rule, t, x, spec.u_set[a], spec.v_set[b])
    y_next = np.asarray(next_fn(children.reshape(-1, n)), dtype=float).reshape(children.shape[:-1])
    G = np.empty((N, p, q))
    for a in range(p):
        for b in range(q):
            G[:, a, b] = kernel.step_value(spec, rule, t, x, spec.u_set[a], spec.v_set[b], y_next[a, b],
                                           tol=engine.tol, max_iter=engine.max_iter).y
    return G


def solve_value(spec, which: str, grid: TimeGrid, sgrid: StateGrid, engine: Engine = Engine(), *,
                terminal=None, keep_pairs: bool = False) -> ValueField:
    """Backward dynamic programming for the lower (``which="lower"``) or upper value."""
    _check_which(which)
    if len(spec.u_set) == 0 or len(spec.v_set) == 0:
        raise ConfigurationError("empty control set", module="game", operation="solve_value")
    kernel.check_step(spec, grid.delta, operation="solve_value")
    term = terminal if terminal is not None else spec.terminal
    if not callable(term):
        term = sgrid.interpolant(np.asarray(term, dtype=float))
    x = sgrid.nodes
    n, N = grid.n_steps, len(x)
    p, q = len(spec.u_set), len(spec.v_set)
    W = np.empty((n + 1, N))
    ui = np.empty((n, N), dtype=np.int64)
    vi = np.empty((n, N), dtype=np.int64)
    pairs = np.empty((n, N, p, q)) if keep_pairs else None
    W[n] = np.broadcast_to(np.asarray(term(x), dtype=float), (N,))
    times = grid.nodes
    if engine.mode == "tree":
        for k in range(n - 1, -1, -1):
            res = oracle.oracle_game(spec, grid.restrict(k), x, which, m=engine.gauss, terminal=term,
                                     tol=engine.tol, max_iter=engine.max_iter)
            W[k], ui[k], vi[k] = res.values[0], res.u_choice[0], res.v_choice[0]
            if keep_pairs:
                pairs[k] = res.pair_values[0]
    else:
        rule = kernel.step_rule(spec, grid.delta, engine.gauss)
        for k in range(n - 1, -1, -1):
            next_fn = term if k == n - 1 else sgrid.interpolant(W[k + 1])
            G = step_game(spec, rule, float(times[k]), x, next_fn, engine)
            W[k], ui[k], vi[k], _ = minimax(G, which)
            if keep_pairs:
                pairs[k] = G
    if not np.all(np.isfinite(W)):
        raise NumericalError("non-finite value", module="game", operation="solve_value")
    return ValueField(which, grid, sgrid, W, ui, vi, pairs, engine)


def replay_selection(spec, field_: ValueField, terminal=None) -> float:
    """Largest deviation between stored values and the stored control pair replayed through one step."""
    grid, sgrid = field_.tgrid, field_.sgrid
    rule = kernel.step_rule(spec, grid.delta, field_.engine.gauss)
    x = sgrid.nodes
    term = terminal if terminal is not None else spec.terminal
    worst = 0.0
    for k in range(grid.n_steps):
        nxt = term if k == grid.n_steps - 1 else sgrid.interpolant(field_.values[k + 1])
        y = grid_step(spec, rule, float(grid.nodes[k]), x, field_.u_index[k], field_.v_index[k], nxt, field_.engine)[0]
        worst = max(worst, float(np.max(np.abs(y - field_.values[k]))))
    return worst


# --------------------------------------------------------------------------- DPP


@dataclass(frozen=True)
class DppRung:
    n_steps: int
    spacing: float
    discrepancy: float


@dataclass(frozen=True)
class DppReport:
    mode: str
    split: int
    discrepancy: float
    ladder: tuple = ()
    tolerance: float = 1e-12

    @property
    def monotone(self) -> bool:
        d = [r.discrepancy for r in self.ladder]
        return all(b <= a + self.tolerance for a, b in zip(d, d[1:])) and (len(d) < 2 or d[-1] < d[0])

    @property
    def passed(self) -> bool:
        if self.mode == "tree":
            return self.discrepancy <= self.tolerance
        return self.monotone if self.ladder else True

    def to_dict(self):
        return {"mode": self.mode, "split": self.split, "discrepancy": self.discrepancy,
                "monotone": self.monotone, "passed": self.passed,
                "ladder": [r.__dict__ for r in self.ladder]}


def tree_dpp_discrepancy(spec, which, grid: TimeGrid, root, split: int, m: int = 3) -> float:
    """Direct tree game versus the game on ``[t0, t_split]`` with the tail values as terminal data."""
    _check_which(which)
    if not 0 <= split <= grid.n_steps:
        raise ConfigurationError(f"split {split} outside [0, {grid.n_steps}]")
    root = np.atleast_2d(np.asarray(root, dtype=float))
    direct = oracle.oracle_game(spec, grid, root, which, m=m)
    if split in (0, grid.n_steps):
        return 0.0
    head = grid.restrict(0, split)
    head_tree = oracle.build_game_tree(spec, head, root, m)
    tail = oracle.oracle_game(spec, grid.restrict(split), head_tree.levels[-1], which, m=m)
    composed = oracle.oracle_game(spec, head, root, which, m=m, terminal_values=tail.values[0], tree=head_tree)
    return float(np.max(np.abs(direct.root_value - composed.root_value)))


def _composed_grid_value(spec, which, grid, sgrid, split, engine, tail_grid):
    tail = solve_value(spec, which, grid.restrict(split), tail_grid, engine)
    head = solve_value(spec, which, grid.restrict(0, split), sgrid, engine, terminal=tail.at(0))
    return head.values[0]


def dpp_check(spec, which: str, grid: TimeGrid, sgrid: StateGrid, split: int, engine: Engine = Engine(), *,
              rungs: int = 3, region: float | None = None, root=None) -> DppReport:
    """Direct solve versus composition at step ``split``.

    Tree mode compares root values exactly.  Grid mode compares the direct
    field at ``t0`` with the composition whose tail block is solved on a
    half-cell shifted state grid, on a ladder halving both ``dx`` and ``dt``.
    On an unshifted grid the composition is the direct recursion itself, so
    the shifted tail is what makes the check informative.  ``region``
    restricts the comparison to ``|x| <= region``.
    """
    _check_which(which)
    if engine.mode == "tree":
        root = np.zeros(spec.state_dim) if root is None else root
        disc = tree_dpp_discrepancy(spec, which, grid, root, split, engine.gauss)
        return DppReport("tree", split, disc, (), 1e-12)
    if not 0 < split <= grid.n_steps:
        raise ConfigurationError(f"split must lie in (0, {grid.n_steps}]")
    ladder = []
    g, s, kk = grid, sgrid, split
    for _ in range(max(rungs, 1)):
        if kk == g.n_steps:
            disc = 0.0
        else:
            direct = solve_value(spec, which, g, s, engine).values[0]
            composed = _composed_grid_value(spec, which, g, s, kk, engine, s.shifted())
            mask = np.ones(s.size, dtype=bool) if region is None else np.all(np.abs(s.nodes) <= region, axis=1)
            disc = float(np.max(np.abs(direct - composed)[mask]))
        ladder.append(DppRung(g.n_steps, float(np.max(s.spacing)), disc))
        g, s, kk = g.refine(2), s.refine(), kk * 2
    return DppReport("grid", split, ladder[0].discrepancy, tuple(ladder))


# --------------------------------------------------------------------------- regularity


@dataclass(frozen=True)
class RegularityReport:
    lipschitz_ratio: float
    holder_exponent: float | None
    holder_constant: float | None
    growth_ratio: float
    samples: tuple = ()

    def to_dict(self):
        return {"lipschitz_ratio": self.lipschitz_ratio, "holder_exponent": self.holder_exponent,
                "holder_constant": self.holder_constant, "growth_ratio": self.growth_ratio,
                "samples": [list(s) for s in self.samples]}


def regularity_check(field_: ValueField, *, region: float | None = None, min_steps: int = 8,
                     min_nodes: int = 33) -> RegularityReport:
    """Spatial Lipschitz ratio, fitted time-Holder exponent and growth ratio of a value field.

    The exponent comes from a least-squares fit of ``log D_j`` against
    ``log(j dt)``, where ``D_j = max_{k, x} |W(t_k, x) - W(t_{k+j}, x)| / (1 + |x|)``.
    A field constant in time yields ``None`` (no fit possible, bound holds trivially).
    """
    grid, sgrid = field_.tgrid, field_.sgrid
    if grid.n_steps < min_steps or min(sgrid.shape) < min_nodes:
        raise ConfigurationError(f"regularity needs >= {min_steps} steps and >= {min_nodes} nodes per axis")
    W = field_.values
    x = sgrid.nodes
    mask = np.ones(len(x), dtype=bool) if region is None else np.all(np.abs(x) <= region, axis=1)
    shape = sgrid.shape
    ratio = 0.0
    for axis, a in enumerate(sgrid.axes):
        vals = W.reshape((len(W),) + shape)
        dv = np.abs(np.diff(vals, axis=axis + 1)) / np.expand_dims(np.diff(a), tuple(i for i in range(len(shape) + 1)
                                                                                       if i != axis + 1))
        m = mask.reshape(shape)
        pair = np.logical_and(np.take(m, range(shape[axis] - 1), axis=axis), np.take(m, range(1, shape[axis]), axis=axis))
        ratio = max(ratio, float(np.max(dv[:, pair])))
    norm = 1.0 + np.linalg.norm(x, axis=1)
    growth = float(np.max(np.abs(W[:, mask]) / norm[mask]))
    n = grid.n_steps
    lags = sorted({max(1, int(round(n * f))) for f in (1 / 16, 1 / 8, 1 / 4, 1 / 2)} | {1})
    samples = []
    for j in lags:
        if j > n:
            continue
        D = float(np.max(np.abs(W[: n + 1 - j, mask] - W[j:, mask]) / norm[mask]))
        samples.append((j * grid.delta, D))
    usable = [(h, D) for h, D in samples if D > 1e-13]
    if len(usable) < 2:
        return RegularityReport(ratio, None, None, growth, tuple(samples))
    lh = np.log([h for h, _ in usable])
    lD = np.log([D for _, D in usable])
    alpha, logc = np.polyfit(lh, lD, 1)
    return RegularityReport(ratio, float(alpha), float(math.exp(logc)), growth, tuple(samples))


# --------------------------------------------------------------------------- determinism


@dataclass(frozen=True)
class DeterminismReport:
    max_swap_change: float
    estimate_1: float
    estimate_2: float
    stderr_1: float
    stderr_2: float
    n_paths: int

    @property
    def invariant(self) -> bool:
        return self.max_swap_change == 0.0

    @property
    def agree(self) -> bool:
        return abs(self.estimate_1 - self.estimate_2) <= 3.0 * math.hypot(self.stderr_1, self.stderr_2)

    @property
    def passed(self) -> bool:
        return self.invariant and self.agree

    def to_dict(self):
        return {"max_swap_change": self.max_swap_change, "estimate_1": self.estimate_1, "estimate_2": self.estimate_2,
                "stderr_1": self.stderr_1, "stderr_2": self.stderr_2, "n_paths": self.n_paths,
                "invariant": self.invariant, "agree": self.agree, "passed": self.passed}


def pathwise_cost(spec, batch, fields, start_step: int) -> np.ndarray:
    """``Phi(X_T) + sum_k dt f(s_k, X_k, y_k(X_k), z_k(X_k), kbar_k(X_k), u_k, v_k)`` per path.

    ``fields`` is a BSDE solution on the post-``t`` grid supplying the
    ``(y, z, kbar)`` arguments of the driver along the path.
    """
    states = batch.states
    P, steps = states.shape[0], states.shape[1] - 1
    J = np.array(spec.terminal(states[:, -1]), dtype=float)
    times = batch.grid.nodes
    delta = batch.grid.delta
    for j in range(steps):
        x = states[:, j]
        y = fields.field(j)(x)
        z = np.stack([fields.field(j, f"z{c + 1}")(x) for c in range(spec.brownian_dim)], axis=1)
        kb = fields.field(j, "kbar")(x)
        iu, iv = batch.u_index[:, j], batch.v_index[:, j]
        fval = np.empty(P)
        for a in np.unique(iu):
            for b in np.unique(iv):
                m = (iu == a) & (iv == b)
                if m.any():
                    fval[m] = spec.driver(float(times[j]), x[m], y[m], z[m], kb[m], spec.u_set[a], spec.v_set[b])
        J = J + delta * fval
    return J


def pre_history_policy(threshold: float = 0.0, below: int = 0, above: int = -1) -> Policy:
    """Negative control: a policy reading the Brownian increment just before the start step.

    A sum over the whole pre-history would be blind to the segment swap, which
    only permutes increments; the last pre-start increment is not.
    """
    def rule(step, states, noise):
        past = noise.increments[:, noise.start_step - 1].sum(axis=1)
        return np.where(past < threshold, below, above)
    return Policy(rule, reads_noise=True, name="reads-pre-history")


def determinism_check(spec, t: float, x, ell: float, n_bundles: int, *, n_steps_after: int = 8,
                      u_policy: Policy | None = None, v_policy: Policy | None = None, seed: int = 0,
                      sgrid: StateGrid | None = None, engine: Engine = Engine(),
                      cost_policies: tuple | None = None) -> DeterminismReport:
    """Segment-swap invariance of path costs and agreement of estimates from independent histories.

    The noise lives on ``[t - 2 ell, T]`` with the step ``(T - t)/n_steps_after``.
    ``cost_policies`` optionally fixes the feedback policies used for the
    driver fields of the path cost (defaults to the simulated policies).
    """
    T = spec.horizon
    delta = (T - t) / n_steps_after
    m = round(ell / delta)
    if m < 1 or abs(m * delta - ell) > 1e-9:
        raise AlignmentError(f"ell={ell} is not a multiple of the step {delta}")
    if t - 2 * ell < 0:
        raise DomainError("pre-history [t - 2 ell, t] must start at a nonnegative time")
    grid = TimeGrid(t - 2 * ell, T, n_steps_after + 2 * m)
    start = 2 * m
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    post = grid.restrict(start)
    if sgrid is None:
        x0 = float(np.max(np.abs(x)))
        sgrid = StateGrid.uniform(-x0 - 3, x0 + 3, 61, spec.state_dim)
    fu, fv = cost_policies or (u_policy, v_policy)
    fields = solve_bsde(spec, post, sgrid, fu, fv, engine=engine)
    b1 = sample_paths(spec.levy, grid, spec.brownian_dim, n_bundles, seed)
    swapped = [segment_swap(b, t, ell) for b in b1]
    J1 = pathwise_cost(spec, simulate_batch(spec, b1, x, u_policy, v_policy, start), fields, 0)
    Js = pathwise_cost(spec, simulate_batch(spec, swapped, x, u_policy, v_policy, start), fields, 0)
    b2 = sample_paths(spec.levy, grid, spec.brownian_dim, n_bundles, seed + 1_000_003)
    J2 = pathwise_cost(spec, simulate_batch(spec, b2, x, u_policy, v_policy, start), fields, 0)
    se = lambda J: float(np.std(J, ddof=1) / math.sqrt(len(J)))  # noqa: E731
    return DeterminismReport(float(np.max(np.abs(J1 - Js))), float(J1.mean()), float(J2.mean()), se(J1), se(J2),
                             n_bundles)
