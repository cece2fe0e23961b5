"""Exact reference solutions by enumerating the discretised noise tree.

Every node of the tree branches into ``m**d`` Gauss-Hermite increments times
``n_atoms + 1`` jump alternatives; game trees additionally branch over every
control pair.  Conditional expectations are then finite weighted sums, so the
backward recursions below are exact up to floating point.  The one-step
update and the weights come from :mod:`jumpgame.kernel`, the same code the
grid solvers use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .errors import ConfigurationError, OracleSizeError
from .levy_paths import TimeGrid
from .policies import choose, constant_policy, control_groups

MAX_NODES = 10**6
MAX_DEPTH = 12
MAX_GAUSS = 3
MAX_ATOMS = 3
MAX_PAIRS = 100
DUMP_CAP = 10**4


def estimate_nodes(n_roots: int, branching: int, depth: int) -> int:
    return int(n_roots * sum(branching ** k for k in range(depth + 1)))


def _check_size(spec, grid: TimeGrid, m: int, n_roots: int, pairs: int = 1) -> kernel.StepRule:
    if grid.n_steps > MAX_DEPTH:
        raise ConfigurationError(f"tree depth {grid.n_steps} exceeds {MAX_DEPTH}", module="oracle")
    if m > MAX_GAUSS:
        raise ConfigurationError(f"tree mode allows at most {MAX_GAUSS} Gauss-Hermite nodes, got {m}", module="oracle")
    if spec.n_atoms > MAX_ATOMS:
        raise ConfigurationError(f"tree mode allows at most {MAX_ATOMS} atoms, got {spec.n_atoms}", module="oracle")
    rule = kernel.step_rule(spec, grid.delta, m)
    est = estimate_nodes(n_roots, pairs * rule.branching, grid.n_steps)
    if est > MAX_NODES:
        raise OracleSizeError(f"outcome tree would have {est} nodes (limit {MAX_NODES})", est, module="oracle")
    return rule


def _terminal_at(spec, leaves, terminal, terminal_values):
    if terminal_values is not None:
        vals = np.asarray(terminal_values, dtype=float).reshape(-1)
        if len(vals) != len(leaves):
            raise ConfigurationError(f"terminal_values has {len(vals)} entries for {len(leaves)} leaves")
        return vals.copy()
    if terminal is None:
        return np.array(spec.terminal(leaves), dtype=float)
    return np.broadcast_to(np.asarray(terminal(leaves), dtype=float), (len(leaves),)).copy()


@dataclass(frozen=True, eq=False)
class OutcomeTree:
    """States of every tree level; level ``k`` lists children in row-major outcome order."""

    grid: TimeGrid
    rule: kernel.StepRule
    levels: list
    controls: list = field(default_factory=list)  # per level (iu, iv) for policy trees
    pairs: int = 1

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def branching(self) -> int:
        return self.rule.branching * self.pairs

    @property
    def n_nodes(self) -> int:
        return sum(len(s) for s in self.levels)

    def leaf_probabilities(self) -> np.ndarray:
        """Probability of every leaf below one root along one control path."""
        w = self.rule.weights.reshape(-1)
        probs = np.ones(1)
        for _ in range(self.depth):
            probs = np.multiply.outer(probs, w).reshape(-1)
        return probs

    def to_json(self, cap: int = DUMP_CAP) -> str:
        if self.n_nodes > cap:
            raise OracleSizeError(f"tree has {self.n_nodes} nodes; dump is capped at {cap}", self.n_nodes)
        doc = {
            "grid": self.grid.to_dict(),
            "branching": self.branching,
            "weights": self.rule.weights.reshape(-1).tolist(),
            "levels": [s.tolist() for s in self.levels],
        }
        return json.dumps(doc, sort_keys=True)


def leaf_probability_sum(spec, grid: TimeGrid, m: int = 3) -> float:
    rule = _check_size(spec, grid, m, 1)
    tree = OutcomeTree(grid, rule, [np.zeros((1, spec.state_dim))] * (grid.n_steps + 1))
    return math.fsum(tree.leaf_probabilities())


# --------------------------------------------------------------------------- BSDE on the tree


@dataclass(frozen=True, eq=False)
class OracleBsdeResult:
    tree: OutcomeTree
    y: list      # per level (N_k,)
    z: list      # per level k < depth (N_k, d)
    kbar: list
    k: list

    @property
    def root_y(self) -> np.ndarray:
        return self.y[0]

    @property
    def root_z(self) -> np.ndarray:
        return self.z[0] if self.z else np.zeros((len(self.y[0]), 0))

    @property
    def root_kbar(self) -> np.ndarray:
        return self.kbar[0] if self.kbar else np.zeros(len(self.y[0]))


def build_policy_tree(spec, grid: TimeGrid, roots, u_policy, v_policy, m: int = 3, step_offset: int = 0):
    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    rule = _check_size(spec, grid, m, len(roots))
    levels = [roots]
    controls = []
    nodes = grid.nodes
    for k in range(grid.n_steps):
        x = levels[-1]
        iu, iv = choose(step_offset + k, x, u_policy, v_policy)
        children = np.empty((len(x), rule.n_gauss, rule.n_alternatives, spec.state_dim))
        for a, b, mask in control_groups(iu, iv):
            children[mask] = kernel.child_states(spec, rule, float(nodes[k]), x[mask], spec.u_set[a], spec.v_set[b])
        controls.append((iu, iv))
        levels.append(children.reshape(-1, spec.state_dim))
    return OutcomeTree(grid, rule, levels, controls)


def oracle_bsde(spec, grid: TimeGrid, roots, u_policy=None, v_policy=None, terminal=None, *, m: int = 3,
                terminal_values=None, step_offset: int = 0, tol: float = 1e-14, max_iter: int = 50,
                tree: OutcomeTree | None = None) -> OracleBsdeResult:
    """Exact discrete BSDE values at every tree node for feedback policies.

    ``roots`` may hold several initial states; they share one vectorised
    sweep but never interact.
    """
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    if tree is None:
        tree = build_policy_tree(spec, grid, roots, u_policy, v_policy, m, step_offset)
    rule = tree.rule
    nodes = grid.nodes
    y = [None] * (tree.depth + 1)
    z, kb, kk = [None] * tree.depth, [None] * tree.depth, [None] * tree.depth
    y[-1] = _terminal_at(spec, tree.levels[-1], terminal, terminal_values)
    for k in range(tree.depth - 1, -1, -1):
        x = tree.levels[k]
        iu, iv = tree.controls[k]
        y_next = y[k + 1].reshape(len(x), rule.n_gauss, rule.n_alternatives)
        yk = np.empty(len(x))
        zk = np.empty((len(x), spec.brownian_dim))
        kbk = np.empty(len(x))
        kk_ = np.empty((len(x), spec.n_atoms))
        for a, b, mask in control_groups(iu, iv):
            res = kernel.step_value(spec, rule, float(nodes[k]), x[mask], spec.u_set[a], spec.v_set[b],
                                    y_next[mask], tol=tol, max_iter=max_iter)
            yk[mask], zk[mask], kbk[mask], kk_[mask] = res.y, res.z, res.kbar, res.k
        y[k], z[k], kb[k], kk[k] = yk, zk, kbk, kk_
    return OracleBsdeResult(tree, y, z, kb, kk)


# --------------------------------------------------------------------------- game on the tree


@dataclass(frozen=True, eq=False)
class OracleGameResult:
    """Exact lower or upper value on the game tree.

    ``values[k]`` holds the value at every level-``k`` node.  ``u_choice`` and
    ``v_choice`` hold the saddle selection; ``reaction[k]`` the responding
    player's best reply to each action of the leading player.
    """

    which: str
    tree: OutcomeTree
    values: list
    u_choice: list
    v_choice: list
    reaction: list
    pair_values: list

    @property
    def root_value(self) -> np.ndarray:
        return self.values[0]


def build_game_tree(spec, grid: TimeGrid, roots, m: int = 3) -> OutcomeTree:
    roots = np.atleast_2d(np.asarray(roots, dtype=float))
    p, q = len(spec.u_set), len(spec.v_set)
    if p * q > MAX_PAIRS:
        raise ConfigurationError(f"{p}x{q} control pairs exceed the oracle limit of {MAX_PAIRS}", module="oracle")
    rule = _check_size(spec, grid, m, len(roots), p * q)
    nodes = grid.nodes
    levels = [roots]
    for k in range(grid.n_steps):
        x = levels[-1]
        children = np.empty((len(x), p, q, rule.n_gauss, rule.n_alternatives, spec.state_dim))
        for a in range(p):
            for b in range(q):
                children[:, a, b] = kernel.child_states(spec, rule, float(nodes[k]), x, spec.u_set[a], spec.v_set[b])
        levels.append(children.reshape(-1, spec.state_dim))
    return OutcomeTree(grid, rule, levels, pairs=p * q)


def minimax(pair_values: np.ndarray, which: str):
    """Reduce ``(N, p, q)`` step-game values to the lower or upper value.

    Ties go to the lowest index.  Returns ``(value, u_idx, v_idx, reaction)``.
    """
    N = len(pair_values)
    rows = np.arange(N)
    if which == "lower":
        reply = np.argmin(pair_values, axis=2)               # v's reply to each u
        inner = np.take_along_axis(pair_values, reply[:, :, None], axis=2)[:, :, 0]
        iu = np.argmax(inner, axis=1)
        iv = reply[rows, iu]
        return inner[rows, iu], iu, iv, reply
    if which == "upper":
        reply = np.argmax(pair_values, axis=1)               # u's reply to each v
        inner = np.take_along_axis(pair_values, reply[:, None, :], axis=1)[:, 0, :]
        iv = np.argmin(inner, axis=1)
        iu = reply[rows, iv]
        return inner[rows, iv], iu, iv, reply
    raise ConfigurationError(f"which must be 'lower' or 'upper', got {which!r}")


def oracle_game(spec, grid: TimeGrid, roots, which: str = "lower", *, m: int = 3, terminal=None,
                terminal_values=None, tol: float = 1e-14, max_iter: int = 50,
                tree: OutcomeTree | None = None) -> OracleGameResult:
    """Exhaustive max-min (lower) or min-max (upper) over the game tree."""
    if which not in ("lower", "upper"):
        raise ConfigurationError(f"which must be 'lower' or 'upper', got {which!r}")
    if tree is None:
        tree = build_game_tree(spec, grid, roots, m)
    rule = tree.rule
    p, q = len(spec.u_set), len(spec.v_set)
    nodes = grid.nodes
    values = [None] * (tree.depth + 1)
    uc, vc, reac, pv = [None] * tree.depth, [None] * tree.depth, [None] * tree.depth, [None] * tree.depth
    values[-1] = _terminal_at(spec, tree.levels[-1], terminal, terminal_values)
    for k in range(tree.depth - 1, -1, -1):
        x = tree.levels[k]
        y_next = values[k + 1].reshape(len(x), p, q, rule.n_gauss, rule.n_alternatives)
        G = np.empty((len(x), p, q))
        for a in range(p):
            for b in range(q):
                G[:, a, b] = kernel.step_value(spec, rule, float(nodes[k]), x, spec.u_set[a], spec.v_set[b],
                                               y_next[:, a, b], tol=tol, max_iter=max_iter).y
        values[k], uc[k], vc[k], reac[k] = minimax(G, which)
        pv[k] = G
    return OracleGameResult(which, tree, values, uc, vc, reac, pv)
