"""Euler simulation of the controlled jump diffusion along sampled noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .kernel import euler_update, freeze
from .levy_paths import PathBundle, TimeGrid, sample_paths, stack_counts, stack_increments
from .policies import Policy, choose, constant_policy, control_groups


@dataclass(frozen=True, eq=False)
class NoiseView:
    """What a noise-reading policy may inspect: the full stacked noise of the batch."""

    increments: np.ndarray  # (P, n_steps, d)
    counts: np.ndarray      # (P, n_steps, A)
    start_step: int


@dataclass(frozen=True, eq=False)
class ForwardTrajectory:
    grid: TimeGrid
    states: np.ndarray      # (n_steps+1, n)
    u_index: np.ndarray     # (n_steps,)
    v_index: np.ndarray
    controls_u: np.ndarray  # (n_steps, p)
    controls_v: np.ndarray


@dataclass(frozen=True, eq=False)
class BatchTrajectory:
    grid: TimeGrid
    states: np.ndarray      # (P, n_steps+1, n)
    u_index: np.ndarray     # (P, n_steps)
    v_index: np.ndarray

    def path(self, spec, i: int) -> ForwardTrajectory:
        return ForwardTrajectory(self.grid, self.states[i], self.u_index[i], self.v_index[i],
                                 spec.u_set.points[self.u_index[i]], spec.v_set.points[self.v_index[i]])


def simulate_batch(spec, bundles, x0, u_policy: Policy | None = None, v_policy: Policy | None = None,
                   start_step: int = 0) -> BatchTrajectory:
    """Simulate every bundle from ``x0`` at grid node ``start_step`` up to the horizon of the grid.

    ``x0`` is one state (shared) or an array with one state per bundle.
    """
    if len(bundles) == 0:
        raise ConfigurationError("no path bundles given")
    grid = bundles[0].grid
    if any(b.grid != grid for b in bundles):
        raise ConfigurationError("all bundles must share one time grid")
    if bundles[0].d != spec.brownian_dim:
        raise ConfigurationError(f"bundles carry {bundles[0].d} Brownian coordinates, spec needs {spec.brownian_dim}",
                                 module="forward", operation="simulate")
    if bundles[0].n_atoms != spec.n_atoms:
        raise ConfigurationError("bundles were sampled from a different Levy measure", module="forward",
                                 operation="simulate")
    if not 0 <= start_step < grid.n_steps:
        raise ConfigurationError(f"start_step {start_step} outside the grid")
    u_policy = u_policy or constant_policy(0)
    v_policy = v_policy or constant_policy(0)
    P = len(bundles)
    n = spec.state_dim
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (P, n)))
    dB = stack_increments(bundles)
    counts = stack_counts(bundles).astype(float)
    noise = NoiseView(dB, counts, start_step)
    steps = grid.n_steps - start_step
    states = np.empty((P, steps + 1, n))
    states[:, 0] = x
    iu_all = np.empty((P, steps), dtype=np.int64)
    iv_all = np.empty((P, steps), dtype=np.int64)
    nodes = grid.nodes
    delta = grid.delta
    for j in range(steps):
        k = start_step + j
        iu, iv = choose(k, x, u_policy, v_policy, noise=noise)
        x_new = np.empty_like(x)
        for a, b, mask in control_groups(iu, iv):
            fc = freeze(spec, float(nodes[k]), x[mask], spec.u_set[a], spec.v_set[b])
            x_new[mask] = euler_update(fc, delta, dB[mask, k], counts[mask, k])
        if not np.all(np.isfinite(x_new)):
            bad = int(np.argmax(~np.all(np.isfinite(x_new), axis=1)))
            raise NumericalError("non-finite state in Euler step", module="forward", operation="simulate",
                                 witness={"step": k, "state": x[bad].tolist()})
        x = x_new
        states[:, j + 1] = x
        iu_all[:, j], iv_all[:, j] = iu, iv
    return BatchTrajectory(grid.restrict(start_step), states, iu_all, iv_all)


def simulate(spec, bundle: PathBundle, x0, u_policy=None, v_policy=None, start_step: int = 0) -> ForwardTrajectory:
    """Euler trajectory of one bundle; identical to the matching row of :func:`simulate_batch`."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if len(x0) != spec.state_dim:
        raise ConfigurationError(f"initial state has dimension {len(x0)}, spec has {spec.state_dim}",
                                 module="forward", operation="simulate")
    return simulate_batch(spec, [bundle], x0, u_policy, v_policy, start_step).path(spec, 0)


def write_trajectory_csv(spec, traj: ForwardTrajectory, path) -> None:
    def fmt(point):
        return ";".join(repr(float(c)) for c in np.atleast_1d(point))

    times = traj.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time"] + [f"x_{i + 1}" for i in range(traj.states.shape[1])] + ["u", "v"])
        for k in range(len(traj.states)):
            u = fmt(traj.controls_u[k]) if k < len(traj.controls_u) else ""
            v = fmt(traj.controls_v[k]) if k < len(traj.controls_v) else ""
            w.writerow([k, repr(float(times[k]))] + [repr(float(c)) for c in traj.states[k]] + [u, v])


# --------------------------------------------------------------------------- moment estimates


@dataclass(frozen=True)
class MomentRung:
    n_steps: int
    difference_ratio: float
    growth_ratio: float
    local_ratio: float


@dataclass(frozen=True)
class MomentReport:
    rungs: tuple
    bounded: bool
    growth_tolerance: float

    def to_dict(self):
        return {"bounded": self.bounded, "growth_tolerance": self.growth_tolerance,
                "rungs": [r.__dict__ for r in self.rungs]}


def _random_constant_policies(spec, n_paths, seed):
    rng = np.random.default_rng([seed, 7])
    cu = rng.integers(len(spec.u_set), size=n_paths)
    cv = rng.integers(len(spec.v_set), size=n_paths)
    return (Policy(lambda step, states: cu[: len(states)], name="random-constant-u"),
            Policy(lambda step, states: cv[: len(states)], name="random-constant-v"))


def moment_check(spec, x0, x0_prime, n_paths: int = 2000, *, base_steps: int = 8, rungs: int = 5,
                 seed: int = 0, window: float | None = None, growth_tolerance: float = 2.0) -> MomentReport:
    """Empirical moment ratios on a halving ladder of time steps.

    For each rung the same randomised constant policies and common noise
    drive both initial states.  Ratios reported:

    * ``E sup |X - X'|^2 / |x0 - x0'|^2`` (zero when the initial states agree),
    * ``E sup |X|^2 / (1 + |x0|^2)``,
    * ``E sup_{s <= window} |X - x0|^2 / (window (1 + |x0|^2))``.

    The ladder is flagged unbounded when any ratio exceeds ``growth_tolerance``
    times its value on the coarsest rung (plus a small absolute floor).
    """
    if n_paths < 1000:
        raise ConfigurationError("moment_check needs at least 1000 paths")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    x0p = np.asarray(x0_prime, dtype=float).reshape(-1)
    window = spec.horizon if window is None else window
    u_pol, v_pol = _random_constant_policies(spec, n_paths, seed)
    dx2 = float(np.sum((x0 - x0p) ** 2))
    out = []
    for r in range(rungs):
        n_steps = base_steps * 2 ** r
        grid = TimeGrid(0.0, spec.horizon, n_steps)
        bundles = sample_paths(spec.levy, grid, spec.brownian_dim, n_paths, seed)
        a = simulate_batch(spec, bundles, x0, u_pol, v_pol).states
        b = simulate_batch(spec, bundles, x0p, u_pol, v_pol).states
        diff = 0.0 if dx2 == 0 else float(np.mean(np.max(np.sum((a - b) ** 2, axis=2), axis=1)) / dx2)
        growth = float(np.mean(np.max(np.sum(a ** 2, axis=2), axis=1)) / (1 + x0 @ x0))
        upto = int(round(window / grid.delta)) + 1
        local = float(np.mean(np.max(np.sum((a[:, :upto] - x0) ** 2, axis=2), axis=1)) / (window * (1 + x0 @ x0)))
        out.append(MomentRung(n_steps, diff, growth, local))
    bounded = True
    for attr in ("difference_ratio", "growth_ratio", "local_ratio"):
        ref = getattr(out[0], attr)
        if any(getattr(r, attr) > growth_tolerance * ref + 1e-12 for r in out):
            bounded = False
    return MomentReport(tuple(out), bounded, growth_tolerance)
