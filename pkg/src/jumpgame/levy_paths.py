"""Time grids, finite-activity Levy measures and Wiener-Poisson path sampling.

The driving noise of a game is a d-dimensional Brownian motion together with
a Poisson random measure whose Levy measure has finitely many atoms.  A
:class:`PathBundle` stores one sampled realisation of both on a uniform time
grid.  Jumps are stored as ``(step, offset, atom)`` triples, where ``offset``
is the position of the jump inside its step as a fraction of the step length.
Keeping the step index separate from the offset makes the segment swap an
exact involution in floating point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AlignmentError, ConfigurationError, DomainError

# Philox counter word used to separate the two random channels of a path.
_BROWNIAN_CHANNEL = 0
_JUMP_CHANNEL = 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 = s_0 < s_1 < ... < s_n = T``."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.n_steps >= 1 and int(self.n_steps) == self.n_steps):
            raise ConfigurationError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (0.0 <= self.t0 < self.T):
            raise ConfigurationError(f"need 0 <= t0 < T, got t0={self.t0}, T={self.T}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def delta(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        nodes = self.t0 + self.delta * np.arange(self.n_steps + 1)
        nodes[-1] = self.T
        return nodes

    def time(self, k: int) -> float:
        return float(self.nodes[k])

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises AlignmentError if ``t`` is not a node."""
        k = round((t - self.t0) / self.delta)
        if abs(self.t0 + k * self.delta - t) > tol * max(1.0, abs(t)):
            raise AlignmentError(f"time {t} is not a node of {self}")
        if not 0 <= k <= self.n_steps:
            raise DomainError(f"time {t} outside [{self.t0}, {self.T}]")
        return int(k)

    def restrict(self, k0: int, k1: int | None = None) -> "TimeGrid":
        """Sub-grid between nodes ``k0`` and ``k1`` (inclusive)."""
        k1 = self.n_steps if k1 is None else k1
        nodes = self.nodes
        return TimeGrid(float(nodes[k0]), float(nodes[k1]), k1 - k0)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n_steps * factor)

    def to_dict(self):
        return {"t0": self.t0, "T": self.T, "n_steps": self.n_steps}


@dataclass(frozen=True, eq=False)
class LevyMeasure:
    """Finite sum of weighted Dirac masses ``sum_i rate_i * delta_{mark_i}``."""

    marks: np.ndarray  # (n_atoms, mark_dim)
    rates: np.ndarray  # (n_atoms,)

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=float)
        rates = np.asarray(self.rates, dtype=float).reshape(-1)
        if marks.ndim == 1:
            marks = marks.reshape(len(rates), -1) if len(rates) else marks.reshape(0, max(1, marks.size))
        if marks.shape[0] != rates.shape[0]:
            raise ConfigurationError("marks and rates must have the same number of atoms")
        if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            raise ConfigurationError(f"atom rates must be positive and finite, got {rates}")
        if len(rates) and np.any(np.linalg.norm(marks, axis=1) == 0):
            raise ConfigurationError("atom marks must be nonzero (E excludes the origin)")
        marks.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[Sequence[float] | float, float]], mark_dim: int = 1):
        atoms = list(atoms)
        if not atoms:
            return cls(np.zeros((0, mark_dim)), np.zeros(0))
        marks = np.array([np.atleast_1d(np.asarray(m, dtype=float)) for m, _ in atoms])
        return cls(marks, np.array([r for _, r in atoms], dtype=float))

    @classmethod
    def empty(cls, mark_dim: int = 1):
        return cls(np.zeros((0, mark_dim)), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return len(self.rates)

    @property
    def mark_dim(self) -> int:
        return self.marks.shape[1]

    @property
    def total_rate(self) -> float:
        return float(np.sum(self.rates))

    @property
    def atoms(self):
        return [(self.marks[i], float(self.rates[i])) for i in range(self.n_atoms)]

    def to_json(self):
        return {"atoms": [{"mark": [float(c) for c in m], "rate": float(r)} for m, r in self.atoms]}

    @classmethod
    def from_json(cls, doc, mark_dim: int = 1):
        return cls.from_atoms([(a["mark"], a["rate"]) for a in doc["atoms"]], mark_dim=mark_dim)

    def __eq__(self, other):
        if not isinstance(other, LevyMeasure):
            return NotImplemented
        return np.array_equal(self.marks, other.marks) and np.array_equal(self.rates, other.rates)

    def __repr__(self):
        return f"LevyMeasure(atoms={[(m.tolist(), r) for m, r in self.atoms]})"


def compensator_integral(measure: LevyMeasure, h: Callable[[np.ndarray], float]) -> float:
    """Integral of a mark function against the Levy measure, ``sum_i rate_i h(mark_i)``."""
    return float(sum(rate * h(mark) for mark, rate in measure.atoms))


@dataclass(frozen=True, eq=False)
class PathBundle:
    """One sampled path of the driving noise on ``grid``.

    Attributes
    ----------
    brownian_increments : (n_steps, d) array
        Increments of B over each step, variance ``delta`` per coordinate.
    jump_steps, jump_offsets, jump_atoms : arrays of equal length
        Step index, relative position in ``[0, 1)`` within the step and atom
        index of each jump, sorted by (step, offset, atom).
    """

    grid: TimeGrid
    brownian_increments: np.ndarray
    jump_steps: np.ndarray
    jump_offsets: np.ndarray
    jump_atoms: np.ndarray
    n_atoms: int
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        for name in ("brownian_increments", "jump_steps", "jump_offsets", "jump_atoms"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.brownian_increments.shape[1]

    @property
    def jump_times(self) -> np.ndarray:
        nodes = self.grid.nodes
        return nodes[self.jump_steps] + self.jump_offsets * self.grid.delta

    def jump_counts(self) -> np.ndarray:
        """(n_steps, n_atoms) array of jump counts per step and atom."""
        counts = np.zeros((self.grid.n_steps, self.n_atoms), dtype=np.int64)
        np.add.at(counts, (self.jump_steps, self.jump_atoms), 1)
        return counts

    def jump_events(self, k: int) -> np.ndarray:
        """Atom indices of the jumps falling in step ``k``."""
        return self.jump_atoms[self.jump_steps == k]

    def __eq__(self, other):
        if not isinstance(other, PathBundle):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.n_atoms == other.n_atoms
            and np.array_equal(self.brownian_increments, other.brownian_increments)
            and np.array_equal(self.jump_steps, other.jump_steps)
            and np.array_equal(self.jump_offsets, other.jump_offsets)
            and np.array_equal(self.jump_atoms, other.jump_atoms)
        )

    __hash__ = None


def _generator(seed: int, path: int, channel: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(path) & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, channel]))


def _sorted_events(steps, offsets, atoms):
    order = np.lexsort((atoms, offsets, steps))
    return steps[order], offsets[order], atoms[order]


def sample_path(measure: LevyMeasure, grid: TimeGrid, d: int, seed: int, path_index: int) -> PathBundle:
    """Sample the path with index ``path_index``; depends only on (seed, index)."""
    delta = grid.delta
    gb = _generator(seed, path_index, _BROWNIAN_CHANNEL)
    dB = gb.standard_normal((grid.n_steps, d)) * math.sqrt(delta)
    lam = measure.total_rate
    if lam > 0:
        gj = _generator(seed, path_index, _JUMP_CHANNEL)
        counts = gj.poisson(lam * delta, size=grid.n_steps)
        total = int(counts.sum())
        offsets = gj.random(total)
        atoms = gj.choice(measure.n_atoms, size=total, p=measure.rates / lam)
        steps = np.repeat(np.arange(grid.n_steps), counts)
        steps, offsets, atoms = _sorted_events(steps, offsets, atoms)
    else:
        steps = np.zeros(0, dtype=np.int64)
        offsets = np.zeros(0)
        atoms = np.zeros(0, dtype=np.int64)
    return PathBundle(grid, dB, steps.astype(np.int64), offsets, atoms.astype(np.int64),
                      measure.n_atoms, seed, path_index)


def sample_paths(measure: LevyMeasure, grid: TimeGrid, d: int, n_paths: int, seed: int,
                 first_index: int = 0) -> list[PathBundle]:
    """Sample ``n_paths`` independent bundles.

    Path ``i`` is generated from its own counter-based stream keyed by
    ``(seed, first_index + i)``, so any subset can be regenerated or sampled in
    parallel without changing the result.
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    if d < 1:
        raise ConfigurationError("Brownian dimension must be >= 1")
    return [sample_path(measure, grid, d, seed, first_index + i) for i in range(n_paths)]


def segment_swap(bundle: PathBundle, t: float, ell: float) -> PathBundle:
    """Exchange the noise on ``(t-2l, t-l]`` and ``(t-l, t]``.

    Brownian increments and jumps of the two segments trade places, shifted
    by ``+l`` and ``-l`` respectively; everything outside ``(t-2l, t]`` is
    untouched.  The map is its own inverse.
    """
    grid = bundle.grid
    m = round(ell / grid.delta)
    if m < 1 or abs(m * grid.delta - ell) > 1e-9 * max(1.0, ell):
        raise AlignmentError(f"ell={ell} is not a positive multiple of the step {grid.delta}")
    kt = round((t - grid.t0) / grid.delta)
    if abs(grid.t0 + kt * grid.delta - t) > 1e-9 * max(1.0, abs(t)):
        raise AlignmentError(f"t={t} is not a grid node")
    if kt - 2 * m < 0 or kt > grid.n_steps:
        raise DomainError(f"grid [{grid.t0}, {grid.T}] does not cover [t-2l, t] = [{t - 2 * ell}, {t}]")
    a, b, c = kt - 2 * m, kt - m, kt
    dB = np.array(bundle.brownian_increments)
    dB[a:b], dB[b:c] = bundle.brownian_increments[b:c], bundle.brownian_increments[a:b]
    steps = np.array(bundle.jump_steps)
    first = (steps >= a) & (steps < b)
    second = (steps >= b) & (steps < c)
    steps[first] += m
    steps[second] -= m
    steps, offsets, atoms = _sorted_events(steps, np.array(bundle.jump_offsets), np.array(bundle.jump_atoms))
    return PathBundle(grid, dB, steps, offsets, atoms, bundle.n_atoms, bundle.seed, bundle.path_index)


def write_bundles_csv(bundles: Sequence[PathBundle], measure: LevyMeasure, path) -> None:
    """Debug export: one row per (step, path) with increments and jump marks."""
    d = bundles[0].d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "path"] + [f"dB_{j + 1}" for j in range(d)] + ["n_jumps", "marks"])
        for b in bundles:
            for k in range(b.grid.n_steps):
                atoms = b.jump_events(k)
                marks = " ".join(";".join(repr(float(c)) for c in measure.marks[a]) for a in atoms)
                w.writerow([k, b.path_index] + [repr(float(x)) for x in b.brownian_increments[k]]
                           + [len(atoms), marks])


def stack_increments(bundles: Sequence[PathBundle]) -> np.ndarray:
    """(n_paths, n_steps, d) array of Brownian increments."""
    return np.stack([b.brownian_increments for b in bundles])


def stack_counts(bundles: Sequence[PathBundle]) -> np.ndarray:
    """(n_paths, n_steps, n_atoms) array of jump counts."""
    return np.stack([b.jump_counts() for b in bundles])
