"""Rectangular state grids and multilinear interpolation with linear extrapolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True, eq=False)
class StateGrid:
    """Tensor grid of state nodes.

    Values off the grid are obtained by multilinear interpolation and, up to
    ``margin`` outside the box, by linear extrapolation of the boundary cells.
    Queries further out raise :class:`DomainError`.
    """

    axes: tuple
    margin: float = 1.0

    def __post_init__(self):
        axes = []
        for a in self.axes:
            a = np.asarray(a, dtype=float)
            if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ConfigurationError("state grid axes need >= 2 strictly increasing nodes")
            a.setflags(write=False)
            axes.append(a)
        object.__setattr__(self, "axes", tuple(axes))
        if not self.margin >= 0:
            raise ConfigurationError("extrapolation margin must be >= 0")

    @classmethod
    def uniform(cls, lo, hi, n_nodes, dim: int = 1, margin: float | None = None) -> "StateGrid":
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
        n_nodes = np.broadcast_to(np.asarray(n_nodes), (dim,))
        axes = tuple(np.linspace(a, b, int(k)) for a, b, k in zip(lo, hi, n_nodes))
        if margin is None:
            margin = float(np.max(hi - lo))
        return cls(axes, margin)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    @property
    def spacing(self) -> np.ndarray:
        """Largest cell width per axis."""
        return np.array([np.max(np.diff(a)) for a in self.axes])

    @property
    def nodes(self) -> np.ndarray:
        """(size, dim) array of nodes in row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refine(self) -> "StateGrid":
        """Halve every cell."""
        axes = []
        for a in self.axes:
            mid = 0.5 * (a[:-1] + a[1:])
            axes.append(np.sort(np.concatenate([a, mid])))
        return StateGrid(tuple(axes), self.margin)

    def shifted(self, fraction: float = 0.5) -> "StateGrid":
        """Same box with interior nodes moved by ``fraction`` of a cell (end nodes kept)."""
        axes = []
        for a in self.axes:
            inner = a[:-1] + fraction * np.diff(a)
            axes.append(np.concatenate([[a[0]], inner, [a[-1]]]))
        return StateGrid(tuple(np.unique(x) for x in axes), self.margin)

    def interior_mask(self, width: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least ``width`` nodes away from every face."""
        masks = []
        for a in self.axes:
            m = np.zeros(len(a), dtype=bool)
            m[width:len(a) - width] = True
            masks.append(m)
        mesh = np.meshgrid(*masks, indexing="ij")
        return np.logical_and.reduce([m.ravel() for m in mesh])

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return np.all((x >= self.lower - margin) & (x <= self.upper + margin), axis=1)

    def check_reach(self, x, *, operation="interpolate", what="state"):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        ok = self.contains(x, self.margin)
        if not np.all(ok):
            bad = x[int(np.argmin(ok))]
            raise DomainError(f"{what} {bad.tolist()} lies beyond the extrapolation margin of the state grid",
                              module="grids", operation=operation, witness={"state": bad.tolist()})

    def interpolant(self, values) -> "Interpolant":
        return Interpolant(self, np.asarray(values, dtype=float).reshape(self.shape))

    def to_dict(self):
        return {"axes": [[float(c) for c in a] for a in self.axes], "margin": self.margin}


class Interpolant:
    """Callable multilinear interpolant of nodal values."""

    def __init__(self, grid: StateGrid, values: np.ndarray):
        self.grid = grid
        self.values = values
        self._rgi = RegularGridInterpolator(grid.axes, values, method="linear", bounds_error=False, fill_value=None)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.grid.dim)
        self.grid.check_reach(flat)
        return self._rgi(flat).reshape(lead)
