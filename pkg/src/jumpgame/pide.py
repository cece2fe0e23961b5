"""Hamiltonians and an explicit monotone finite-difference scheme for the Isaacs integro-PDE.

For a control pair ``(u, v)`` and a smooth field ``psi`` the Hamiltonian is

    H = 1/2 tr(sigma sigma^T D^2 psi) + D psi . b
        + sum_i lambda_i [psi(x + gamma_i) - psi(x) - D psi . gamma_i]
        + f(t, x, psi, D psi sigma, sum_i lambda_i [psi(x + gamma_i) - psi(x)] l(x, e_i))

and the lower (upper) Hamiltonian is its max-min (min-max) over the control
grids.  The scheme steps backward with ``psi_k = psi_{k+1} + dt H(psi_{k+1})``.
It folds the compensator into an effective drift ``b - sum_i lambda_i gamma_i``
that is upwinded, so all off-diagonal weights are nonnegative once the CFL
condition holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CFLError, ConfigurationError, DomainError, NumericalError
from .grids import StateGrid
from .levy_paths import TimeGrid
from .oracle import minimax


@dataclass(frozen=True)
class HamiltonianEval:
    """Parts of the Hamiltonian at a batch of states; ``f_term`` already contains ``c_nonlocal``."""

    a_term: np.ndarray
    b_nonlocal: np.ndarray
    c_nonlocal: np.ndarray
    f_term: np.ndarray
    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.a_term + self.b_nonlocal + self.f_term


def _derivatives(psi, x, h):
    """Central first and second differences of ``psi`` at ``x`` (N, n)."""
    N, n = x.shape
    p0 = np.asarray(psi(x), dtype=float)
    grad = np.empty((N, n))
    hess = np.empty((N, n, n))
    eye = np.eye(n) * h
    plus = [np.asarray(psi(x + eye[i]), dtype=float) for i in range(n)]
    minus = [np.asarray(psi(x - eye[i]), dtype=float) for i in range(n)]
    for i in range(n):
        grad[:, i] = (plus[i] - minus[i]) / (2 * h)
        hess[:, i, i] = (plus[i] - 2 * p0 + minus[i]) / h ** 2
        for j in range(i + 1, n):
            pp = psi(x + eye[i] + eye[j])
            pm = psi(x + eye[i] - eye[j])
            mp = psi(x - eye[i] + eye[j])
            mm = psi(x - eye[i] - eye[j])
            hess[:, i, j] = hess[:, j, i] = (pp - pm - mp + mm) / (4 * h * h)
    return p0, grad, hess


def hamiltonian(spec, psi, t: float, x, u, v, *, h: float = 1e-3, small_jump: float = 0.0) -> HamiltonianEval:
    """Evaluate the Hamiltonian of ``psi`` at states ``x`` for one control pair.

    Derivatives are central differences with step ``h``.  Atoms with
    ``|e| < small_jump`` enter the compensated jump term through the
    second-order Taylor expansion ``1/2 gamma^T D^2 psi gamma``; larger atoms
    are evaluated directly.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    p0, grad, hess = _derivatives(psi, x, h)
    b = spec.drift(t, x, u, v)
    sig = spec.diffusion(t, x, u, v)
    a = np.einsum("nid,njd->nij", sig, sig)
    a_term = 0.5 * np.einsum("nij,nij->n", a, hess) + np.einsum("ni,ni->n", grad, b)
    b_nl = np.zeros(len(x))
    c_nl = np.zeros(len(x))
    weights = spec.jump_weights(x) if spec.n_atoms else None
    for i, (e, rate) in enumerate(spec.levy.atoms):
        g = spec.jump(t, x, u, v, e)
        try:
            shifted = np.asarray(psi(x + g), dtype=float)
        except DomainError as exc:
            raise DomainError(f"jump of atom {i} (mark {e.tolist()}) leaves the extrapolation margin",
                              module="pide", operation="hamiltonian", witness={"atom": i}) from exc
        if np.linalg.norm(e) < small_jump:
            b_nl += rate * 0.5 * np.einsum("ni,nij,nj->n", g, hess, g)
        else:
            b_nl += rate * (shifted - p0 - np.einsum("ni,ni->n", grad, g))
        c_nl += rate * (shifted - p0) * weights[:, i]
    z = np.einsum("ni,nid->nd", grad, sig)
    f_term = spec.driver(t, x, p0, z, c_nl, u, v)
    return HamiltonianEval(a_term, b_nl, c_nl, np.asarray(f_term, dtype=float), t, x, u, v)


# --------------------------------------------------------------------------- grid operator


def _padded(values: np.ndarray, shape: tuple) -> np.ndarray:
    """Add one ghost layer per face by linear extrapolation."""
    out = values.reshape(shape)
    for axis in range(len(shape)):
        first = np.take(out, [0], axis=axis)
        second = np.take(out, [1], axis=axis)
        last = np.take(out, [-1], axis=axis)
        before = np.take(out, [-2], axis=axis)
        out = np.concatenate([2 * first - second, out, 2 * last - before], axis=axis)
    return out


@dataclass(frozen=True, eq=False)
class GridDerivatives:
    value: np.ndarray    # (N,)
    forward: np.ndarray  # (N, n)
    backward: np.ndarray
    central: np.ndarray
    second: np.ndarray   # (N, n, n)


def grid_derivatives(sgrid: StateGrid, values: np.ndarray) -> GridDerivatives:
    shape = sgrid.shape
    n = sgrid.dim
    P = _padded(np.asarray(values, dtype=float), shape)
    core = tuple(slice(1, -1) for _ in range(n))
    N = sgrid.size
    fwd = np.empty((N, n))
    bwd = np.empty((N, n))
    sec = np.zeros((N, n, n))
    # Ghost cells copy the spacing of the boundary cell.
    for i, a in enumerate(sgrid.axes):
        da = np.diff(a)
        hp = np.concatenate([da, da[-1:]])  # spacing to the right neighbour
        hm = np.concatenate([da[:1], da])   # spacing to the left neighbour
        bshape = [1] * n
        bshape[i] = len(a)
        hp, hm = hp.reshape(bshape), hm.reshape(bshape)
        sl_p = list(core)
        sl_m = list(core)
        sl_p[i] = slice(2, None)
        sl_m[i] = slice(0, -2)
        c = P[core]
        r = P[tuple(sl_p)]
        l_ = P[tuple(sl_m)]
        fwd[:, i] = ((r - c) / hp).ravel()
        bwd[:, i] = ((c - l_) / hm).ravel()
        sec[:, i, i] = (2 * ((r - c) / hp - (c - l_) / hm) / (hp + hm)).ravel()
    for i in range(n):
        for j in range(i + 1, n):
            hi = sgrid.axes[i][1] - sgrid.axes[i][0]
            hj = sgrid.axes[j][1] - sgrid.axes[j][0]

            def sl(di, dj):
                s = [slice(1, -1)] * n
                s[i] = slice(1 + di, P.shape[i] - 1 + di)
                s[j] = slice(1 + dj, P.shape[j] - 1 + dj)
                return tuple(s)

            cross = (P[sl(1, 1)] - P[sl(1, -1)] - P[sl(-1, 1)] + P[sl(-1, -1)]) / (4 * hi * hj)
            sec[:, i, j] = sec[:, j, i] = cross.ravel()
    return GridDerivatives(np.asarray(values, dtype=float).ravel(), fwd, bwd, 0.5 * (fwd + bwd), sec)


def pair_hamiltonian_grid(spec, sgrid: StateGrid, values, t: float, u, v, *, small_jump: float = 0.0,
                          interp=None, der: GridDerivatives | None = None) -> np.ndarray:
    """Scheme Hamiltonian at every node for one control pair (upwinded effective drift)."""
    x = sgrid.nodes
    der = der or grid_derivatives(sgrid, values)
    interp = interp or sgrid.interpolant(values)
    b = spec.drift(t, x, u, v)
    sig = spec.diffusion(t, x, u, v)
    a = np.einsum("nid,njd->nij", sig, sig)
    beff = np.array(b, dtype=float)
    b_nl = np.zeros(len(x))
    c_nl = np.zeros(len(x))
    weights = spec.jump_weights(x) if spec.n_atoms else None
    p0 = der.value
    for i, (e, rate) in enumerate(spec.levy.atoms):
        g = spec.jump(t, x, u, v, e)
        try:
            shifted = interp(x + g)
        except DomainError as exc:
            raise DomainError(f"jump of atom {i} (mark {e.tolist()}) leaves the extrapolation margin",
                              module="pide", operation="solve_pide", witness={"atom": i}) from exc
        if np.linalg.norm(e) < small_jump:
            b_nl += rate * 0.5 * np.einsum("ni,nij,nj->n", g, der.second, g)
        else:
            beff -= rate * g
            b_nl += rate * (shifted - p0)
        c_nl += rate * (shifted - p0) * weights[:, i]
    drift = np.sum(np.maximum(beff, 0) * der.forward + np.minimum(beff, 0) * der.backward, axis=1)
    diff = 0.5 * np.einsum("nij,nij->n", a, der.second)
    z = np.einsum("ni,nid->nd", der.central, sig)
    f = spec.driver(t, x, p0, z, c_nl, u, v)
    return diff + drift + b_nl + np.asarray(f, dtype=float)


def pair_hamiltonians(spec, sgrid, values, t, *, small_jump=0.0) -> np.ndarray:
    """(N, p, q) scheme Hamiltonians over all control pairs."""
    der = grid_derivatives(sgrid, values)
    interp = sgrid.interpolant(values)
    p, q = len(spec.u_set), len(spec.v_set)
    H = np.empty((sgrid.size, p, q))
    for a in range(p):
        for b in range(q):
            H[:, a, b] = pair_hamiltonian_grid(spec, sgrid, values, t, spec.u_set[a], spec.v_set[b],
                                               small_jump=small_jump, interp=interp, der=der)
    return H


def cfl_number(spec, sgrid: StateGrid, tgrid: TimeGrid) -> float:
    """``dt * max (sum a_ii/dx_i^2 + sum |b_eff,i|/dx_i + Lambda (1 + C max l) + C)`` over nodes, controls and times."""
    x = sgrid.nodes
    hmin = np.array([np.min(np.diff(a)) for a in sgrid.axes])
    C = spec.lipschitz_C
    lmax = 0.0
    if spec.n_atoms:
        lmax = float(np.max(spec.jump_weights(x)))
    worst = 0.0
    for t in (tgrid.nodes[0], tgrid.nodes[-1]):
        for u in spec.u_set.points:
            for v in spec.v_set.points:
                b = np.array(spec.drift(t, x, u, v), dtype=float)
                sig = spec.diffusion(t, x, u, v)
                for e, rate in spec.levy.atoms:
                    b = b - rate * spec.jump(t, x, u, v, e)
                aii = np.einsum("nid,nid->ni", sig, sig)
                coef = np.sum(aii / hmin ** 2 + np.abs(b) / hmin, axis=1)
                worst = max(worst, float(np.max(coef)))
    return tgrid.delta * (worst + spec.levy.total_rate * (1 + C * lmax) + C)


def required_steps(spec, sgrid: StateGrid, horizon: float, t0: float = 0.0, target: float = 0.9) -> int:
    probe = TimeGrid(t0, horizon, 1)
    rate = cfl_number(spec, sgrid, probe) / probe.delta
    return max(1, int(math.ceil(rate * (horizon - t0) / target)))


@dataclass(frozen=True, eq=False)
class PideSolution:
    which: str
    tgrid: TimeGrid
    sgrid: StateGrid
    values: np.ndarray   # (n_steps+1, N)
    cfl: float
    max_increment: float
    u_index: np.ndarray
    v_index: np.ndarray

    def at(self, step: int):
        return self.sgrid.interpolant(self.values[step])


def pide_step(spec, sgrid, values, t, delta, which, small_jump=0.0):
    """One explicit backward step; returns ``(new_values, u_idx, v_idx)``."""
    H = pair_hamiltonians(spec, sgrid, values, t, small_jump=small_jump)
    Hs, iu, iv, _ = minimax(H, which)
    return values + delta * Hs, iu, iv


def solve_pide(spec, which: str, tgrid: TimeGrid, sgrid: StateGrid, small_jump: float = 0.0, *,
               cfl_target: float = 0.9, terminal=None) -> PideSolution:
    """Backward explicit scheme for the lower (max-min) or upper (min-max) Isaacs equation."""
    if which not in ("lower", "upper"):
        raise ConfigurationError(f"which must be 'lower' or 'upper', got {which!r}")
    if not 0 < cfl_target <= 1:
        raise ConfigurationError("CFL target must lie in (0, 1]")
    cfl = cfl_number(spec, sgrid, tgrid)
    if cfl > cfl_target:
        need = required_steps(spec, sgrid, tgrid.T, tgrid.t0, cfl_target)
        raise CFLError(f"CFL number {cfl:.4g} exceeds {cfl_target}; use at least {need} time steps", need,
                       module="pide", operation="solve_pide")
    x = sgrid.nodes
    n, N = tgrid.n_steps, len(x)
    term = terminal if terminal is not None else spec.terminal
    vals = np.empty((n + 1, N))
    vals[n] = np.broadcast_to(np.asarray(term(x), dtype=float), (N,))
    ui = np.empty((n, N), dtype=np.int64)
    vi = np.empty((n, N), dtype=np.int64)
    times = tgrid.nodes
    inc = 0.0
    for k in range(n - 1, -1, -1):
        vals[k], ui[k], vi[k] = pide_step(spec, sgrid, vals[k + 1], float(times[k]), tgrid.delta, which, small_jump)
        if not np.all(np.isfinite(vals[k])):
            bad = int(np.argmax(~np.isfinite(vals[k])))
            raise NumericalError("non-finite Hamiltonian", module="pide", operation="solve_pide",
                                 witness={"step": k, "state": x[bad].tolist()})
        inc = max(inc, float(np.max(np.abs(vals[k] - vals[k + 1]))))
    return PideSolution(which, tgrid, sgrid, vals, cfl, inc, ui, vi)


# --------------------------------------------------------------------------- Isaacs gap


@dataclass(frozen=True)
class GapReport:
    max_gap: float
    mean_gap: float
    argmax: dict

    def to_dict(self):
        return {"max_gap": self.max_gap, "mean_gap": self.mean_gap, "argmax": self.argmax}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def isaacs_gap(spec, tgrid: TimeGrid, sgrid: StateGrid, probe, *, steps=None, h: float | None = None,
               small_jump: float = 0.0) -> GapReport:
    """``|max_u min_v H - min_v max_u H|`` at sampled steps and all nodes.

    ``probe`` is a callable ``x -> values``, a field object with per-step
    values (``.values``), or a nodal array used at every step.  Derivatives
    are central differences with step ``h`` (default: the smallest cell).
    """
    x = sgrid.nodes
    h = float(np.min(sgrid.spacing)) if h is None else h
    steps = range(tgrid.n_steps) if steps is None else steps
    p, q = len(spec.u_set), len(spec.v_set)
    worst, total, count, arg = 0.0, 0.0, 0, {"step": 0, "node": 0, "x": x[0].tolist()}
    for k in steps:
        if hasattr(probe, "values"):
            psi = sgrid.interpolant(probe.values[k])
        elif callable(probe):
            psi = probe
        else:
            psi = sgrid.interpolant(np.asarray(probe, dtype=float))
        t = float(tgrid.nodes[k])
        H = np.empty((len(x), p, q))
        for a in range(p):
            for b in range(q):
                H[:, a, b] = hamiltonian(spec, psi, t, x, spec.u_set[a], spec.v_set[b], h=h,
                                         small_jump=small_jump).total
        lo = minimax(H, "lower")[0]
        up = minimax(H, "upper")[0]
        gap = np.abs(up - lo)
        j = int(np.argmax(gap))
        if gap[j] > worst or count == 0:
            if gap[j] >= worst:
                worst = float(gap[j])
                arg = {"step": int(k), "node": j, "x": x[j].tolist()}
        total += float(gap.sum())
        count += len(gap)
    return GapReport(worst, total / max(count, 1), arg)
