"""One-step machinery shared by the simulator, the backward solvers and the oracle.

A single Euler step from state ``x`` with controls ``(u, v)`` is

    x' = x + b dt + sigma dB + sum_i N_i gamma_i - dt sum_i lambda_i gamma_i

with coefficients frozen at ``x``.  Conditional expectations over one step
tensor a Gauss-Hermite rule for ``dB`` with a truncated jump expansion: either
no jump (probability ``1 - Lambda dt``) or exactly one jump of atom ``i``
(probability ``lambda_i dt``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, NumericalError, StabilityError

MAX_JUMP_MASS = 0.2


@dataclass(frozen=True)
class Engine:
    """How conditional expectations are realised.

    ``mode="grid"`` interpolates the next-step field on a state grid;
    ``mode="tree"`` enumerates the outcome tree exactly from every node.
    """

    mode: str = "grid"
    gauss: int = 5
    tol: float = 1e-14
    max_iter: int = 50

    def __post_init__(self):
        if self.mode not in ("grid", "tree"):
            raise ConfigurationError(f"unknown engine mode {self.mode!r}")
        if self.gauss < 1:
            raise ConfigurationError("Gauss-Hermite order must be >= 1")
        if self.mode == "tree" and self.gauss > 3:
            raise ConfigurationError("tree mode supports at most 3 Gauss-Hermite nodes per dimension")


@lru_cache(maxsize=64)
def _gauss_hermite(m: int, d: int):
    x, w = np.polynomial.hermite_e.hermegauss(m)
    w = w / w.sum()
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite(m: int, d: int = 1):
    """Tensor Gauss-Hermite rule for a standard normal in ``d`` dimensions.

    Returns ``(nodes, weights)`` with nodes of shape ``(m**d, d)`` and
    positive weights summing to one.
    """
    return _gauss_hermite(int(m), int(d))


def check_step(spec, delta: float, *, operation="step") -> None:
    """Refuse time steps that break the jump truncation or the implicit solve."""
    mass = spec.levy.total_rate * delta
    if mass > MAX_JUMP_MASS + 1e-15:
        raise ConfigurationError(
            f"jump mass Lambda*delta = {mass:.4g} exceeds {MAX_JUMP_MASS}; use more time steps",
            module="kernel", operation=operation, witness={"jump_mass": mass})
    if delta * spec.lipschitz_C >= 1.0:
        raise StabilityError(
            f"delta*C = {delta * spec.lipschitz_C:.4g} >= 1; the implicit step is not a contraction",
            module="kernel", operation=operation, witness={"delta": delta, "C": spec.lipschitz_C})


@dataclass(frozen=True, eq=False)
class StepRule:
    """Outcomes of one step: Brownian increments times jump alternatives."""

    delta: float
    dB: np.ndarray          # (J, d) scaled increments
    gauss_weights: np.ndarray  # (J,)
    jump_probs: np.ndarray  # (A+1,), index 0 = no jump
    rates: np.ndarray       # (A,)

    @property
    def n_gauss(self) -> int:
        return len(self.gauss_weights)

    @property
    def n_alternatives(self) -> int:
        return len(self.jump_probs)

    @property
    def branching(self) -> int:
        return self.n_gauss * self.n_alternatives

    @property
    def weights(self) -> np.ndarray:
        """(J, A+1) joint outcome probabilities."""
        return self.gauss_weights[:, None] * self.jump_probs[None, :]

    @property
    def counts(self) -> np.ndarray:
        """(A+1, A) jump-count vectors of the alternatives."""
        A = len(self.rates)
        return np.vstack([np.zeros((1, A)), np.eye(A)])


def step_rule(spec, delta: float, m: int) -> StepRule:
    check_step(spec, delta)
    nodes, weights = gauss_hermite(m, spec.brownian_dim)
    rates = np.asarray(spec.levy.rates, dtype=float)
    probs = np.concatenate([[1.0 - rates.sum() * delta], rates * delta])
    return StepRule(delta, nodes * math.sqrt(delta), weights, probs, rates)


# --------------------------------------------------------------------------- Euler update


@dataclass(frozen=True, eq=False)
class FrozenCoefficients:
    """Coefficients evaluated at the left end of a step for a batch of states."""

    x: np.ndarray       # (N, n)
    b: np.ndarray       # (N, n)
    sigma: np.ndarray   # (N, n, d)
    gamma: np.ndarray   # (N, A, n)
    compensator: np.ndarray  # (N, n) sum_i lambda_i gamma_i


def freeze(spec, t: float, x: np.ndarray, u, v) -> FrozenCoefficients:
    b = np.array(spec.drift(t, x, u, v))
    sig = np.array(spec.diffusion(t, x, u, v))
    gam = spec.jumps(t, x, u, v)
    comp = np.zeros_like(x, dtype=float)
    for i, rate in enumerate(spec.levy.rates):
        comp = comp + rate * gam[:, i]
    return FrozenCoefficients(x, b, sig, gam, comp)


def euler_update(fc: FrozenCoefficients, delta: float, dB: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Apply one Euler step.

    ``dB`` has shape ``(N, d)`` or ``(N, K, d)`` and ``counts`` ``(N, A)`` or
    ``(N, K, A)``; with the extra axis the frozen coefficients are broadcast
    over ``K`` outcomes.  Sums run in a fixed order so that every caller gets
    bit-identical states.
    """
    extra = dB.ndim == 3
    x, b, sig, gam, comp = fc.x, fc.b, fc.sigma, fc.gamma, fc.compensator
    if extra:
        x, b, comp = x[:, None], b[:, None], comp[:, None]
        sig, gam = sig[:, None], gam[:, None]
    out = x + b * delta
    for j in range(dB.shape[-1]):
        out = out + sig[..., j] * dB[..., j:j + 1]
    for i in range(counts.shape[-1]):
        out = out + counts[..., i:i + 1] * gam[..., i, :]
    return out - delta * comp


def child_states(spec, rule: StepRule, t: float, x: np.ndarray, u, v) -> np.ndarray:
    """(N, J, A+1, n) states after one step for every quadrature/jump outcome."""
    fc = freeze(spec, t, x, u, v)
    N = len(x)
    J, K = rule.n_gauss, rule.n_alternatives
    dB = np.broadcast_to(np.repeat(rule.dB, K, axis=0)[None], (N, J * K, rule.dB.shape[1]))
    counts = np.broadcast_to(np.tile(rule.counts, (J, 1))[None], (N, J * K, K - 1))
    return euler_update(fc, rule.delta, dB, counts).reshape(N, J, K, spec.state_dim)


# --------------------------------------------------------------------------- backward step


def conditional_moments(rule: StepRule, y_next: np.ndarray):
    """Expectations of the next-step values over one step.

    ``y_next`` has shape ``(N, J, A+1)``.  Returns ``(ybar, z, K)`` with the
    mean, ``E[y' dB]/delta`` and the per-atom jump response
    ``E[y' | jump i] - E[y' | no jump]``.
    """
    w = rule.weights
    ybar = np.einsum("njk,jk->n", y_next, w)
    z = np.einsum("njk,jk,jd->nd", y_next, w, rule.dB) / rule.delta
    given = np.einsum("njk,j->nk", y_next, rule.gauss_weights)
    K = given[:, 1:] - given[:, :1]
    return ybar, z, K


def jump_integral(spec, x: np.ndarray, K: np.ndarray) -> np.ndarray:
    """``sum_i lambda_i K_i l(x, e_i)``, the scalar the driver consumes."""
    if spec.n_atoms == 0:
        return np.zeros(len(x))
    weights = spec.jump_weights(x)
    out = np.zeros(len(x))
    for i, rate in enumerate(spec.levy.rates):
        out = out + rate * K[:, i] * weights[:, i]
    return out


def implicit_solve(spec, t, x, ybar, z, kbar, u, v, delta, *, tol=1e-14, max_iter=50, driver=None):
    """Solve ``y = ybar + delta f(t, x, y, z, kbar, u, v)`` by fixed-point iteration."""
    f = driver or spec.driver
    y = ybar + delta * f(t, x, ybar, z, kbar, u, v)
    for it in range(max_iter):
        y_new = ybar + delta * f(t, x, y, z, kbar, u, v)
        err = np.max(np.abs(y_new - y), initial=0.0)
        y = y_new
        if not np.all(np.isfinite(y)):
            bad = int(np.argmax(~np.isfinite(y)))
            raise NumericalError("non-finite value in implicit step", module="kernel", operation="implicit_solve",
                                 witness={"t": t, "state": np.asarray(x[bad]).tolist()})
        if err <= tol * max(1.0, np.max(np.abs(y), initial=0.0)):
            return y
    raise NumericalError(f"fixed point did not converge in {max_iter} iterations (last change {err:.3g})",
                         module="kernel", operation="implicit_solve", witness={"t": t, "change": float(err)})


@dataclass(frozen=True, eq=False)
class StepResult:
    y: np.ndarray
    z: np.ndarray
    kbar: np.ndarray
    k: np.ndarray
    ybar: np.ndarray


def step_value(spec, rule: StepRule, t, x, u, v, y_next, *, tol=1e-14, max_iter=50, driver=None) -> StepResult:
    """Backward step from next-step values at the children of ``x``."""
    ybar, z, K = conditional_moments(rule, y_next)
    kbar = jump_integral(spec, x, K)
    y = implicit_solve(spec, t, x, ybar, z, kbar, u, v, rule.delta, tol=tol, max_iter=max_iter, driver=driver)
    return StepResult(y, z, kbar, K, ybar)
