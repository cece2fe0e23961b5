"""Property checks tying the solvers together, and the machine-readable manifest.

Each check returns a :class:`CheckResult` with a measured statistic, the
threshold it is held to and a pass flag (``None`` when its preconditions do
not hold and no claim is made).  :func:`run_verify` runs every check once for
a problem and assembles a manifest whose ``payload`` is a deterministic
function of (problem, scheme, seed).
"""

from __future__ import annotations

import datetime
import json
import math
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bsde, game, oracle, pide
from .errors import ParseError
from .grids import StateGrid
from .kernel import MAX_JUMP_MASS, Engine
from .levy_paths import TimeGrid
from .policies import threshold_policy
from .problem import ControlSet, ProbeConfig, make_spec, validate_hypotheses

MANIFEST_VERSION = 1
ROUNDOFF = 1e-10        # errors below this count as exact
CONSISTENCY_ORDER = 1.8  # accepted fitted slope for a second-order claim


@dataclass(frozen=True)
class SchemeParams:
    n_steps: int | None = None     # game/BSDE steps; None picks the coarsest admissible
    xbox: float = 2.0
    xnodes: int = 81
    gauss: int = 5
    tree_gauss: int = 3
    cfl: float = 0.9
    tol: float = 1e-14
    small_jump: float = 0.0
    mc_paths: int = 10_000

    @property
    def dx(self) -> float:
        return 2 * self.xbox / (self.xnodes - 1)

    def sgrid(self, dim: int = 1, nodes: int | None = None) -> StateGrid:
        return StateGrid.uniform(-self.xbox, self.xbox, nodes or self.xnodes, dim)


@dataclass(frozen=True)
class CheckResult:
    name: str
    reference: str
    statistic: float | None
    threshold: float | None
    passed: bool | None
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return _clean(asdict(self))


def _clean(obj):
    """Make a structure JSON-safe with plain Python floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def min_steps(spec, horizon: float | None = None, *, at_least: int = 1) -> int:
    """Fewest uniform steps keeping the jump mass and the implicit step admissible."""
    T = spec.horizon if horizon is None else horizon
    n = max(at_least, int(math.ceil(spec.levy.total_rate * T / MAX_JUMP_MASS - 1e-9)))
    while T / n * spec.lipschitz_C >= 1:
        n += 1
    return n


def tree_grid(spec, depth: int) -> TimeGrid:
    """Short horizon whose steps respect the jump truncation, for exact tree checks."""
    delta = min(0.1, MAX_JUMP_MASS / max(spec.levy.total_rate, 1e-12), 0.5 / spec.lipschitz_C)
    return TimeGrid(0.0, delta * depth, depth)


# --------------------------------------------------------------------------- random instances


def random_affine_spec(rng, *, n_atoms=None, C=2.0, horizon=1.0, controls=1):
    """A small random one-dimensional instance satisfying the standing hypotheses with constant ``C``."""
    n_atoms = int(rng.integers(1, 3)) if n_atoms is None else n_atoms
    marks = rng.choice([-1.0, -0.5, 0.5, 1.0], size=n_atoms, replace=False)
    atoms = [(float(m), float(rng.uniform(0.2, 1.0))) for m in marks]
    b0, b1 = rng.uniform(-0.5, 0.5, 2)
    s0, s1 = rng.uniform(0.1, 0.4), rng.uniform(-0.2, 0.2)
    g0, g1 = rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)
    fy, fz, fx, f0 = rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.5, 0.5), rng.uniform(-1, 1)
    fk = rng.uniform(0.0, 0.8)
    # keeps fk * sqrt(sum rate * l^2) below C, the Lipschitz constant of the composed driver in K
    lsc = rng.uniform(0.0, min(1.0, C))
    a, c, p0 = rng.uniform(-0.8, 0.8), rng.uniform(0, 0.6), rng.uniform(-1, 1)
    w = rng.uniform(0.5, 2.0)
    U = np.linspace(-1, 1, controls)

    def b(t, x, u, v):
        return b0 + b1 * x + 0.2 * u - 0.2 * v

    def sigma(t, x, u, v):
        return (s0 + s1 * np.tanh(x))[:, :, None]

    def gamma(t, x, u, v, e):
        me = min(1.0, float(np.linalg.norm(e)))
        return (g0 * e[0] + g1 * np.sin(x)) * me

    def f(t, x, y, z, k, u, v):
        return f0 + fx * np.sin(w * x[:, 0]) + fy * y + fz * z[:, 0] + fk * k

    def phi(x):
        return p0 + a * x[:, 0] + c * np.sqrt(1 + x[:, 0] ** 2)

    def l(x, e):
        return lsc * min(1.0, float(np.linalg.norm(e))) * (0.5 + 0.5 * np.cos(x[:, 0])) / 1.0

    spec = make_spec(b, sigma, gamma, f, phi, l, U=U, V=U, atoms=atoms, horizon=horizon, C=C)
    return spec, {"fy": fy, "fz": fz, "fk": fk, "l_scale": lsc}


def random_comparison_pair(rng, *, C=2.0):
    """(spec, spec') with ordered terminal values and drivers sharing the jump weight."""
    spec, _ = random_affine_spec(rng, C=C)
    shift = rng.uniform(0, 0.5)
    amp = rng.uniform(0, 0.3)
    dshift = rng.uniform(0, 0.5)
    damp = rng.uniform(0, 0.3)
    if rng.random() < 0.2:
        shift = amp = dshift = damp = 0.0
    phi, f = spec.coefficients.phi, spec.coefficients.f
    prime = spec.with_coefficients(
        phi=lambda x: phi(x) - shift - amp * (1 + np.sin(x[:, 0])),
        f=lambda t, x, y, z, k, u, v: f(t, x, y, z, k, u, v) - dshift - damp * (1 + np.cos(2 * x[:, 0] + t)),
    )
    return spec, prime


def random_stability_instance(rng, *, C=2.0):
    spec, _ = random_affine_spec(rng, C=C)
    a1, a2 = rng.uniform(-1, 1, 2)
    w1, w2 = rng.uniform(0.5, 3, 2)
    c1, c2 = rng.uniform(-0.5, 0.5, 2)
    xi1 = lambda x: spec.terminal(x) + a1 * np.sin(w1 * x[:, 0])  # noqa: E731
    xi2 = lambda x: spec.terminal(x) + a2 * np.cos(w2 * x[:, 0])  # noqa: E731
    phi1 = lambda t, x: c1 * np.cos(x[:, 0]) + 0.1 * t  # noqa: E731
    phi2 = lambda t, x: c2 * np.sin(x[:, 0])  # noqa: E731
    if rng.random() < 0.1:
        xi2, phi2 = xi1, phi1
    return spec, xi1, xi2, phi1, phi2


# --------------------------------------------------------------------------- individual checks


def check_hypotheses(spec, seed=0) -> CheckResult:
    rep = validate_hypotheses(spec, ProbeConfig(seed=seed))
    fails = rep.failures
    return CheckResult("hypotheses", "standing Lipschitz, growth and monotonicity hypotheses", float(len(fails)), 0.0,
                       rep.passed, {"failed": [c.clause for c in fails]} if fails else None,
                       {"clauses": [c.to_dict() for c in rep.clauses]})


def check_comparison(spec, params: SchemeParams, seed=0) -> CheckResult:
    grid = tree_grid(spec, 2)
    phi, f = spec.coefficients.phi, spec.coefficients.f
    prime = spec.with_coefficients(phi=lambda x: phi(x) - 1.0 - 0.1 * np.sin(x[:, 0]),
                                   f=lambda t, x, y, z, k, u, v: f(t, x, y, z, k, u, v) - 0.1)
    roots = np.linspace(-1, 1, 3)[:, None] * np.ones((1, spec.state_dim))
    rep = bsde.comparison_check(spec, prime, grid, roots, engine=Engine("tree", params.tree_gauss), seed=seed)
    passed = None if rep.status == "hypotheses not met" else rep.passed
    return CheckResult("comparison", "comparison principle for BSDEs with jumps", rep.min_difference, -rep.tolerance,
                       passed, rep.witness, rep.to_dict())


def check_stability(spec, params: SchemeParams, seed=0) -> CheckResult:
    grid = tree_grid(spec, 3)
    xi1 = spec.terminal
    xi2 = lambda x: spec.terminal(x) + 0.1 * np.sin(np.sum(x, axis=1))  # noqa: E731
    phi2 = lambda t, x: 0.05 + 0.0 * x[:, 0]  # noqa: E731
    roots = np.linspace(-1, 1, 3)[:, None] * np.ones((1, spec.state_dim))
    rep = bsde.stability_check(spec, grid, roots, xi1, xi2, None, phi2, m=params.tree_gauss)
    return CheckResult("stability", "a-priori estimate for differences of BSDE solutions", rep.worst_ratio,
                       1.0 + rep.slack, rep.passed, None, rep.to_dict())


def _tree_controls(spec, limit=9):
    """Shrink control sets so a depth-2 game tree stays small."""
    def thin(cs):
        if len(cs) <= 3:
            return cs
        idx = np.unique(np.linspace(0, len(cs) - 1, 3).round().astype(int))
        return ControlSet(cs.points[idx], cs.label)
    if len(spec.u_set) * len(spec.v_set) <= limit:
        return spec
    return spec.with_controls(thin(spec.u_set), thin(spec.v_set))


def check_dpp_tree(spec, params: SchemeParams) -> CheckResult:
    small = _tree_controls(spec)
    depth = 3
    grid = tree_grid(small, depth)
    worst, where = 0.0, None
    for which in ("lower", "upper"):
        for k in range(depth + 1):
            d = game.tree_dpp_discrepancy(small, which, grid, np.full(spec.state_dim, 0.25), k, params.tree_gauss)
            if d >= worst:
                worst, where = d, {"which": which, "split": k}
    return CheckResult("dpp_tree", "dynamic programming principle (exact tree recursion)", worst, 1e-12,
                       worst <= 1e-12, where)


def check_dpp_grid(spec, params: SchemeParams) -> CheckResult:
    n = min_steps(spec, at_least=10)
    n += n % 2
    sg = params.sgrid(spec.state_dim, nodes=int(round(params.xnodes / 2)) | 1)
    out, ok = {}, True
    for which in ("lower", "upper"):
        rep = game.dpp_check(spec, which, TimeGrid(0, spec.horizon, n), sg, n // 2, rungs=3,
                             region=0.75 * params.xbox)
        out[which] = rep.to_dict()
        ok = ok and rep.passed
    last = max(out[w]["ladder"][-1]["discrepancy"] for w in out)
    return CheckResult("dpp_grid", "dynamic programming principle (refinement ladder)", last, None, ok, None, out)


def _game_steps(spec, dx):
    return max(int(round(spec.horizon / dx)), min_steps(spec))


def check_regularity(spec, params: SchemeParams) -> CheckResult:
    dx = params.dx
    rows = []
    for factor in (1, 2):
        sg = params.sgrid(spec.state_dim, nodes=(params.xnodes - 1) * factor + 1)
        n = max(params.n_steps or 0, _game_steps(spec, 2 * dx)) * factor
        W = game.solve_value(spec, "lower", TimeGrid(0, spec.horizon, n), sg, Engine(gauss=params.gauss))
        rows.append(game.regularity_check(W, region=0.5 * params.xbox))
    l0, l1 = rows[0].lipschitz_ratio, rows[1].lipschitz_ratio
    change = abs(l1 - l0) / max(l0, 1e-300) if l0 > 0 else abs(l1)
    alpha = rows[1].holder_exponent
    ok = change <= 0.10 and (alpha is None or alpha >= 0.45) and math.isfinite(rows[1].growth_ratio)
    return CheckResult("regularity", "Lipschitz continuity in x and 1/2-Holder continuity in t of the value",
                       change, 0.10, ok, None,
                       {"coarse": rows[0].to_dict(), "fine": rows[1].to_dict(), "holder_threshold": 0.45})


def check_determinism(spec, params: SchemeParams, seed=0) -> CheckResult:
    T = spec.horizon
    t = 0.5 * T
    after = max(8, min_steps(spec, T - t))
    ell = 2 * (T - t) / after
    u_pol = threshold_policy(0.0, 0, len(spec.u_set) - 1)
    v_pol = threshold_policy(0.5, len(spec.v_set) - 1, 0)
    sg = params.sgrid(spec.state_dim, nodes=41)
    rep = game.determinism_check(spec, t, np.zeros(spec.state_dim), ell, params.mc_paths, n_steps_after=after,
                                 u_policy=u_pol, v_policy=v_pol, seed=seed, sgrid=sg, engine=Engine(gauss=params.gauss))
    details = rep.to_dict()
    detected = True
    if len(spec.u_set) > 1:
        neg = game.determinism_check(spec, t, np.zeros(spec.state_dim), ell, 2000, n_steps_after=after,
                                     u_policy=game.pre_history_policy(0.0, 0, len(spec.u_set) - 1), v_policy=v_pol,
                                     seed=seed, sgrid=sg, engine=Engine(gauss=params.gauss), cost_policies=(u_pol, v_pol))
        details["negative_control_change"] = neg.max_swap_change
        details["negative_control_detected"] = neg.max_swap_change > 0
        detected = neg.max_swap_change > 0
    z = abs(rep.estimate_1 - rep.estimate_2) / max(math.hypot(rep.stderr_1, rep.stderr_2), 1e-300)
    return CheckResult("determinism", "value is deterministic (segment-swap invariance)", z, 3.0,
                       rep.passed and detected,
                       None, details)


def check_isaacs(spec, params: SchemeParams) -> CheckResult:
    n = max(params.n_steps or 0, _game_steps(spec, 2 * params.dx))
    sg = params.sgrid(spec.state_dim)
    grid = TimeGrid(0, spec.horizon, n)
    eng = Engine(gauss=params.gauss)
    W = game.solve_value(spec, "lower", grid, sg, eng)
    U = game.solve_value(spec, "upper", grid, sg, eng)
    steps = sorted({0, n // 2, n - 1})
    gap = pide.isaacs_gap(spec, grid, sg, W, steps=steps)
    diff = float(np.max(np.abs(W.values - U.values)))
    order = float(np.min(U.values - W.values))
    if gap.max_gap <= 1e-12:
        ok, stat, thr = diff <= 1e-10, diff, 1e-10
    else:
        ok, stat, thr = order >= -1e-12, -order, 1e-12
    return CheckResult("isaacs", "Isaacs condition implies equal lower and upper values", stat, thr, ok, gap.argmax,
                       {"gap": gap.to_dict(), "sup_lower_minus_upper": diff, "min_upper_minus_lower": order,
                        "isaacs_holds": gap.max_gap <= 1e-12})


def cross_solver_rung(spec, dx, xbox, gauss=5, cfl=0.9, region=None):
    nodes = int(round(2 * xbox / dx)) + 1
    sg = StateGrid.uniform(-xbox, xbox, nodes, spec.state_dim)
    n_pide = pide.required_steps(spec, sg, spec.horizon, target=cfl)
    P = pide.solve_pide(spec, "lower", TimeGrid(0, spec.horizon, n_pide), sg, cfl_target=cfl)
    n_game = _game_steps(spec, dx)
    W = game.solve_value(spec, "lower", TimeGrid(0, spec.horizon, n_game), sg, Engine(gauss=gauss))
    region = 0.5 * xbox if region is None else region
    mask = np.all(np.abs(sg.nodes) <= region + 1e-12, axis=1)
    return {"dx": dx, "pide_steps": n_pide, "game_steps": n_game, "cfl": P.cfl,
            "discrepancy": float(np.max(np.abs(P.values[0] - W.values[0])[mask]))}


def check_cross_solver(spec, params: SchemeParams) -> CheckResult:
    rungs = [cross_solver_rung(spec, params.dx * 2 ** -i, params.xbox, params.gauss, params.cfl) for i in range(2)]
    d0, d1 = rungs[0]["discrepancy"], rungs[1]["discrepancy"]
    floor = 1e-12
    ok = d0 <= 5e-2 and (d1 < d0 or max(d0, d1) <= floor)
    return CheckResult("cross_solver", "viscosity solution of the Isaacs integro-PDE equals the game value",
                       d0, 5e-2, ok, None, {"rungs": rungs})


def check_markov(spec, params: SchemeParams, seed=0) -> CheckResult:
    rng = np.random.default_rng([seed, 11])
    grid = tree_grid(spec, 3)
    xs = np.array([[-0.4], [0.7]]) * np.ones((1, spec.state_dim))
    # Partition cells from simulated pre-t noise: sign of a Gaussian pre-history.
    labels = (rng.standard_normal(64) > 0).astype(int)
    rep = bsde.markov_identity_check(spec, grid, xs, labels, engine=Engine("tree", params.tree_gauss))
    return CheckResult("markov", "Markov identity u(t, zeta) = Y_t for random initial states", rep.discrepancy,
                       rep.bound, rep.passed, None, rep.to_dict())


def pide_monotonicity(spec, sgrid: StateGrid, n_pairs=100, seed=0, which="lower", delta=None):
    """Largest violation of ``step(psi) <= step(psi')`` over random ordered pairs at interior-stencil nodes."""
    rng = np.random.default_rng([seed, 5])
    x = sgrid.nodes
    if delta is None:
        n = pide.required_steps(spec, sgrid, spec.horizon)
        delta = spec.horizon / n
    mask = sgrid.interior_mask(1)
    for u in spec.u_set.points:
        for v in spec.v_set.points:
            for e in spec.levy.marks:
                mask &= sgrid.contains(x + spec.jump(0.0, x, u, v, e))
    base = spec.terminal(x)
    worst = 0.0
    for _ in range(n_pairs):
        psi = base + rng.normal(0, 0.2, len(x))
        psi_p = psi + rng.uniform(0, 0.5, len(x)) * (rng.random(len(x)) < 0.5)
        a = pide.pide_step(spec, sgrid, psi, 0.0, delta, which)[0]
        b = pide.pide_step(spec, sgrid, psi_p, 0.0, delta, which)[0]
        worst = max(worst, float(np.max((a - b)[mask], initial=0.0)))
    return worst, int(mask.sum())


def quadratic_hamiltonian(spec, coef, t, x, u, v):
    """Closed-form Hamiltonian of ``a2 |x|^2 + a1 sum(x) + a0`` (derivatives exact, jumps evaluated directly)."""
    a2, a1, a0 = coef
    quad = lambda y: a2 * np.sum(y * y, axis=1) + a1 * np.sum(y, axis=1) + a0  # noqa: E731
    p0 = quad(x)
    grad = 2 * a2 * x + a1
    sig = spec.diffusion(t, x, u, v)
    total = a2 * np.einsum("nid,nid->n", sig, sig) + np.einsum("ni,ni->n", grad, spec.drift(t, x, u, v))
    c_nl = np.zeros(len(x))
    weights = spec.jump_weights(x) if spec.n_atoms else None
    for i, (e, rate) in enumerate(spec.levy.atoms):
        g = spec.jump(t, x, u, v, e)
        total = total + rate * a2 * np.sum(g * g, axis=1)
        c_nl += rate * (quad(x + g) - p0) * weights[:, i]
    z = np.einsum("ni,nid->nd", grad, sig)
    return total + spec.driver(t, x, p0, z, c_nl, u, v)


def hamiltonian_consistency(spec, coef=(0.7, -0.3, 0.2), dxs=(0.2, 0.1, 0.05, 0.025), xbox=2.0, u=None, v=None):
    """Error of the grid-interpolated Hamiltonian on a quadratic against the closed form, per spacing.

    Returns ``(errors, order)``; ``order`` is the fitted log-log slope, or
    ``None`` when every error sits at round-off (the scheme is exact there).
    """
    a2, a1, a0 = coef
    quad = lambda x: a2 * np.sum(x * x, axis=1) + a1 * np.sum(x, axis=1) + a0  # noqa: E731
    u = spec.u_set[0] if u is None else u
    v = spec.v_set[0] if v is None else v
    errors = []
    for dx in dxs:
        sg = StateGrid.uniform(-xbox, xbox, int(round(2 * xbox / dx)) + 1, spec.state_dim)
        psi = sg.interpolant(quad(sg.nodes))
        targets = np.linspace(-0.5 * xbox, 0.5 * xbox, 9)
        probe = sg.nodes[np.argmin(np.abs(sg.nodes[:, None, 0] - targets[None, :]), axis=0)]
        num = pide.hamiltonian(spec, psi, 0.0, probe, u, v, h=dx).total
        exact = quadratic_hamiltonian(spec, coef, 0.0, probe, u, v)
        errors.append(float(np.max(np.abs(num - exact))))
    if max(errors) <= ROUNDOFF:
        return errors, None
    order = float(np.polyfit(np.log(dxs), np.log(np.maximum(errors, 1e-300)), 1)[0])
    return errors, order


def check_scheme(spec, params: SchemeParams, seed=0) -> CheckResult:
    sg = params.sgrid(spec.state_dim)
    mono, used = pide_monotonicity(spec, sg, 100, seed)
    errors, order = hamiltonian_consistency(spec, xbox=params.xbox)
    depth = 6
    leaf = abs(oracle.leaf_probability_sum(spec, tree_grid(spec, depth), params.tree_gauss) - 1.0)
    ok = mono <= 1e-12 and leaf <= 1e-14 and (order is None or order >= CONSISTENCY_ORDER)
    return CheckResult("scheme", "monotone, consistent scheme and conserved tree probabilities", mono, 1e-12, ok, None,
                       {"monotonicity_violation": mono, "interior_nodes": used, "hamiltonian_errors": errors,
                        "hamiltonian_order": order, "leaf_probability_error": leaf})


def check_oracle_agreement(spec, params: SchemeParams) -> CheckResult:
    grid = tree_grid(spec, 1)
    sg = params.sgrid(spec.state_dim, nodes=21)
    y_grid = bsde.solve_bsde(spec, grid, sg, engine=Engine(gauss=params.tree_gauss)).y[0]
    y_tree = oracle.oracle_bsde(spec, grid, sg.nodes, m=params.tree_gauss).root_y
    d = float(np.max(np.abs(y_grid - y_tree)))
    return CheckResult("oracle_agreement", "grid solver reproduces exact tree values", d, 1e-12, d <= 1e-12)


CHECK_ORDER = ("hypotheses", "comparison", "stability", "dpp_tree", "dpp_grid", "regularity", "determinism",
               "isaacs", "cross_solver", "markov", "scheme", "oracle_agreement")


def run_checks(spec, params: SchemeParams = SchemeParams(), seed: int = 0, only=None) -> list:
    table = {
        "hypotheses": lambda: check_hypotheses(spec, seed),
        "comparison": lambda: check_comparison(spec, params, seed),
        "stability": lambda: check_stability(spec, params, seed),
        "dpp_tree": lambda: check_dpp_tree(spec, params),
        "dpp_grid": lambda: check_dpp_grid(spec, params),
        "regularity": lambda: check_regularity(spec, params),
        "determinism": lambda: check_determinism(spec, params, seed),
        "isaacs": lambda: check_isaacs(spec, params),
        "cross_solver": lambda: check_cross_solver(spec, params),
        "markov": lambda: check_markov(spec, params, seed),
        "scheme": lambda: check_scheme(spec, params, seed),
        "oracle_agreement": lambda: check_oracle_agreement(spec, params),
    }
    names = CHECK_ORDER if only is None else [n for n in CHECK_ORDER if n in only]
    return [table[n]() for n in names]


# --------------------------------------------------------------------------- manifest


def build_manifest(problem_doc, params: SchemeParams, seed: int, results, *, timestamp: str | None = None) -> dict:
    checks = [r.to_dict() for r in results]
    payload = {
        "manifest_version": MANIFEST_VERSION,
        "problem": problem_doc,
        "scheme": _clean(asdict(params)),
        "seed": seed,
        "checks": checks,
        "all_passed": all(c["passed"] is not False for c in checks),
    }
    metadata = {
        "timestamp": timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    return {"metadata": metadata, "payload": payload}


def payload_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest["payload"], sort_keys=True, indent=2).encode() + b"\n"


def manifest_bytes(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, indent=2).encode() + b"\n"


def load_manifest(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}", "") from None
    if not isinstance(doc, dict) or not doc:
        raise ParseError("manifest is empty", "")
    if "payload" not in doc or not isinstance(doc["payload"], dict):
        raise ParseError("missing payload", "/payload")
    checks = doc["payload"].get("checks")
    if not isinstance(checks, list) or not checks:
        raise ParseError("manifest lists no checks", "/payload/checks")
    for i, c in enumerate(checks):
        for key in ("name", "reference", "statistic", "threshold", "passed"):
            if not isinstance(c, dict) or key not in c:
                raise ParseError(f"check is missing {key!r}", f"/payload/checks/{i}")
    return doc


def _num(v):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.3e}"


def render(manifest: dict) -> str:
    """Plain-text table: check, reference, statistic, threshold, verdict (with witness on failures)."""
    checks = manifest["payload"]["checks"]
    rows = [("check", "reference", "statistic", "threshold", "result")]
    notes = []
    for c in checks:
        verdict = "PASS" if c["passed"] is True else ("FAIL" if c["passed"] is False else "N/A")
        rows.append((c["name"], c["reference"], _num(c["statistic"]), _num(c["threshold"]), verdict))
        if verdict == "FAIL":
            notes.append(f"FAIL {c['name']} ({c['reference']}): witness={json.dumps(c.get('witness'), sort_keys=True)}")
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    n_fail = sum(1 for c in checks if c["passed"] is False)
    lines.append("")
    lines.append(f"{len(checks)} checks, {n_fail} failed")
    lines.extend(notes)
    return "\n".join(lines) + "\n"
