"""Game data: coefficients, control sets, problem files and hypothesis probes.

Coefficient callables follow a vectorised contract.  With ``N`` states stacked
in ``x`` of shape ``(N, n)`` and control points ``u`` (shape ``(p,)``) and
``v`` (shape ``(q,)``):

=========================================  ==============
``b(t, x, u, v)``                          ``(N, n)``
``sigma(t, x, u, v)``                      ``(N, n, d)``
``gamma(t, x, u, v, e)``                   ``(N, n)``
``f(t, x, y, z, k, u, v)``                 ``(N,)``  with ``y (N,)``, ``z (N, d)``, ``k (N,)``
``phi(x)``                                 ``(N,)``
``l(x, e)``                                ``(N,)``
``rho(e)``                                 scalar
=========================================  ==============

Callables may return anything broadcastable to these shapes and must be pure.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from .errors import ConfigurationError, ParseError
from .levy_paths import LevyMeasure

SCHEMA_VERSION = 1

PROBLEM_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "dims", "horizon", "coefficients", "controls", "levy"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "dims": {
            "type": "object",
            "required": ["state", "brownian"],
            "properties": {
                "state": {"type": "integer", "minimum": 1},
                "brownian": {"type": "integer", "minimum": 1},
                "mark": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "coefficients": {
            "type": "object",
            "required": ["family", "params"],
            "properties": {"family": {"type": "string"}, "params": {"type": "object"}},
            "additionalProperties": False,
        },
        "controls": {
            "type": "object",
            "required": ["U", "V"],
            "properties": {
                "U": {"$ref": "#/definitions/points"},
                "V": {"$ref": "#/definitions/points"},
            },
            "additionalProperties": False,
        },
        "levy": {
            "type": "object",
            "required": ["atoms"],
            "properties": {
                "atoms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["mark", "rate"],
                        "properties": {
                            "mark": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                            "rate": {"type": "number", "exclusiveMinimum": 0},
                        },
                        "additionalProperties": False,
                    },
                }
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "definitions": {
        "points": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        }
    },
}


# --------------------------------------------------------------------------- controls


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite set of control points standing in for a compact control space."""

    points: np.ndarray
    label: str = "U"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ConfigurationError(f"control set {self.label} is empty")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ConfigurationError(f"control set {self.label} has duplicate points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other):
        return isinstance(other, ControlSet) and np.array_equal(self.points, other.points)

    def to_json(self):
        return [[float(c) for c in p] for p in self.points]


def grid(lo, hi, n, label="U") -> ControlSet:
    """Uniform lattice with ``n`` points per axis on the box ``[lo, hi]``."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = np.broadcast_to(np.atleast_1d(n), lo.shape)
    axes = [np.linspace(a, b, int(k)) for a, b, k in zip(lo, hi, n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return ControlSet(np.stack([m.ravel() for m in mesh], axis=1), label)


# --------------------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class Coefficients:
    b: Callable
    sigma: Callable
    gamma: Callable
    f: Callable
    phi: Callable
    l: Callable
    lipschitz_C: float
    rho: Callable
    family: str | None = None
    params: dict | None = field(default=None, compare=False)

    @property
    def serializable(self) -> bool:
        return self.family is not None


def _arr(params, key, shape, pointer):
    val = params.get(key)
    if val is None:
        return np.zeros(shape)
    try:
        out = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ParseError("expected a numeric array", pointer) from None
    if out.shape != shape:
        raise ParseError(f"expected shape {list(shape)}, got {list(out.shape)}", pointer)
    return out


def affine_family(params: dict, n: int, d: int, p: int, q: int, mark_dim: int) -> Coefficients:
    """Coefficients that are affine in the state with control-dependent terms.

    ``params`` groups (all entries optional, zero by default)::

        drift      const (n), x (n,n), u (n,p), v (n,q), uv (n,p,q)
        diffusion  const (n,d), x (n,d,n), u (n,d,p), v (n,d,q)
        jump       mark (n,l), x (n,n)      gamma = mark@e + (x@X) * min(1,|e|)
        driver     const, x (n), y, z (d), z_abs, k, u (p), v (q), uu, vv
        terminal   const, x (n), smooth_abs    phi = const + x.X + smooth_abs*sqrt(1+|X|^2)
        jump_weight  scale                 l(x, e) = scale * min(1, |e|)
        rho          scale                 rho(e) = scale * min(1, |e|)
        lipschitz    C
    """
    params = copy.deepcopy(params)

    def group(name):
        g = params.get(name, {})
        if not isinstance(g, dict):
            raise ParseError("expected an object", f"/coefficients/params/{name}")
        return g

    def arr(name, key, shape):
        return _arr(group(name), key, shape, f"/coefficients/params/{name}/{key}")

    def scalar(name, key, default=0.0):
        val = group(name).get(key, default)
        if not isinstance(val, (int, float)):
            raise ParseError("expected a number", f"/coefficients/params/{name}/{key}")
        return float(val)

    b0, bx, bu, bv = arr("drift", "const", (n,)), arr("drift", "x", (n, n)), arr("drift", "u", (n, p)), arr("drift", "v", (n, q))
    buv = arr("drift", "uv", (n, p, q))
    s0, sx = arr("diffusion", "const", (n, d)), arr("diffusion", "x", (n, d, n))
    su, sv = arr("diffusion", "u", (n, d, p)), arr("diffusion", "v", (n, d, q))
    gm, gx = arr("jump", "mark", (n, mark_dim)), arr("jump", "x", (n, n))
    f0, fx, fy = scalar("driver", "const"), arr("driver", "x", (n,)), scalar("driver", "y")
    fz, fzabs, fk = arr("driver", "z", (d,)), scalar("driver", "z_abs"), scalar("driver", "k")
    fu, fv = arr("driver", "u", (p,)), arr("driver", "v", (q,))
    fuu, fvv = scalar("driver", "uu"), scalar("driver", "vv")
    p0, px, pw = scalar("terminal", "const"), arr("terminal", "x", (n,)), scalar("terminal", "smooth_abs")
    lscale = scalar("jump_weight", "scale")
    C = float(params.get("lipschitz", 1.0))
    rscale = scalar("rho", "scale", C)

    def b(t, x, u, v):
        return b0 + x @ bx.T + bu @ u + bv @ v + np.einsum("ijk,j,k->i", buv, u, v)

    def sigma(t, x, u, v):
        return s0 + np.einsum("idk,nk->nid", sx, x) + su @ u + sv @ v

    def gamma(t, x, u, v, e):
        e = np.asarray(e, dtype=float)
        return gm @ e + (x @ gx.T) * min(1.0, float(np.linalg.norm(e)))

    def f(t, x, y, z, k, u, v):
        return (f0 + x @ fx + fy * y + z @ fz + fzabs * np.linalg.norm(z, axis=-1) + fk * k
                + fu @ u + fv @ v + fuu * (u @ u) + fvv * (v @ v))

    def phi(x):
        return p0 + x @ px + pw * np.sqrt(1.0 + np.sum(x * x, axis=-1))

    def l(x, e):
        return np.full(len(x), lscale * min(1.0, float(np.linalg.norm(e))))

    def rho(e):
        return rscale * min(1.0, float(np.linalg.norm(e)))

    return Coefficients(b, sigma, gamma, f, phi, l, C, rho, family="affine", params=params)


FAMILIES: dict[str, Callable[..., Coefficients]] = {"affine": affine_family}


def register_family(name: str, builder: Callable[..., Coefficients]) -> None:
    FAMILIES[name] = builder


# --------------------------------------------------------------------------- problem spec


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    coefficients: Coefficients
    u_set: ControlSet
    v_set: ControlSet
    levy: LevyMeasure
    horizon: float
    state_dim: int
    brownian_dim: int
    name: str = ""

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        self._check_dimensions()

    @property
    def n_atoms(self) -> int:
        return self.levy.n_atoms

    @property
    def lipschitz_C(self) -> float:
        return self.coefficients.lipschitz_C

    # Shape-normalising evaluators; every solver goes through these.
    def drift(self, t, x, u, v):
        return np.broadcast_to(np.asarray(self.coefficients.b(t, x, u, v), dtype=float), (len(x), self.state_dim))

    def diffusion(self, t, x, u, v):
        return np.broadcast_to(np.asarray(self.coefficients.sigma(t, x, u, v), dtype=float),
                               (len(x), self.state_dim, self.brownian_dim))

    def jump(self, t, x, u, v, e):
        return np.broadcast_to(np.asarray(self.coefficients.gamma(t, x, u, v, e), dtype=float), (len(x), self.state_dim))

    def jumps(self, t, x, u, v):
        """(N, n_atoms, n) array of jump sizes for every atom."""
        out = np.empty((len(x), self.n_atoms, self.state_dim))
        for i, e in enumerate(self.levy.marks):
            out[:, i] = self.jump(t, x, u, v, e)
        return out

    def driver(self, t, x, y, z, k, u, v):
        return np.broadcast_to(np.asarray(self.coefficients.f(t, x, y, z, k, u, v), dtype=float), (len(x),))

    def terminal(self, x):
        return np.broadcast_to(np.asarray(self.coefficients.phi(x), dtype=float), (len(x),))

    def jump_weight(self, x, e):
        return np.broadcast_to(np.asarray(self.coefficients.l(x, e), dtype=float), (len(x),))

    def jump_weights(self, x):
        """(N, n_atoms) array of ``l(x, e_i)``."""
        out = np.empty((len(x), self.n_atoms))
        for i, e in enumerate(self.levy.marks):
            out[:, i] = self.jump_weight(x, e)
        return out

    def _check_dimensions(self):
        n, d = self.state_dim, self.brownian_dim
        x = np.zeros((2, n))
        u, v = self.u_set[0], self.v_set[0]
        checks = {
            "b": (self.coefficients.b(0.0, x, u, v), (2, n)),
            "sigma": (self.coefficients.sigma(0.0, x, u, v), (2, n, d)),
            "phi": (self.coefficients.phi(x), (2,)),
            "f": (self.coefficients.f(0.0, x, np.zeros(2), np.zeros((2, d)), np.zeros(2), u, v), (2,)),
        }
        for e in self.levy.marks:
            checks["gamma"] = (self.coefficients.gamma(0.0, x, u, v, e), (2, n))
            checks["l"] = (self.coefficients.l(x, e), (2,))
        for name, (val, shape) in checks.items():
            val = np.asarray(val, dtype=float)
            try:
                np.broadcast_to(val, shape)
            except ValueError:
                raise ConfigurationError(f"coefficient {name} has shape {val.shape}, expected {shape}",
                                         module="problem", operation="ProblemSpec") from None

    # serialisation ----------------------------------------------------------
    def to_dict(self) -> dict:
        if not self.coefficients.serializable:
            raise ConfigurationError("coefficients given as in-process callables cannot be serialised")
        doc = {
            "schema_version": SCHEMA_VERSION,
            "dims": {"state": self.state_dim, "brownian": self.brownian_dim, "mark": self.levy.mark_dim},
            "horizon": float(self.horizon),
            "coefficients": {"family": self.coefficients.family, "params": copy.deepcopy(self.coefficients.params)},
            "controls": {"U": self.u_set.to_json(), "V": self.v_set.to_json()},
            "levy": self.levy.to_json(),
        }
        if self.name:
            doc["name"] = self.name
        return doc

    def __eq__(self, other):
        if not isinstance(other, ProblemSpec):
            return NotImplemented
        if self.coefficients.serializable and other.coefficients.serializable:
            return self.to_dict() == other.to_dict()
        return self is other

    __hash__ = None

    def with_coefficients(self, **changes) -> "ProblemSpec":
        """Copy with some coefficient callables replaced (drops serialisability)."""
        fields = {k: getattr(self.coefficients, k) for k in ("b", "sigma", "gamma", "f", "phi", "l", "lipschitz_C", "rho")}
        fields.update(changes)
        return ProblemSpec(Coefficients(**fields), self.u_set, self.v_set, self.levy, self.horizon,
                           self.state_dim, self.brownian_dim, self.name)

    def with_controls(self, u_set=None, v_set=None) -> "ProblemSpec":
        return ProblemSpec(self.coefficients, u_set or self.u_set, v_set or self.v_set, self.levy,
                           self.horizon, self.state_dim, self.brownian_dim, self.name)


def _pointer(error: jsonschema.ValidationError) -> str:
    path = "".join(f"/{p}" for p in error.absolute_path)
    if error.validator == "required" and isinstance(error.instance, dict):
        missing = [k for k in error.validator_value if k not in error.instance]
        if missing:
            path += f"/{missing[0]}"
    return path


def spec_from_dict(doc: Any) -> ProblemSpec:
    validator = jsonschema.Draft7Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if errors:
        err = errors[0]
        raise ParseError(err.message, _pointer(err), module="problem", operation="parse_problem")
    dims = doc["dims"]
    n, d = dims["state"], dims["brownian"]
    mark_dim = dims.get("mark", 1)
    for i, atom in enumerate(doc["levy"]["atoms"]):
        if len(atom["mark"]) != mark_dim:
            raise ParseError(f"mark has length {len(atom['mark'])}, expected {mark_dim}", f"/levy/atoms/{i}/mark")
    levy = LevyMeasure.from_json(doc["levy"], mark_dim=mark_dim)
    u_pts, v_pts = doc["controls"]["U"], doc["controls"]["V"]
    for label, pts in (("U", u_pts), ("V", v_pts)):
        if len({len(p) for p in pts}) != 1:
            raise ParseError("control points must share one dimension", f"/controls/{label}")
    u_set, v_set = ControlSet(u_pts, "U"), ControlSet(v_pts, "V")
    family = doc["coefficients"]["family"]
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown coefficient family {family!r}", module="problem", operation="parse_problem")
    coeffs = FAMILIES[family](doc["coefficients"]["params"], n, d, u_set.dim, v_set.dim, mark_dim)
    return ProblemSpec(coeffs, u_set, v_set, levy, float(doc["horizon"]), n, d, doc.get("name", ""))


def parse_problem(path) -> ProblemSpec:
    """Load a problem JSON file (schema version 1)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"problem file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", "") from None
    return spec_from_dict(doc)


def serialize_problem(spec: ProblemSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"


def write_problem(spec: ProblemSpec, path) -> None:
    Path(path).write_text(serialize_problem(spec))


SCENARIOS = ("zero_dynamics", "separated_drift", "bilinear_gap", "jump_heavy", "driver_coupled")


def scenario_document(name: str) -> dict:
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    text = resources.files("jumpgame.scenarios").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_scenario(name: str) -> ProblemSpec:
    return spec_from_dict(scenario_document(name))


def load_problem(ref: str) -> ProblemSpec:
    """Accept either a path to a problem file or a registered scenario name."""
    if ref in SCENARIOS and not Path(ref).exists():
        return load_scenario(ref)
    return parse_problem(ref)


# --------------------------------------------------------------------------- hypothesis probes


@dataclass(frozen=True)
class ProbeConfig:
    n_pairs: int = 200
    box: float = 5.0
    seed: int = 0
    slack: float = 1e-9


@dataclass(frozen=True)
class ClauseResult:
    clause: str
    description: str
    statistic: float
    threshold: float
    passed: bool
    witness: Any = None

    def to_dict(self):
        return {"clause": self.clause, "description": self.description, "statistic": self.statistic,
                "threshold": self.threshold, "passed": self.passed, "witness": self.witness}


@dataclass(frozen=True)
class ValidationReport:
    clauses: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    @property
    def failures(self):
        return [c for c in self.clauses if not c.passed]

    def __getitem__(self, clause):
        for c in self.clauses:
            if c.clause == clause:
                return c
        raise KeyError(clause)

    def to_dict(self):
        return {"passed": self.passed, "clauses": [c.to_dict() for c in self.clauses]}


def _probe_points(rng, n_pairs, dim, box):
    """Random pairs in the box plus near-corner pairs that expose growth."""
    a = rng.uniform(-box, box, (n_pairs, dim))
    b = rng.uniform(-box, box, (n_pairs, dim))
    corner = np.full((2, dim), box)
    corner[1] *= -1
    a = np.vstack([a, corner, corner * 0.999])
    b = np.vstack([b, corner * 0.999, corner])
    return a, b


def _ratio(num, den):
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return r


def validate_hypotheses(spec: ProblemSpec, probe: ProbeConfig = ProbeConfig()) -> ValidationReport:
    """Probe the Lipschitz, growth and monotonicity assumptions on random pairs.

    Each clause reports the largest empirical ratio found and compares it with
    the declared constant ``C`` (relative slack ``probe.slack``).  Violations
    are reported, never raised.
    """
    rng = np.random.default_rng(probe.seed)
    C = spec.lipschitz_C
    tol = 1.0 + probe.slack
    n, d = spec.state_dim, spec.brownian_dim
    T = spec.horizon
    xa, xb = _probe_points(rng, probe.n_pairs, n, probe.box)
    m = len(xa)
    results = []

    def clause(name, desc, stat, thr, witness=None, passed=None):
        stat = float(stat)
        ok = bool(stat <= thr * tol + 1e-12) if passed is None else bool(passed)
        results.append(ClauseResult(name, desc, stat, float(thr), ok, witness))

    # Time continuity degenerates to a check in t for finite control sets.
    h = 1e-7
    worst_t = 0.0
    for u in spec.u_set.points:
        for v in spec.v_set.points:
            for t in (0.0, 0.5 * T, T - h):
                db = np.abs(spec.drift(t + h, xa, u, v) - spec.drift(t, xa, u, v)).max()
                ds = np.abs(spec.diffusion(t + h, xa, u, v) - spec.diffusion(t, xa, u, v)).max()
                worst_t = max(worst_t, db, ds)
    clause("coefficients-time-continuity", "b, sigma continuous in t", worst_t, 1e-3)

    dx = np.linalg.norm(xa - xb, axis=1)
    worst, wit = 0.0, None
    worst_g, wit_g = 0.0, None
    worst_g0 = 0.0
    for iu, u in enumerate(spec.u_set.points):
        for iv, v in enumerate(spec.v_set.points):
            db = np.linalg.norm(spec.drift(0.0, xa, u, v) - spec.drift(0.0, xb, u, v), axis=1)
            ds = np.linalg.norm((spec.diffusion(0.0, xa, u, v) - spec.diffusion(0.0, xb, u, v)).reshape(m, -1), axis=1)
            r = _ratio(db + ds, dx)
            j = int(np.argmax(r))
            if r[j] > worst:
                worst, wit = r[j], {"x": xa[j].tolist(), "x_prime": xb[j].tolist(), "u": iu, "v": iv}
            for i, e in enumerate(spec.levy.marks):
                rho = spec.coefficients.rho(e)
                dg = np.linalg.norm(spec.jump(0.0, xa, u, v, e) - spec.jump(0.0, xb, u, v, e), axis=1)
                rg = _ratio(dg, dx) / max(rho, 1e-300)
                k = int(np.argmax(rg))
                if rg[k] > worst_g:
                    worst_g, wit_g = rg[k], {"atom": i, "x": xa[k].tolist(), "x_prime": xb[k].tolist()}
                g0 = np.linalg.norm(spec.jump(0.0, np.zeros((1, n)), u, v, e)) / max(rho, 1e-300)
                worst_g0 = max(worst_g0, g0)
    clause("coefficients-lipschitz", "b, sigma Lipschitz in x", worst, C, wit)
    clause("jump-size-lipschitz", "gamma Lipschitz in x with modulus rho(e)", worst_g, 1.0, wit_g)
    clause("jump-size-at-origin", "|gamma(t,0,u,v,e)| <= rho(e)", worst_g0, 1.0)

    # Driver: joint Lipschitz ratio and monotonicity in k.
    box = probe.box
    ya, yb = rng.uniform(-box, box, m), rng.uniform(-box, box, m)
    za, zb = rng.uniform(-box, box, (m, d)), rng.uniform(-box, box, (m, d))
    ka, kb = rng.uniform(-box, box, m), rng.uniform(-box, box, m)
    den = dx + np.abs(ya - yb) + np.linalg.norm(za - zb, axis=1) + np.abs(ka - kb)
    worst_f, wit_f = 0.0, None
    worst_mono, wit_mono = 0.0, None
    k_lo, k_hi = np.minimum(ka, kb), np.maximum(ka, kb)
    for iu, u in enumerate(spec.u_set.points):
        for iv, v in enumerate(spec.v_set.points):
            fa = spec.driver(0.0, xa, ya, za, ka, u, v)
            fb = spec.driver(0.0, xb, yb, zb, kb, u, v)
            r = _ratio(np.abs(fa - fb), den)
            j = int(np.argmax(r))
            if r[j] > worst_f:
                worst_f, wit_f = r[j], {"index": j, "u": iu, "v": iv}
            drop = spec.driver(0.0, xa, ya, za, k_lo, u, v) - spec.driver(0.0, xa, ya, za, k_hi, u, v)
            j = int(np.argmax(drop))
            if drop[j] > worst_mono:
                worst_mono, wit_mono = drop[j], {"k": float(k_lo[j]), "k_prime": float(k_hi[j]), "u": iu, "v": iv}
    clause("driver-lipschitz", "f Lipschitz in (x, y, z, k)", worst_f, C, wit_f)
    clause("driver-monotone-in-k", "f nondecreasing in k (largest decrease found)", worst_mono, 0.0, wit_mono,
           passed=worst_mono <= 1e-12)

    worst_l, worst_lb, worst_lneg = 0.0, 0.0, 0.0
    for e in spec.levy.marks:
        cap = min(1.0, float(np.linalg.norm(e)))
        la, lb = spec.jump_weight(xa, e), spec.jump_weight(xb, e)
        worst_lneg = max(worst_lneg, float(-min(la.min(), 0.0)))
        worst_lb = max(worst_lb, float(la.max()) / cap)
        worst_l = max(worst_l, float(np.max(_ratio(np.abs(la - lb), dx * cap))))
    clause("jump-weight-bound", "0 <= l(x,e) <= C(1 ^ |e|)", worst_lb, C, None, passed=worst_lneg == 0 and worst_lb <= C * tol)
    clause("jump-weight-lipschitz", "l Lipschitz in x with modulus C(1 ^ |e|)", worst_l, C)

    pa, pb = spec.terminal(xa), spec.terminal(xb)
    r = _ratio(np.abs(pa - pb), dx)
    j = int(np.argmax(r))
    clause("terminal-lipschitz", "Phi Lipschitz", r[j], C, {"x": xa[j].tolist(), "x_prime": xb[j].tolist()})

    worst_rho = 0.0
    for e in spec.levy.marks:
        worst_rho = max(worst_rho, spec.coefficients.rho(e) / min(1.0, float(np.linalg.norm(e))))
    clause("jump-modulus-bound", "rho(e) <= C(1 ^ |e|)", worst_rho, C)
    return ValidationReport(tuple(results))


def make_spec(b=None, sigma=None, gamma=None, f=None, phi=None, l=None, *, n=1, d=1, U=(0.0,), V=(0.0,),
              atoms=(), horizon=1.0, C=1.0, rho=None, name="") -> ProblemSpec:
    """Build a spec from in-process callables; omitted coefficients are zero.

    Convenient for tests and experiments; the result is not serialisable.
    """
    zero_vec = lambda *a: np.zeros(n)  # noqa: E731
    coeffs = Coefficients(
        b=b or zero_vec,
        sigma=sigma or (lambda t, x, u, v: np.zeros((n, d))),
        gamma=gamma or (lambda t, x, u, v, e: np.zeros(n)),
        f=f or (lambda t, x, y, z, k, u, v: 0.0),
        phi=phi or (lambda x: np.zeros(len(x))),
        l=l or (lambda x, e: 0.0),
        lipschitz_C=C,
        rho=rho or (lambda e: C * min(1.0, float(np.linalg.norm(e)))),
    )
    u_set = ControlSet(np.asarray(U, dtype=float).reshape(len(U), -1), "U")
    v_set = ControlSet(np.asarray(V, dtype=float).reshape(len(V), -1), "V")
    levy = LevyMeasure.from_atoms(atoms)
    return ProblemSpec(coeffs, u_set, v_set, levy, horizon, n, d, name)
