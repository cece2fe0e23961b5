"""Command-line front end: ``jumpgame <command> --problem FILE_OR_SCENARIO --out DIR``.

Exit status: 0 when every requested check passes, 1 for configuration
errors, 2 for validation or check failures, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, verify
from .bsde import solve_bsde
from .errors import ConfigurationError, JumpGameError, ValidationFailure
from .forward import moment_check, simulate_batch
from .game import solve_value
from .kernel import Engine
from .levy_paths import TimeGrid, sample_paths
from .pide import required_steps, solve_pide
from .policies import constant_policy
from .problem import ControlSet, load_problem, validate_hypotheses


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return value
    return parse


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--problem", required=True, help="problem JSON file or shipped scenario name")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--steps", type=_positive(int), help="time steps (default: coarsest admissible)")
    common.add_argument("--xnodes", type=_positive(int), default=81, help="nodes per state axis")
    common.add_argument("--xbox", type=_positive(float), default=2.0, help="state box half-width")
    common.add_argument("--gauss", type=_positive(int), default=5, help="Gauss-Hermite order")
    common.add_argument("--cfl", type=_positive(float), default=0.9, help="CFL target in (0, 1]")
    common.add_argument("--tol", type=_positive(float), default=1e-14, help="implicit-step tolerance")
    common.add_argument("--small-jump", type=float, default=0.0, help="atoms with smaller |mark| use the Taylor term")
    common.add_argument("--controls", type=_positive(int),
                        help="resample each one-dimensional control set on this many points")
    common.add_argument("--force", action="store_true",
                        help="write into a non-empty output directory; run checks despite failed hypotheses")

    parser = _Parser(prog="jumpgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"jumpgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="forward paths and moment report")
    p.add_argument("--x0", type=float, nargs="+", default=None)
    p.add_argument("--paths", type=_positive(int), default=10)
    p.add_argument("--u-index", type=int, default=0)
    p.add_argument("--v-index", type=int, default=0)

    p = sub.add_parser("solve-bsde", parents=[common], help="BSDE for fixed constant controls")
    p.add_argument("--u-index", type=int, default=0)
    p.add_argument("--v-index", type=int, default=0)

    for name, text in (("solve-game", "lower or upper value by backward minimax"),
                       ("solve-pide", "explicit finite-difference Isaacs solver")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--which", choices=("lower", "upper"), default="lower")

    p = sub.add_parser("verify", parents=[common], help="full property suite and manifest")
    p.add_argument("--only", help="comma-separated subset of checks")
    p.add_argument("--mc-paths", type=_positive(int), default=10_000)

    p = sub.add_parser("refine", parents=[common], help="cross-solver refinement ladder")
    p.add_argument("--rungs", type=_positive(int), default=3)

    p = sub.add_parser("render", help="print a verify manifest as a table")
    p.add_argument("manifest")
    return parser


def _scheme(args) -> verify.SchemeParams:
    if not 0 < args.cfl <= 1:
        raise ConfigurationError(f"--cfl must lie in (0, 1], got {args.cfl}", module="cli", operation="run")
    if args.xnodes < 3:
        raise ConfigurationError("--xnodes must be at least 3", module="cli", operation="run")
    return verify.SchemeParams(n_steps=args.steps, xbox=args.xbox, xnodes=args.xnodes, gauss=args.gauss,
                               cfl=args.cfl, tol=args.tol, small_jump=args.small_jump,
                               mc_paths=getattr(args, "mc_paths", 10_000))


def _prepare_out(path, force) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigurationError(f"{out} exists and is not a directory", module="cli", operation="run")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ConfigurationError(f"{out} is not empty (use --force to overwrite)", module="cli", operation="run")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"{out} is not writable: {exc}", module="cli", operation="run") from None
    return out


def _resample_controls(spec, n):
    def one(cs):
        if cs.points.shape[1] != 1:
            raise ConfigurationError("--controls applies to one-dimensional control sets only",
                                     module="cli", operation="run")
        lo, hi = float(cs.points.min()), float(cs.points.max())
        pts = np.linspace(lo, hi, n if hi > lo else 1)[:, None]
        return ControlSet(pts, cs.label)
    return spec.with_controls(one(spec.u_set), one(spec.v_set))


def _load(args):
    spec = load_problem(args.problem)
    if args.controls:
        spec = _resample_controls(spec, args.controls)
    return spec


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(verify._clean(doc), indent=2, sort_keys=True) + "\n")


def _tgrid(spec, args):
    dx = 2 * args.xbox / (args.xnodes - 1)
    n = args.steps or max(verify.min_steps(spec), int(round(spec.horizon / dx)))
    return TimeGrid(0.0, spec.horizon, n)


def _root_summary(sgrid, values):
    i = int(np.argmin(np.sum(sgrid.nodes ** 2, axis=1)))
    return {"x": sgrid.nodes[i].tolist(), "value": float(values[i])}


def _check_index(name, index, size):
    if not 0 <= index < size:
        raise ConfigurationError(f"{name} must lie in [0, {size})", module="cli", operation="run")


def cmd_simulate(args, spec, scheme, out) -> int:
    x0 = np.zeros(spec.state_dim) if args.x0 is None else np.asarray(args.x0, dtype=float)
    if x0.shape != (spec.state_dim,):
        raise ConfigurationError(f"--x0 needs {spec.state_dim} values", module="cli", operation="simulate")
    _check_index("--u-index", args.u_index, len(spec.u_set))
    _check_index("--v-index", args.v_index, len(spec.v_set))
    grid = TimeGrid(0.0, spec.horizon, args.steps or 100)
    bundles = sample_paths(spec.levy, grid, spec.brownian_dim, args.paths, args.seed)
    batch = simulate_batch(spec, bundles, x0, constant_policy(args.u_index), constant_policy(args.v_index))
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "time"] + [f"x_{i + 1}" for i in range(spec.state_dim)] + ["u_idx", "v_idx"])
        for p in range(batch.states.shape[0]):
            for k in range(grid.n_steps + 1):
                ui = int(batch.u_index[p, k]) if k < grid.n_steps else ""
                vi = int(batch.v_index[p, k]) if k < grid.n_steps else ""
                w.writerow([p, k, repr(float(grid.nodes[k]))] + [repr(float(c)) for c in batch.states[p, k]] + [ui, vi])
    report = moment_check(spec, x0, x0 + 0.1, 1000, seed=args.seed)
    _write_json(out / "moments.json", report.to_dict())
    print(f"wrote {args.paths} trajectories; moment bounds {'hold' if report.bounded else 'VIOLATED'}")
    return 0 if report.bounded else 2


def cmd_solve_bsde(args, spec, scheme, out) -> int:
    _check_index("--u-index", args.u_index, len(spec.u_set))
    _check_index("--v-index", args.v_index, len(spec.v_set))
    sg = scheme.sgrid(spec.state_dim)
    grid = _tgrid(spec, args)
    sol = solve_bsde(spec, grid, sg, constant_policy(args.u_index), constant_policy(args.v_index),
                     engine=Engine(gauss=scheme.gauss, tol=scheme.tol))
    io.write_bsde_csv(sol, out / "bsde.csv")
    io.dump_bsde(sol, out / "bsde.bin")
    _write_json(out / "summary.json", {"command": "solve-bsde", "n_steps": grid.n_steps, "nodes": sg.size,
                                       "root": _root_summary(sg, sol.y[0]),
                                       "max_abs_y": float(np.max(np.abs(sol.y)))})
    print(f"y(0, x~0) = {_root_summary(sg, sol.y[0])['value']:.10g}")
    return 0


def cmd_solve_game(args, spec, scheme, out) -> int:
    sg = scheme.sgrid(spec.state_dim)
    grid = _tgrid(spec, args)
    field_ = solve_value(spec, args.which, grid, sg, Engine(gauss=scheme.gauss, tol=scheme.tol))
    io.write_value_csv(field_, out / f"value_{args.which}.csv")
    io.dump_value(field_, out / f"value_{args.which}.bin")
    _write_json(out / "summary.json", {"command": "solve-game", "which": args.which, "n_steps": grid.n_steps,
                                       "nodes": sg.size, "root": _root_summary(sg, field_.values[0])})
    print(f"{args.which} value at (0, x~0) = {_root_summary(sg, field_.values[0])['value']:.10g}")
    return 0


def cmd_solve_pide(args, spec, scheme, out) -> int:
    sg = scheme.sgrid(spec.state_dim)
    n = args.steps or required_steps(spec, sg, spec.horizon, target=scheme.cfl)
    sol = solve_pide(spec, args.which, TimeGrid(0.0, spec.horizon, n), sg, scheme.small_jump, cfl_target=scheme.cfl)
    io.write_value_csv(sol, out / f"pide_{args.which}.csv")
    io.dump_value(sol, out / f"pide_{args.which}.bin", kind=f"pide-{args.which}")
    _write_json(out / "summary.json", {"command": "solve-pide", "which": args.which, "n_steps": n, "nodes": sg.size,
                                       "cfl": sol.cfl, "max_increment": sol.max_increment,
                                       "root": _root_summary(sg, sol.values[0])})
    print(f"{args.which} PIDE value at (0, x~0) = {_root_summary(sg, sol.values[0])['value']:.10g} (CFL {sol.cfl:.3f})")
    return 0


def cmd_verify(args, spec, scheme, out) -> int:
    only = None
    if args.only:
        only = [s.strip() for s in args.only.split(",") if s.strip()]
        unknown = sorted(set(only) - set(verify.CHECK_ORDER))
        if unknown:
            raise ConfigurationError(f"unknown checks: {unknown}", module="cli", operation="verify")
    hyp = validate_hypotheses(spec)
    if not hyp.passed and not args.force:
        results = [verify.check_hypotheses(spec, args.seed)]
        results += [verify.CheckResult(n, "skipped: hypotheses not met", None, None, None)
                    for n in verify.CHECK_ORDER[1:] if only is None or n in only]
    else:
        results = verify.run_checks(spec, scheme, args.seed, only)
    doc = spec.to_dict() if spec.coefficients.serializable else {"name": spec.name}
    manifest = verify.build_manifest(doc, scheme, args.seed, results)
    (out / "manifest.json").write_bytes(verify.manifest_bytes(manifest))
    sys.stdout.write(verify.render(manifest))
    failed = [r for r in results if r.passed is False]
    if not hyp.passed:
        return ValidationFailure.exit_code
    return 2 if failed else 0


def cmd_refine(args, spec, scheme, out) -> int:
    rows = [verify.cross_solver_rung(spec, scheme.dx * 2 ** -i, scheme.xbox, scheme.gauss, scheme.cfl)
            for i in range(args.rungs)]
    with open(out / "refine.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rung", "dx", "pide_steps", "game_steps", "cfl", "discrepancy"])
        for i, r in enumerate(rows):
            w.writerow([i, repr(r["dx"]), r["pide_steps"], r["game_steps"], repr(r["cfl"]), repr(r["discrepancy"])])
    d = [r["discrepancy"] for r in rows]
    decreasing = all(b < a or max(a, b) <= 1e-12 for a, b in zip(d, d[1:]))
    for i, r in enumerate(rows):
        print(f"rung {i}: dx={r['dx']:.4g} discrepancy={r['discrepancy']:.3e}")
    return 0 if decreasing else 2


def cmd_render(args) -> int:
    try:
        text = Path(args.manifest).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read manifest: {exc}", module="cli", operation="render") from None
    sys.stdout.write(verify.render(verify.load_manifest(text)))
    return 0


COMMANDS = {"simulate": cmd_simulate, "solve-bsde": cmd_solve_bsde, "solve-game": cmd_solve_game,
            "solve-pide": cmd_solve_pide, "verify": cmd_verify, "refine": cmd_refine}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            return cmd_render(args)
        scheme = _scheme(args)
        spec = _load(args)
        out = _prepare_out(args.out, args.force)
        return COMMANDS[args.command](args, spec, scheme, out)
    except JumpGameError as exc:
        print(f"error: {exc.describe()}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
