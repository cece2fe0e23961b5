"""Acceptance criteria, one test each, at the stated tolerances.

Each test records a one-line verdict in ``VERDICTS``; ``conftest.py`` prints
them at the end of the session so ``pytest -v`` output carries a PASS/FAIL
line per criterion.
"""

import json

import numpy as np
import pytest

from jumpgame import bsde, game, oracle, pide, verify
from jumpgame.cli import main
from jumpgame.grids import StateGrid
from jumpgame.kernel import Engine
from jumpgame.levy_paths import TimeGrid
from jumpgame.problem import SCENARIOS, load_problem, make_spec, validate_hypotheses

VERDICTS = {}
PARAMS = verify.SchemeParams()


def record(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    VERDICTS[number] = line
    print(line)
    assert ok, line


def test_01_comparison_random_pairs():
    rng = np.random.default_rng(20260101)
    roots = np.array([[-0.8], [-0.2], [0.0], [0.5], [1.1]])
    worst, statuses = np.inf, {}
    for i in range(200):
        spec, prime = verify.random_comparison_pair(rng)
        assert validate_hypotheses(spec).passed and validate_hypotheses(prime).passed
        rep = bsde.comparison_check(spec, prime, verify.tree_grid(spec, 2), roots, engine=Engine("tree", 3), seed=i)
        statuses[rep.status] = statuses.get(rep.status, 0) + 1
        if rep.min_difference is not None:
            worst = min(worst, rep.min_difference)
    violations = statuses.get("fail", 0)
    ok = violations == 0 and statuses.get("pass", 0) == 200
    record(1, "comparison on 200 random pairs (tree oracle)", ok,
           f"violations={violations}, statuses={statuses}, min(y - y')={worst:.3e} (bound -1e-10)")


def test_02_stability_random_instances():
    rng = np.random.default_rng(20260202)
    roots = np.array([[-0.5], [0.0], [0.6]])
    worst, failures = 0.0, 0
    for _ in range(100):
        spec, xi1, xi2, phi1, phi2 = verify.random_stability_instance(rng)
        grid = verify.tree_grid(spec, 3)
        rep = bsde.stability_check(spec, grid, roots, xi1, xi2, phi1, phi2,
                                   beta=bsde.stability_threshold(spec.lipschitz_C), slack=10 * grid.delta)
        worst = max(worst, rep.worst_ratio / (1 + rep.slack))
        failures += not rep.passed
    record(2, "stability estimate on 100 random 3-step instances", failures == 0,
           f"failures={failures}, worst lhs/(rhs(1+10 delta))={worst:.3e}")


def test_03_dynamic_programming():
    tree_worst, grid_rows, ok = 0.0, [], True
    for name in SCENARIOS:
        spec = load_problem(name)
        t = verify.check_dpp_tree(spec, PARAMS)
        tree_worst = max(tree_worst, t.statistic)
        ok &= t.passed
        g = verify.check_dpp_grid(spec, PARAMS)
        ok &= g.passed
        for which in ("lower", "upper"):
            ladder = [r["discrepancy"] for r in g.details[which]["ladder"]]
            grid_rows.append(f"{name}/{which}: " + " > ".join(f"{d:.2e}" for d in ladder))
    record(3, "DPP exact on tree, grid ladder monotone on every scenario", ok,
           f"tree max={tree_worst:.1e}; " + "; ".join(grid_rows))


def test_04_regularity():
    ok, parts = True, []
    for name in SCENARIOS:
        r = verify.check_regularity(load_problem(name), PARAMS)
        alpha = r.details["fine"]["holder_exponent"]
        ok &= r.statistic <= 0.10
        if name in ("separated_drift", "jump_heavy"):
            ok &= alpha is not None and alpha >= 0.45
        parts.append(f"{name}: dLip={r.statistic:.1e}, alpha={'-' if alpha is None else f'{alpha:.3f}'}")
    record(4, "Lipschitz ratio stable within 10%, Holder exponent >= 0.45", ok, "; ".join(parts))


def test_05_determinism():
    spec = load_problem("separated_drift")
    r = verify.check_determinism(spec, PARAMS, seed=0)
    d = r.details
    ok = d["max_swap_change"] == 0.0 and d["agree"] and d["n_paths"] == 10_000 and d["negative_control_detected"]
    record(5, "segment swap invariant, disjoint histories agree, negative control caught", ok,
           f"max|dJ|={d['max_swap_change']}, |J1-J2|/se={r.statistic:.2f} (bound 3), "
           f"negative control |dJ|={d['negative_control_change']:.3e}")


def test_06_isaacs():
    sep = verify.check_isaacs(load_problem("separated_drift"), PARAMS)
    bil = verify.check_isaacs(load_problem("bilinear_gap"), PARAMS)
    gap_sep = sep.details["gap"]["max_gap"]
    gap_bil = bil.details["gap"]["max_gap"]
    ok = (gap_sep <= 1e-12 and sep.details["sup_lower_minus_upper"] <= 1e-10
          and gap_bil > 1e-12 and bil.details["min_upper_minus_lower"] >= -1e-12)
    record(6, "Isaacs gap and lower/upper values", ok,
           f"separated_drift gap={gap_sep:.1e}, |W-U|={sep.details['sup_lower_minus_upper']:.1e}; "
           f"bilinear_gap gap={gap_bil:.3f}, min(U-W)={bil.details['min_upper_minus_lower']:.1e}, "
           f"max(U-W)={bil.details['sup_lower_minus_upper']:.3f}")


def test_07_cross_solver():
    spec = load_problem("separated_drift")
    assert PARAMS.dx == pytest.approx(0.05)
    r = verify.check_cross_solver(spec, PARAMS)
    d = [row["discrepancy"] for row in r.details["rungs"]]
    ok = d[0] <= 5e-2 and d[1] < d[0]
    record(7, "PIDE versus game value", ok, f"dx=0.05: {d[0]:.3e} (bound 5e-2); dx=0.025: {d[1]:.3e}")


def test_08_markov_identity():
    worst = 0.0
    for name in SCENARIOS:
        worst = max(worst, verify.check_markov(load_problem(name), PARAMS).statistic)
    rng = np.random.default_rng(8)
    for _ in range(20):
        spec, _ = verify.random_affine_spec(rng)
        xs = rng.uniform(-1, 1, (2, 1))
        labels = rng.integers(0, 2, 32)
        rep = bsde.markov_identity_check(spec, verify.tree_grid(spec, 3), xs, labels, engine=Engine("tree", 3))
        worst = max(worst, rep.discrepancy)
    record(8, "Markov identity, two-atom partition, tree mode", worst <= 1e-12, f"max discrepancy={worst:.1e}")


def test_09_scheme_soundness():
    mono = 0.0
    for name in SCENARIOS:
        worst, _ = verify.pide_monotonicity(load_problem(name), PARAMS.sgrid(), n_pairs=100, seed=9)
        mono = max(mono, worst)
    off_grid = make_spec(b=lambda t, x, u, v: 0.3 + 0.1 * x, sigma=lambda t, x, u, v: np.full((len(x), 1, 1), 0.3),
                         gamma=lambda t, x, u, v, e: 0.13 * e[0] + 0 * x,
                         f=lambda t, x, y, z, k, u, v: 0.2 * y + 0.3 * z[:, 0] + 0.5 * k,
                         l=lambda x, e: 0.5 + 0 * x[:, 0], atoms=[(1.0, 1.0), (-1.0, 0.5)], C=2.0)
    errors, order = verify.hamiltonian_consistency(off_grid)
    leaf = max(abs(oracle.leaf_probability_sum(load_problem(n), verify.tree_grid(load_problem(n), 6), 3) - 1.0)
               for n in SCENARIOS)
    ok = mono <= 1e-12 and order >= verify.CONSISTENCY_ORDER and leaf <= 1e-14
    record(9, "monotone one-step PIDE, second-order Hamiltonian, leaf mass conserved", ok,
           f"monotonicity violation={mono:.1e}; consistency errors="
           + ", ".join(f"{e:.2e}" for e in errors) + f" (order {order:.2f}); |leaf mass - 1|={leaf:.1e}")


def test_10_reproducible_manifest(tmp_path):
    payloads = []
    for run in ("a", "b"):
        code = main(["verify", "--problem", "separated_drift", "--out", str(tmp_path / run), "--seed", "7"])
        manifest = json.loads((tmp_path / run / "manifest.json").read_text())
        payloads.append(verify.payload_bytes(manifest))
        assert code == 0
    record(10, "verify payload byte-identical across repeated runs", payloads[0] == payloads[1],
           f"payload bytes={len(payloads[0])}, identical={payloads[0] == payloads[1]}")
