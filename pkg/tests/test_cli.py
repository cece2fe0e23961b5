import csv
import json

import pytest

from jumpgame import verify
from jumpgame.cli import main
from jumpgame.problem import scenario_document


def run(*argv):
    return main([str(a) for a in argv])


def test_verify_zero_dynamics_passes(tmp_path, capsys):
    assert run("verify", "--problem", "zero_dynamics", "--out", tmp_path, "--mc-paths", 2000) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["payload"]["all_passed"]
    assert [c["name"] for c in manifest["payload"]["checks"]] == list(verify.CHECK_ORDER)
    assert "0 failed" in capsys.readouterr().out


def test_verify_decreasing_in_k_exits_2(tmp_path):
    doc = scenario_document("separated_drift")
    doc["coefficients"]["params"]["driver"] = {"k": -1.0}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert run("verify", "--problem", path, "--out", tmp_path / "out") == 2
    payload = json.loads((tmp_path / "out" / "manifest.json").read_text())["payload"]
    hyp = payload["checks"][0]
    assert hyp["name"] == "hypotheses" and hyp["passed"] is False
    assert hyp["witness"]["failed"] == ["driver-monotone-in-k"]


def test_refine_column_decreases(tmp_path):
    assert run("refine", "--problem", "separated_drift", "--out", tmp_path, "--xnodes", 41) == 0
    rows = list(csv.DictReader(open(tmp_path / "refine.csv")))
    d = [float(r["discrepancy"]) for r in rows]
    assert len(d) == 3 and d[0] > d[1] > d[2]


@pytest.mark.parametrize("command,files", [
    (["simulate", "--paths", "2", "--steps", "10"], {"trajectories.csv", "moments.json"}),
    (["solve-bsde", "--xnodes", "21"], {"bsde.csv", "bsde.bin", "summary.json"}),
    (["solve-game", "--which", "upper", "--xnodes", "21"], {"value_upper.csv", "value_upper.bin", "summary.json"}),
    (["solve-pide", "--xnodes", "21"], {"pide_lower.csv", "pide_lower.bin", "summary.json"}),
])
def test_solver_commands_write_artifacts(tmp_path, command, files):
    assert run(*command, "--problem", "separated_drift", "--out", tmp_path) == 0
    assert {p.name for p in tmp_path.iterdir()} == files


def test_outputs_are_reproducible(tmp_path):
    for d in ("a", "b"):
        assert run("solve-game", "--problem", "jump_heavy", "--out", tmp_path / d, "--xnodes", 21) == 0
    for name in ("value_lower.csv", "value_lower.bin", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_configuration_errors(tmp_path, capsys):
    assert run("solve-pide", "--problem", "separated_drift", "--out", tmp_path / "p", "--steps", 3) == 1
    assert "required_steps" in capsys.readouterr().err
    assert run("solve-game", "--problem", "no_such_scenario", "--out", tmp_path / "q") == 1
    assert run("solve-game", "--problem", "separated_drift", "--out", tmp_path / "r", "--cfl", 1.5) == 1
    (tmp_path / "full").mkdir()
    (tmp_path / "full" / "x").write_text("")
    assert run("solve-game", "--problem", "separated_drift", "--out", tmp_path / "full") == 1
    with pytest.raises(SystemExit) as info:
        run("solve-game", "--problem", "separated_drift")
    assert info.value.code == 1


def _manifest(passed):
    res = [verify.CheckResult("stability", "a-priori estimate", 0.1, 1.0, True),
           verify.CheckResult("comparison", "comparison principle", -0.5, -1e-10, passed, {"step": 1, "node": 4})]
    return verify.build_manifest({"name": "t"}, verify.SchemeParams(), 0, res, timestamp="t0")


def test_render_all_pass_and_failure(tmp_path, capsys):
    (tmp_path / "ok.json").write_bytes(verify.manifest_bytes(_manifest(True)))
    assert run("render", tmp_path / "ok.json") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 2
    (tmp_path / "bad.json").write_bytes(verify.manifest_bytes(_manifest(False)))
    assert run("render", tmp_path / "bad.json") == 0
    out = capsys.readouterr().out
    fail_lines = [l for l in out.splitlines() if "FAIL" in l]
    assert any("comparison principle" in l for l in fail_lines)
    assert any('"node": 4' in l for l in fail_lines)


@pytest.mark.parametrize("text", ["", "{}", "[]", '{"payload": {"checks": []}}', '{"payload": {"checks": [{}]}}'])
def test_render_rejects_malformed(tmp_path, text):
    (tmp_path / "m.json").write_text(text)
    assert run("render", tmp_path / "m.json") == 1
