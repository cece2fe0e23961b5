import copy
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpgame.errors import ConfigurationError, ParseError
from jumpgame.problem import (SCENARIOS, ControlSet, ProbeConfig, load_problem, make_spec, parse_problem,
                              scenario_document, serialize_problem, spec_from_dict, validate_hypotheses,
                              write_problem)


def test_canonical_scenario_coefficients():
    spec = load_problem("separated_drift")
    x = np.array([[0.3], [-1.2]])
    u, v = spec.u_set[0], spec.v_set[4]
    np.testing.assert_allclose(spec.drift(0.0, x, u, v), [[-2.0], [-2.0]])
    np.testing.assert_allclose(spec.diffusion(0.0, x, u, v), 0.3)
    np.testing.assert_allclose(spec.jump(0.0, x, u, v, np.array([1.0])), 0.2)
    np.testing.assert_allclose(spec.driver(0.0, x, np.ones(2), np.ones((2, 1)), np.ones(2), u, v), 0.0)
    np.testing.assert_allclose(spec.u_set.points[:, 0], [-1, -0.5, 0, 0.5, 1])
    # terminal is x plus a smooth |x| term
    np.testing.assert_allclose(spec.terminal(x), x[:, 0] + 0.5 * np.sqrt(1 + x[:, 0] ** 2))


def test_docs_copy_is_canonical():
    from pathlib import Path
    doc = Path(__file__).parents[1] / "docs" / "separated_drift.json"
    assert doc.read_text() == serialize_problem(load_problem("separated_drift"))


def test_missing_levy_names_pointer():
    doc = scenario_document("separated_drift")
    del doc["levy"]
    with pytest.raises(ParseError) as info:
        spec_from_dict(doc)
    assert info.value.pointer == "/levy"
    assert str(info.value).startswith("/levy")


def test_bad_value_pointer_is_nested():
    doc = scenario_document("separated_drift")
    doc["levy"]["atoms"][0]["rate"] = -1
    with pytest.raises(ParseError) as info:
        spec_from_dict(doc)
    assert info.value.pointer == "/levy/atoms/0/rate"


def test_wrong_parameter_shape():
    doc = scenario_document("separated_drift")
    doc["coefficients"]["params"]["drift"]["u"] = [[1.0, 2.0]]
    with pytest.raises(ParseError) as info:
        spec_from_dict(doc)
    assert "/coefficients/params/drift/u" in str(info.value)


def test_unknown_family():
    doc = scenario_document("separated_drift")
    doc["coefficients"]["family"] = "nope"
    with pytest.raises(ConfigurationError):
        spec_from_dict(doc)


@pytest.mark.parametrize("name", SCENARIOS)
def test_round_trip(name, tmp_path):
    spec = load_problem(name)
    path = tmp_path / f"{name}.json"
    write_problem(spec, path)
    again = parse_problem(path)
    assert again == spec
    assert serialize_problem(again) == path.read_text()


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6, unique=True),
       st.floats(0.05, 2.0), st.floats(0.0, 1.0))
def test_round_trip_random_parameters(points, rate, slope):
    doc = copy.deepcopy(scenario_document("separated_drift"))
    doc["controls"]["U"] = [[p] for p in points]
    doc["levy"]["atoms"][0]["rate"] = rate
    doc["coefficients"]["params"]["drift"]["u"] = [[slope]]
    spec = spec_from_dict(doc)
    text = serialize_problem(spec)
    assert spec_from_dict(json.loads(text)) == spec
    assert json.loads(text) == json.loads(serialize_problem(spec_from_dict(json.loads(text))))


def test_control_set_rejects_duplicates():
    with pytest.raises(ConfigurationError):
        ControlSet(np.array([[0.0], [0.0]]), "U")


def test_trivial_spec_passes_all_clauses():
    spec = make_spec(sigma=lambda t, x, u, v: np.ones((len(x), 1, 1)), phi=lambda x: x[:, 0], atoms=[(1.0, 1.0)])
    rep = validate_hypotheses(spec)
    assert rep.passed, [c.clause for c in rep.failures]


def test_decreasing_in_k_fails_monotonicity():
    spec = make_spec(f=lambda t, x, y, z, k, u, v: -k, phi=lambda x: x[:, 0], atoms=[(1.0, 1.0)])
    rep = validate_hypotheses(spec)
    assert not rep.passed
    assert [c.clause for c in rep.failures] == ["driver-monotone-in-k"]


def test_quadratic_terminal_lipschitz_witness():
    spec = make_spec(phi=lambda x: x[:, 0] ** 2, C=1.0, atoms=[(1.0, 1.0)])
    rep = validate_hypotheses(spec, ProbeConfig(box=10.0))
    clause = rep["terminal-lipschitz"]
    assert not clause.passed
    assert 19.0 <= clause.statistic <= 20.0 + 1e-9


@pytest.mark.parametrize("name", SCENARIOS)
def test_shipped_scenarios_satisfy_hypotheses(name):
    assert validate_hypotheses(load_problem(name)).passed


def test_callable_spec_not_serialisable():
    with pytest.raises(ConfigurationError):
        make_spec().to_dict()
