import csv

import numpy as np
import pytest

from jumpgame import io
from jumpgame.bsde import solve_bsde
from jumpgame.errors import ParseError
from jumpgame.game import solve_value
from jumpgame.grids import StateGrid
from jumpgame.levy_paths import TimeGrid
from jumpgame.problem import load_problem


@pytest.fixture(scope="module")
def solved():
    spec = load_problem("driver_coupled")
    sg = StateGrid.uniform(-1, 1, 11)
    g = TimeGrid(0, 1, 10)
    return solve_bsde(spec, g, sg), solve_value(spec, "upper", g, sg)


def test_bsde_dump_round_trip(tmp_path, solved):
    sol, _ = solved
    io.dump_bsde(sol, tmp_path / "b.bin")
    header, arrays = io.read_dump(tmp_path / "b.bin")
    assert header["kind"] == "bsde"
    np.testing.assert_array_equal(arrays["y"], sol.y)
    np.testing.assert_array_equal(arrays["z"], sol.z)
    np.testing.assert_array_equal(arrays["k_bar"], sol.kbar)
    np.testing.assert_array_equal(header["state_axes"][0], sol.sgrid.axes[0])


def test_value_dump_and_csv(tmp_path, solved):
    _, W = solved
    io.dump_value(W, tmp_path / "v.bin")
    header, arrays = io.read_dump(tmp_path / "v.bin")
    assert header["kind"] == "value-upper"
    np.testing.assert_array_equal(arrays["values"], W.values)
    io.write_value_csv(W, tmp_path / "v.csv")
    rows = list(csv.DictReader(open(tmp_path / "v.csv")))
    assert len(rows) == W.values.size
    assert float(rows[3]["value"]) == W.values[0, 3]
    assert rows[-1]["u_idx"] == ""


def test_bsde_csv_columns(tmp_path, solved):
    sol, _ = solved
    io.write_bsde_csv(sol, tmp_path / "b.csv")
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == "step,node,x_1,y,z_1,k_bar"


def test_corrupt_dump(tmp_path, solved):
    sol, _ = solved
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + b"\0" * 8)
    with pytest.raises(ParseError):
        io.read_dump(tmp_path / "bad.bin")
    io.dump_bsde(sol, tmp_path / "b.bin")
    (tmp_path / "b2.bin").write_bytes((tmp_path / "b.bin").read_bytes() + b"\0")
    with pytest.raises(ParseError):
        io.read_dump(tmp_path / "b2.bin")
