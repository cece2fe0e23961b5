import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpgame.errors import AlignmentError, ConfigurationError, DomainError
from jumpgame.levy_paths import (LevyMeasure, TimeGrid, compensator_integral, sample_path, sample_paths,
                                 segment_swap, stack_counts, stack_increments, write_bundles_csv)


def test_time_grid_basics():
    g = TimeGrid(0.0, 1.0, 4)
    assert g.delta == 0.25
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.index_of(0.5) == 2
    assert g.restrict(2).t0 == 0.5 and g.restrict(2).n_steps == 2
    assert g.refine().n_steps == 8
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 1.0, 3)
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 1.0, 0)


def test_measure_round_trip():
    m = LevyMeasure.from_atoms([(1.0, 2.0), (-0.5, 0.25)])
    assert m.n_atoms == 2 and m.total_rate == 2.25
    again = LevyMeasure.from_json(m.to_json())
    np.testing.assert_array_equal(again.marks, m.marks)
    np.testing.assert_array_equal(again.rates, m.rates)
    assert LevyMeasure.empty().total_rate == 0.0


def test_compensator_integral_is_weighted_sum():
    m = LevyMeasure.from_atoms([(1.0, 2.0), (-0.5, 0.25)])
    val = compensator_integral(m, lambda e: e[0] ** 2)
    assert math.isclose(val, 2.0 * 1.0 + 0.25 * 0.25)


def test_same_seed_same_path():
    m = LevyMeasure.from_atoms([(1.0, 1.0)])
    g = TimeGrid(0, 1, 50)
    assert sample_path(m, g, 2, 7, 3) == sample_path(m, g, 2, 7, 3)
    assert not sample_path(m, g, 2, 7, 3) == sample_path(m, g, 2, 8, 3)


def test_paths_independent_of_batch_layout():
    m = LevyMeasure.from_atoms([(1.0, 1.0), (0.5, 0.5)])
    g = TimeGrid(0, 1, 20)
    batch = sample_paths(m, g, 1, 6, seed=4)
    tail = sample_paths(m, g, 1, 3, seed=4, first_index=3)
    for a, b in zip(batch[3:], tail):
        assert a == b


def test_moments_of_increments_and_counts():
    m = LevyMeasure.from_atoms([(1.0, 3.0)])
    g = TimeGrid(0, 1, 10)
    bundles = sample_paths(m, g, 1, 4000, seed=1)
    dB = stack_increments(bundles)
    n = stack_counts(bundles)
    assert abs(dB.var() - g.delta) < 0.05 * g.delta
    assert abs(dB.mean()) < 4 * math.sqrt(g.delta / dB.size)
    total = n.sum(axis=(1, 2))
    assert abs(total.mean() - 3.0) < 4 * math.sqrt(3.0 / len(total))


@given(st.integers(0, 2 ** 31), st.integers(1, 4), st.integers(0, 6))
def test_segment_swap_is_involution(seed, m_steps, extra):
    g = TimeGrid(0, 1, 2 * m_steps + extra + 2)
    meas = LevyMeasure.from_atoms([(1.0, 4.0), (-1.0, 2.0)])
    b = sample_path(meas, g, 2, seed, 0)
    ell = m_steps * g.delta
    t = g.time(2 * m_steps + extra)
    once = segment_swap(b, t, ell)
    assert segment_swap(once, t, ell) == b
    # Totals are preserved and the outside of the window is untouched.
    np.testing.assert_allclose(once.brownian_increments.sum(axis=0), b.brownian_increments.sum(axis=0), atol=1e-12)
    np.testing.assert_array_equal(once.jump_counts().sum(axis=0), b.jump_counts().sum(axis=0))
    k = 2 * m_steps + extra
    np.testing.assert_array_equal(once.brownian_increments[k:], b.brownian_increments[k:])
    np.testing.assert_array_equal(once.brownian_increments[:k - 2 * m_steps], b.brownian_increments[:k - 2 * m_steps])


def test_segment_swap_errors():
    g = TimeGrid(0, 1, 10)
    b = sample_path(LevyMeasure.empty(), g, 1, 0, 0)
    with pytest.raises(AlignmentError):
        segment_swap(b, 0.5, 0.15)
    with pytest.raises(DomainError):
        segment_swap(b, 0.3, 0.2)


def test_bundle_csv(tmp_path):
    m = LevyMeasure.from_atoms([(1.0, 5.0)])
    bundles = sample_paths(m, TimeGrid(0, 1, 5), 1, 2, seed=0)
    out = tmp_path / "b.csv"
    write_bundles_csv(bundles, m, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("step,path,dB_1")
    assert len(lines) == 1 + 2 * 5
