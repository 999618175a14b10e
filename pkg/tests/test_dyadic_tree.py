import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import envelope_members, eta_hat_scan
from treeprune.core import DataError, Dataset
from treeprune.dyadic_tree import (CYCLICAL, REGULAR, CellId, CellStats, admissible_levels, axis_splits,
                                   build_index, cell_of, classify_at_level, envelope_level, envelope_stats,
                                   eta_hat, tree_levels)


def dataset(X, y=None, origin=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    return Dataset(X, np.zeros(n, int) if y is None else y, np.zeros(n, int) if origin is None else origin)


def random_data(n, d, seed, grid=None):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    if grid:  # snap some points onto dyadic boundaries
        k = n // 4
        X[:k] = np.round(X[:k] * grid) / grid
    return Dataset(X, rng.integers(0, 2, n), rng.integers(0, 2, n))


# -- build_index ----------------------------------------------------------------

def test_empty_index():
    idx = build_index(Dataset(np.zeros((0, 2)), [], []), 3, REGULAR)
    assert idx.total_counts == (0, 0)
    assert all(idx.cells(l) == {} for l in idx.levels)
    assert idx.envelope_stats(CellId(2, (1, 1))) == CellStats()


def test_single_point():
    idx = build_index(dataset([[0.1, 0.1]]), 1, REGULAR)
    assert idx.cells(1) == {CellId(1, (0, 0)): CellStats(1, 0)}


def test_rejects_out_of_cube():
    with pytest.raises(DataError):
        build_index(dataset([[1.5, 0.2]]), 1, REGULAR)


@pytest.mark.parametrize("kind", [REGULAR, CYCLICAL])
def test_stored_counts_match_scan(kind):
    data = random_data(2000, 3, 1, grid=8)
    idx = build_index(data, 6 if kind == REGULAR else 12, kind)
    for level in (0, 2, idx.max_level):
        m = 1 << axis_splits(level, 3, kind)
        for cell, st_ in list(idx.cells(level).items())[:50]:
            c = np.asarray(cell.coords)
            inside = np.all(np.minimum(np.floor(data.X * m), m - 1) == c, axis=1)
            assert st_ == CellStats(int(inside.sum()), int(data.y[inside].sum()))


@pytest.mark.parametrize("kind", [REGULAR, CYCLICAL])
def test_nestedness_and_totals(kind):
    data = random_data(500, 3, 2)
    idx = build_index(data, 9, kind)
    for level in range(idx.max_level + 1):
        _, cnt, _ = idx.occupied(level)
        assert cnt.sum() == len(data)
    for level in range(1, idx.max_level + 1):
        parent = {}
        factor = (1 << axis_splits(level, 3, kind)) // (1 << axis_splits(level - 1, 3, kind))
        coords, cnt, _ = idx.occupied(level)
        for c, k in zip(coords, cnt):
            key = tuple(c // factor)
            parent[key] = parent.get(key, 0) + k
        for cell, st_ in idx.cells(level - 1).items():
            assert parent[cell.coords] == st_.count


def test_dump_level(tmp_path):
    idx = build_index(dataset([[0.1, 0.1], [0.9, 0.9]], y=[0, 1]), 1, REGULAR)
    p = tmp_path / "lvl.csv"
    idx.dump_level(1, p)
    assert p.read_text().splitlines() == ["level,coord_0,coord_1,count,labelSum", "1,0,0,1,0", "1,1,1,1,1"]


# -- cell_of ----------------------------------------------------------------------

def test_cell_of_examples():
    idx = build_index(dataset([[0.5, 0.5]]), 2, REGULAR)
    assert cell_of((0.3, 0.7), 2, idx) == CellId(2, (1, 2))
    assert cell_of((1.0, 0.0), 1, idx) == CellId(1, (1, 0))
    assert cell_of((0.99, 0.42), 0, idx) == CellId(0, (0, 0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.integers(0, 9),
       st.sampled_from([REGULAR, CYCLICAL]))
def test_cell_of_contains_point(x, level, kind):
    idx = build_index(dataset([[0.5, 0.5, 0.5]]), 9, kind)
    cell = idx.cell_of(x, level)
    side = idx.side_lengths(level)
    lo = np.asarray(cell.coords) * side
    x = np.asarray(x)
    assert np.all(lo <= x) and np.all((x < lo + side) | (x == 1.0))


def test_cyclical_split_schedule():
    assert list(axis_splits(0, 3, CYCLICAL)) == [0, 0, 0]
    assert list(axis_splits(4, 3, CYCLICAL)) == [2, 1, 1]
    assert list(axis_splits(6, 3, CYCLICAL)) == [2, 2, 2]
    assert envelope_level(4, 3, CYCLICAL) == 6
    assert envelope_level(4, 3, REGULAR) == 4


# -- envelopes ----------------------------------------------------------------------

def test_interior_envelope_is_nine_cell_block():
    # one point at the centre of every level-2 cell, label 1 on the diagonal
    pts = [((i + 0.5) / 4, (j + 0.5) / 4) for i in range(4) for j in range(4)]
    y = [int(i == j) for i in range(4) for j in range(4)]
    idx = build_index(dataset(pts, y), 2, REGULAR)
    assert envelope_stats(idx, CellId(2, (1, 1))) == CellStats(9, 3)
    assert envelope_stats(idx, CellId(2, (0, 0))) == CellStats(4, 2)


def test_invalid_cell():
    idx = build_index(dataset([[0.5, 0.5]]), 2, REGULAR)
    with pytest.raises(ValueError):
        idx.envelope_stats(CellId(2, (4, 0)))
    with pytest.raises(ValueError):
        idx.envelope_stats(CellId(3, (0, 0)))


@pytest.mark.parametrize("kind", [REGULAR, CYCLICAL])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_envelope_matches_rectangle_scan(kind, d):
    data = random_data(600, d, 10 + d, grid=16)
    levels = tree_levels(len(data), 0, d, kind)
    idx = build_index(data, levels[-1], kind)
    rng = np.random.default_rng(d)
    Q = rng.random((60, d))
    Q[:10] = np.round(Q[:10] * 8) / 8
    for level in levels:
        cnt, lab = idx.point_envelopes(Q, level)
        for q, c, s in zip(Q, cnt, lab):
            m = envelope_members(data.X, q, level, kind)
            assert (c, s) == (m.sum(), data.y[m].sum())


# -- eta_hat and classification ----------------------------------------------------

def test_eta_hat_examples():
    idx = build_index(dataset([[0.1], [0.15], [0.2]], y=[1, 1, 0]), 3, REGULAR)
    assert eta_hat(idx, [0.12], 1) == pytest.approx(2 / 3)
    assert eta_hat(idx, [0.9], 3) == 0.0  # empty envelope
    assert classify_at_level(idx, [0.9], 3) == 0
    assert classify_at_level(idx, [0.12], 0) == 1


def test_classify_half_is_one():
    idx = build_index(dataset([[0.1], [0.2]], y=[1, 0]), 1, REGULAR)
    assert eta_hat(idx, [0.1], 0) == 0.5
    assert classify_at_level(idx, [0.1], 0) == 1


def test_classify_one_third_is_zero():
    idx = build_index(dataset([[0.1], [0.2], [0.3]], y=[0, 0, 1]), 1, REGULAR)
    assert classify_at_level(idx, [0.2], 0) == 0


def test_eta_hat_level_out_of_range():
    idx = build_index(dataset([[0.1]]), 1, REGULAR)
    with pytest.raises(ValueError):
        eta_hat(idx, [0.1], 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([REGULAR, CYCLICAL]))
def test_permutation_invariance(seed, kind):
    data = random_data(120, 2, seed % 1000, grid=4)
    perm = np.random.default_rng(seed).permutation(len(data))
    a = build_index(data, 6, kind)
    b = build_index(data.take(perm), 6, kind)
    Q = np.random.default_rng(seed + 1).random((20, 2))
    for level in range(7):
        np.testing.assert_array_equal(a.point_envelopes(Q, level)[0], b.point_envelopes(Q, level)[0])
        np.testing.assert_array_equal(a.eta_hat_batch(Q, level), b.eta_hat_batch(Q, level))
        e = a.eta_hat_batch(Q, level)
        assert ((0 <= e) & (e <= 1)).all()
        assert set(a.predict_level(Q, level)) <= {0, 1}


def test_eta_hat_batch_matches_scan():
    data = random_data(300, 2, 7)
    idx = build_index(data, 5, REGULAR)
    Q = np.random.default_rng(8).random((30, 2))
    for level in range(6):
        got = idx.eta_hat_batch(Q, level)
        want = [eta_hat_scan(data.X, data.y, q, level, REGULAR)[0] for q in Q]
        np.testing.assert_array_equal(got, want)


# -- admissible levels ---------------------------------------------------------------

def test_admissible_levels():
    assert admissible_levels(10, 6) == [0, 1, 2]
    assert admissible_levels(1, 0) == [0]
    assert admissible_levels(1000, 100)[-1] == 6
    with pytest.raises(ValueError):
        admissible_levels(0, 0)


def test_cyclical_levels_scale_with_dimension():
    assert tree_levels(1000, 100, 5, CYCLICAL)[-1] == 30
    assert tree_levels(1000, 100, 5, REGULAR)[-1] == 6


@given(st.integers(1, 10 ** 7))
def test_deepest_level_formula(n):
    deepest = admissible_levels(n, 0)[-1]
    assert 4 ** deepest >= n and (deepest == 0 or 4 ** (deepest - 1) < n)
