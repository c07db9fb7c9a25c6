import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlgp.geometry import (
    coordinate_order,
    maxmin_order,
    nearest_m_any,
    nearest_m_any_all,
    nearest_m_previous,
    nearest_m_previous_all,
)
from vlgp.validation import check_coords


def brute_nearest(X, target, candidates, m):
    cand = np.asarray(candidates)
    dist = np.linalg.norm(X[cand] - X[target], axis=1)
    order = sorted(range(len(cand)), key=lambda k: (dist[k], cand[k]))
    return cand[order][:m]


class TestCoordinateOrder:
    def test_sorts_ascending(self):
        o = coordinate_order([0.9, 0.1, 0.5])
        assert o.perm.tolist() == [1, 2, 0]

    def test_singleton(self):
        assert coordinate_order([0.0]).perm.tolist() == [0]

    def test_near_tie_keeps_input_order(self):
        o = coordinate_order([0.3, 0.3 + 1e-12])
        assert o.perm.tolist() == [0, 1]

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            coordinate_order(np.zeros((3, 2)) + np.arange(3)[:, None])

    def test_rejects_exact_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            coordinate_order([0.3, 0.3])


class TestMaxminOrder:
    def test_1d_center_first(self):
        o = maxmin_order([0.0, 0.5, 1.0])
        assert o.perm.tolist() == [1, 0, 2]

    def test_2d_center_of_square_first(self):
        coords = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)
        o = maxmin_order(coords)
        assert o.perm[0] == 4
        assert o.perm[1] in (0, 1, 2, 3)

    @pytest.mark.parametrize("n", [23, 50, 300])
    def test_matches_greedy_brute_force(self, n, rng):
        X = rng.random((n, 2))
        perm = maxmin_order(X).perm
        centroid = X.mean(axis=0)
        expected_first = int(np.argmin(np.linalg.norm(X - centroid, axis=1)))
        assert perm[0] == expected_first
        chosen = [perm[0]]
        for k in range(1, n):
            remaining = [i for i in range(n) if i not in chosen]
            mind = [min(np.linalg.norm(X[i] - X[j]) for j in chosen) for i in remaining]
            best = max(range(len(remaining)), key=lambda a: (mind[a], -remaining[a]))
            assert perm[k] == remaining[best]
            chosen.append(remaining[best])

    def test_deterministic(self, rng):
        X = rng.random((64, 3))
        assert np.array_equal(maxmin_order(X).perm, maxmin_order(X).perm)

    def test_valid_permutation(self, rng):
        X = rng.random((40, 2))
        perm = maxmin_order(X).perm
        assert np.array_equal(np.sort(perm), np.arange(40))


class TestNearestPrevious:
    def test_first_point_has_none(self, rng):
        X = rng.random((5, 2))
        out = nearest_m_previous(X, maxmin_order(X), 0, 3)
        assert out.size == 0

    def test_1d_line(self):
        X = np.array([0.0, 0.1, 0.2, 0.3])
        o = coordinate_order(X)
        out = nearest_m_previous(X, o, 3, 5)
        assert out.tolist() == [2, 1, 0]

    def test_matches_linear_scan(self, rng):
        X = rng.random((200, 2))
        o = maxmin_order(X)
        Xo = X[o.perm]
        for i in (1, 7, 50, 199):
            for m in (1, 5, 17):
                got = nearest_m_previous(X, o, i, m)
                expected = brute_nearest(Xo, i, np.arange(i), m)
                assert np.array_equal(got, expected)

    def test_all_previous_is_sorted_by_distance(self, rng):
        X = rng.random((30, 2))
        o = maxmin_order(X)
        Xo = X[o.perm]
        i = 17
        out = nearest_m_previous(X, o, i, 30)
        assert sorted(out.tolist()) == list(range(i))
        dist = np.linalg.norm(Xo[out] - Xo[i], axis=1)
        assert np.all(np.diff(dist) >= 0)

    def test_batch_matches_single(self, rng):
        X = rng.random((120, 2))
        o = maxmin_order(X)
        allsets = nearest_m_previous_all(X[o.perm], 9)
        for i in (0, 1, 5, 60, 119):
            assert np.array_equal(allsets[i], nearest_m_previous(X, o, i, 9))


class TestNearestAny:
    def test_self_is_first(self, rng):
        X = rng.random((20, 2))
        assert nearest_m_any(X, 7, 1).tolist() == [7]

    def test_1d_all_three(self):
        X = np.array([0.0, 0.1, 0.2])
        out = nearest_m_any(X, 1, 3)
        assert set(out.tolist()) == {0, 1, 2}
        assert out[0] == 1

    def test_matches_linear_scan(self, rng):
        X = rng.random((200, 2))
        for i in (0, 13, 199):
            for m in (1, 4, 20):
                got = nearest_m_any(X, i, m)
                assert np.array_equal(got, brute_nearest(X, i, np.arange(200), m))

    def test_m_exceeding_n_errors(self, rng):
        with pytest.raises(ValueError):
            nearest_m_any(rng.random((5, 2)), 0, 6)

    def test_tree_path_matches_brute_on_grid(self):
        # grids maximize distance ties; the tree path must still resolve
        # them to the lowest index
        side = 51
        ax = (np.arange(side) + 0.5) / side
        mesh = np.meshgrid(ax, ax, indexing="ij")
        X = np.column_stack([m.ravel() for m in mesh])
        assert X.shape[0] > 2048  # forces the KD-tree path
        out_all = nearest_m_any_all(X, 10)
        rng = np.random.default_rng(0)
        for i in rng.choice(X.shape[0], 25, replace=False):
            expected = brute_nearest(X, i, np.arange(X.shape[0]), 10)
            assert np.array_equal(out_all[i], expected), f"row {i}"

    def test_all_matches_single_small(self, rng):
        X = rng.random((150, 2))
        out = nearest_m_any_all(X, 6)
        for i in (0, 75, 149):
            assert np.array_equal(out[i], nearest_m_any(X, i, 6))


class TestValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            check_coords([[0.0, np.nan]])

    def test_rejects_duplicates_2d(self):
        with pytest.raises(ValueError, match="duplicate"):
            check_coords([[0.1, 0.2], [0.3, 0.4], [0.1, 0.2]])

    def test_1d_input_reshaped(self):
        X = check_coords([3.0, 1.0])
        assert X.shape == (2, 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=10**6))
def test_orderings_are_permutations(n, seed):
    X = np.random.default_rng(seed).random((n, 2))
    perm = maxmin_order(X).perm
    assert np.array_equal(np.sort(perm), np.arange(n))
