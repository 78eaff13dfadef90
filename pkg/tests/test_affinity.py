import warnings

import numpy as np
import pytest

from spdml.affinity import (
    LabeledSpdDataset,
    affinity,
    default_nu_w,
    knn_graph_between,
    knn_graph_within,
    neighbor_lists,
)
from spdml.errors import InsufficientClassSize
from spdml.oracles import brute_knn, random_invertible, random_spd


def scalar_dataset(values, labels):
    # 1x1 SPD matrices exp(v): distances are monotone in |v_i - v_j| for both metrics
    X = np.exp(np.asarray(values, dtype=float))[:, None, None]
    return LabeledSpdDataset(X, np.asarray(labels))


def graph_from_lists(lists, p):
    G = np.zeros((p, p))
    for i, nb in enumerate(lists):
        G[i, nb] = 1
    return np.maximum(G, G.T)


def test_pair_same_label():
    d = scalar_dataset([0.0, 1.0], [1, 1])
    np.testing.assert_array_equal(knn_graph_within(d, 1), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(knn_graph_between(d, 1), np.zeros((2, 2)))


def test_pair_different_labels():
    d = scalar_dataset([0.0, 1.0], [1, 2])
    np.testing.assert_array_equal(knn_graph_between(d, 1), [[0, 1], [1, 0]])


def test_all_distinct_labels():
    d = scalar_dataset([0.0, 1.0, 2.0, 3.0], [1, 2, 3, 4])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InsufficientClassSize)
        np.testing.assert_array_equal(knn_graph_within(d, 1), np.zeros((4, 4)))


def test_insufficient_class_size_warns():
    d = scalar_dataset([0.0, 1.0, 2.0], [1, 1, 2])
    with pytest.warns(InsufficientClassSize):
        G = knn_graph_within(d, 2)
    np.testing.assert_array_equal(G, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])


def test_planted_six_points():
    # class 1 at 0, 1, 5; class 2 at 2, 2.5, 10
    d = scalar_dataset([0.0, 1.0, 5.0, 2.0, 2.5, 10.0], [1, 1, 1, 2, 2, 2])
    # hand-listed: nearest same-class neighbour of each point
    within = [[1], [0], [1], [4], [3], [4]]
    # nearest other-class neighbour
    between = [[3], [3], [4], [1], [1], [2]]
    for metric in ("airm", "stein"):
        D = d.distances(metric)
        assert brute_knn(D, d.labels, 1, True) == within
        assert brute_knn(D, d.labels, 1, False) == between
        np.testing.assert_array_equal(knn_graph_within(d, 1, metric), graph_from_lists(within, 6))
        np.testing.assert_array_equal(knn_graph_between(d, 1, metric), graph_from_lists(between, 6))


def test_brute_force_hand_enumeration_p5():
    D = np.array(
        [
            [0, 1, 4, 9, 2],
            [1, 0, 3, 5, 6],
            [4, 3, 0, 7, 8],
            [9, 5, 7, 0, 1],
            [2, 6, 8, 1, 0],
        ],
        dtype=float,
    )
    labels = [1, 1, 1, 2, 2]
    assert brute_knn(D, labels, 2, True) == [[1, 2], [0, 2], [1, 0], [4], [3]]
    assert brute_knn(D, labels, 1, False) == [[4], [3], [3], [1], [0]]


def test_four_point_affinity():
    d = scalar_dataset([0.0, 0.1, 1.0, 1.1], [1, 1, 2, 2])
    A = affinity(d, 1, 1, "airm")
    # same-class mutual pairs (0,1), (2,3); nearest cross: 0->2, 1->2, 2->1, 3->1
    expected = np.array(
        [
            [0, 1, -1, 0],
            [1, 0, -1, -1],
            [-1, -1, 0, 1],
            [0, -1, 1, 0],
        ],
        dtype=float,
    )
    np.testing.assert_array_equal(A, expected)


def test_single_class_is_nonnegative(rng):
    X = np.stack([random_spd(rng, 3) for _ in range(5)])
    d = LabeledSpdDataset(X, np.ones(5, dtype=int))
    A = affinity(d, 2, 1, "stein")
    assert np.all(A >= 0)
    np.testing.assert_array_equal(A, knn_graph_within(d, 2, "stein"))


@pytest.mark.parametrize("metric", ["airm", "stein"])
def test_agrees_with_brute_force(metric):
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = int(rng.integers(2, 12))
        n = int(rng.integers(1, 4))
        X = np.stack([random_spd(rng, n, 10.0) for _ in range(p)])
        labels = rng.integers(1, 4, p)
        d = LabeledSpdDataset(X, labels)
        D = d.distances(metric)
        for k in (1, 2, 3):
            for same in (True, False):
                assert neighbor_lists(D, labels, k, same) == brute_knn(D, labels, k, same)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InsufficientClassSize)
            Gw = knn_graph_within(d, 2, metric)
            Gb = knn_graph_between(d, 2, metric)
            A = affinity(d, 2, 2, metric)
        np.testing.assert_array_equal(Gw, graph_from_lists(brute_knn(D, labels, 2, True), p))
        np.testing.assert_array_equal(Gb, graph_from_lists(brute_knn(D, labels, 2, False), p))
        assert not np.any((Gw > 0) & (Gb > 0))
        np.testing.assert_array_equal(A, Gw - Gb)
        np.testing.assert_array_equal(A, A.T)
        assert np.all(np.diag(A) == 0)
        assert set(np.unique(A)) <= {-1.0, 0.0, 1.0}


def test_tie_break_lower_index():
    D = np.array([[0, 1, 1, 1], [1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0]], dtype=float)
    assert neighbor_lists(D, [1, 1, 1, 1], 2, True) == [[1, 2], [0, 2], [0, 1], [0, 1]]
    assert brute_knn(D, [1, 1, 1, 1], 2, True) == [[1, 2], [0, 2], [0, 1], [0, 1]]


def test_rows_have_at_least_nu_w(rng):
    X = np.stack([random_spd(rng, 3) for _ in range(12)])
    d = LabeledSpdDataset(X, np.repeat([1, 2, 3], 4))
    G = knn_graph_within(d, 3)
    assert np.all(G.sum(axis=1) >= 3)


def test_conjugation_invariance(rng):
    X = np.stack([random_spd(rng, 4) for _ in range(9)])
    labels = np.repeat([1, 2, 3], 3)
    M = random_invertible(rng, 4)
    for metric in ("airm", "stein"):
        A = affinity(LabeledSpdDataset(X, labels), 2, 2, metric)
        B = affinity(LabeledSpdDataset(M @ X @ M.T, labels), 2, 2, metric)
        np.testing.assert_array_equal(A, B)


def test_default_nu_w():
    d = scalar_dataset(np.arange(7.0), [1, 1, 1, 2, 2, 2, 2])
    assert default_nu_w(d) == 2


def test_dataset_validation():
    from spdml.errors import DimMismatch, InvalidParams

    with pytest.raises(InvalidParams):
        LabeledSpdDataset(np.ones((2, 1, 1)), [1])
    with pytest.raises(DimMismatch):
        LabeledSpdDataset(np.ones((2, 1, 2)), [1, 1])
    d = scalar_dataset([0.0, 1.0, 2.0], [1, 2, 1])
    assert d.class_sizes() == {1: 2, 2: 1}
    assert len(d.subset([0, 2])) == 2
    assert list(d.subset(slice(0, None, 2)).labels) == [1, 1]
