import numpy as np
import pytest

from mlscale.kmeans import (ClusterState, PartialSum, kmeans_fit, map_assign, read_points,
                            shuffle_reduce, write_assignments, write_centroids)


def lloyd_oracle(X, C, n_iter):
    """Textbook single-loop Lloyd with the same tie and empty-cluster rules."""
    C = C.copy()
    history = [C.copy()]
    for _ in range(n_iter):
        d = ((X[:, None, :] - C[None]) ** 2).sum(-1)
        lab = d.argmin(1)
        new = C.copy()
        for j in range(C.shape[0]):
            if (lab == j).any():
                new[j] = X[lab == j].mean(0)
        C = new
        history.append(C.copy())
    return history


def test_map_assign_examples():
    P = np.array([[1.0, 2.0], [3.0, 4.0]])
    one = map_assign(P, ClusterState(np.zeros((1, 2))))
    assert len(one) == 1 and one[0].count == 2 and one[0].sum.tolist() == [4.0, 6.0]
    tie = map_assign(np.array([[0.0, 0.0]]), ClusterState(np.array([[1.0, 0.0], [-1.0, 0.0]])))
    assert [p.key for p in tie] == [0]
    at = map_assign(np.array([[0.0, 0.0], [5.0, 5.0]]),
                    ClusterState(np.array([[0.0, 0.0], [5.0, 5.0]])))
    assert [(p.key, p.count) for p in at] == [(0, 1), (1, 1)]
    with pytest.raises(ValueError):
        map_assign(np.zeros((2, 3)), ClusterState(np.zeros((1, 2))))


def test_shuffle_reduce_examples():
    prev = ClusterState(np.array([[0.0, 0.0], [9.0, 9.0]]), iteration=4)
    new = shuffle_reduce([PartialSum(0, np.array([2.0, 2.0]), 1),
                          PartialSum(0, np.array([4.0, 4.0]), 1)], prev)
    assert new.centroids[0].tolist() == [3.0, 3.0]
    assert new.centroids[1].tolist() == [9.0, 9.0]
    assert new.iteration == 5
    single = shuffle_reduce([PartialSum(1, np.array([6.0, 3.0]), 3)], prev)
    assert single.centroids[1].tolist() == [2.0, 1.0]
    with pytest.raises(ValueError):
        PartialSum(0, np.zeros(2), 0)


def test_two_blobs():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (40, 2)), rng.normal(10, 0.1, (40, 2))])
    truth = np.repeat([0, 1], 40)
    res = kmeans_fit(X, 2, n_partitions=3, seed=1)
    lab = res.labels
    assert (lab == truth).all() or (lab == 1 - truth).all()


def test_k_equals_n():
    X = np.random.default_rng(2).standard_normal((6, 3))
    res = kmeans_fit(X, 6, seed=0)
    assert res.inertia == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_matches_sequential_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((int(rng.integers(20, 80)), int(rng.integers(1, 5))))
    k = int(rng.integers(1, 6))
    for parts in (1, 2, 8):
        res = kmeans_fit(X, k, n_partitions=parts, seed=seed, max_iter=15, tol=0)
        oracle = lloyd_oracle(X, res.history[0], len(res.history) - 1)
        for got, want in zip(res.history, oracle):
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)
        inertia = res.trace.column("inertia")
        assert all(b <= a + 1e-9 for a, b in zip(inertia, inertia[1:]))


def test_partition_invariance_and_workers():
    X = np.random.default_rng(3).standard_normal((200, 4))
    a = kmeans_fit(X, 5, n_partitions=1, seed=4)
    b = kmeans_fit(X, 5, n_partitions=8, seed=4, workers=4)
    np.testing.assert_allclose(a.state.centroids, b.state.centroids, atol=1e-9)


def test_errors():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        kmeans_fit(X, 4)
    with pytest.raises(ValueError):
        kmeans_fit(X, 1, n_partitions=0)


def test_forgy_picks_distinct_points():
    X = np.arange(20.0).reshape(10, 2)
    res = kmeans_fit(X, 4, seed=3, max_iter=0)
    rows = {tuple(r) for r in res.history[0]}
    assert len(rows) == 4 and rows <= {tuple(r) for r in X}


def test_csv_io(tmp_path):
    (tmp_path / "p.csv").write_text("x,y\n0,1\n2,3\n")
    X = read_points(tmp_path / "p.csv")
    assert X.tolist() == [[0, 1], [2, 3]]
    write_centroids(tmp_path / "c.csv", ClusterState(X))
    assert read_points(tmp_path / "c.csv").tolist() == X.tolist()
    write_assignments(tmp_path / "a.csv", [1, 0])
    assert (tmp_path / "a.csv").read_text() == "index,cluster\n0,1\n1,0\n"
    (tmp_path / "bad.csv").write_text("0,1\n2\n")
    with pytest.raises(ValueError):
        read_points(tmp_path / "bad.csv")
