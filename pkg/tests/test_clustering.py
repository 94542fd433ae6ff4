import numpy as np
import pytest

from twinguard.clustering import (
    ClusterModel,
    cc_score,
    choose_n_clusters,
    fit_kmeans,
    kmeans_objective,
    knn_score,
)


def cc_score_bruteforce(model, X):
    """Double loop over centers and anomalies."""
    out = []
    for x in np.atleast_2d(X):
        base = min(np.linalg.norm(c - x) for c in model.centers)
        penalty = 0.0
        if model.eta > 0 and model.anomaly_set is not None:
            nearest = min(np.linalg.norm(x - a) for a in model.anomaly_set)
            penalty = model.eta / (nearest + model.zeta)
        out.append(base + penalty)
    return np.asarray(out)


# ------------------------------------------------------------- kmeans
def test_kmeans_exact_two_point_separation():
    X = np.array([[0.0], [0.0], [10.0], [10.0]])
    centers = fit_kmeans(X, 2, seed=0)
    assert sorted(centers.ravel().tolist()) == [0.0, 10.0]


def test_kmeans_single_cluster_is_mean():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 3))
    centers = fit_kmeans(X, 1, seed=0)
    assert np.allclose(centers[0], X.mean(axis=0), atol=1e-9)


def test_kmeans_three_blobs():
    rng = np.random.default_rng(1)
    means = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    X = np.vstack([rng.normal(m, 0.5, size=(100, 2)) for m in means])
    centers = fit_kmeans(X, 3, seed=2)
    for m in means:
        nearest = np.linalg.norm(centers - m, axis=1).min()
        assert nearest < 3 * 0.5


def test_kmeans_deterministic_per_seed():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 4))
    a = fit_kmeans(X, 8, seed=5)
    b = fit_kmeans(X, 8, seed=5)
    assert np.array_equal(a, b)


def test_kmeans_rejects_too_many_clusters():
    with pytest.raises(ValueError):
        fit_kmeans(np.zeros((3, 2)), 4)


def test_kmeans_objective_nonincreasing():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 3))
    # re-run Lloyd manually, tracking the objective per iteration
    from twinguard.clustering import _kmeans_pp_init, _pairwise_sq

    centers = _kmeans_pp_init(X, 6, np.random.default_rng(0))
    objectives = [kmeans_objective(X, centers)]
    for _ in range(20):
        assign = _pairwise_sq(X, centers).argmin(axis=1)
        for j in range(6):
            if (assign == j).any():
                centers[j] = X[assign == j].mean(axis=0)
        objectives.append(kmeans_objective(X, centers))
    assert all(b <= a + 1e-9 for a, b in zip(objectives, objectives[1:]))


# ------------------------------------------------------------- cc score
def test_cc_score_plain_distance():
    model = ClusterModel(centers=[[0.0, 0.0]], eta=0.0)
    assert cc_score(model, [[3.0, 4.0]])[0] == pytest.approx(5.0)


def test_cc_score_on_labeled_anomaly():
    model = ClusterModel(
        centers=[[0.0, 0.0]], eta=0.15, zeta=0.001, anomaly_set=[[3.0, 4.0]]
    )
    assert cc_score(model, [[3.0, 4.0]])[0] == pytest.approx(5.0 + 0.15 / 0.001)


def test_cc_score_center_coincidence():
    model = ClusterModel(
        centers=[[1.0, 1.0]], eta=0.15, zeta=0.001, anomaly_set=[[1000.0, 1000.0]]
    )
    score = cc_score(model, [[1.0, 1.0]])[0]
    assert 0.0 < score < 1e-3  # tiny positive penalty only


def test_cc_score_matches_bruteforce_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        model = ClusterModel(
            centers=rng.normal(size=(rng.integers(1, 10), 4)),
            eta=float(rng.uniform(0, 0.5)),
            zeta=float(rng.uniform(1e-3, 1e-1)),
            anomaly_set=rng.normal(size=(rng.integers(1, 6), 4)),
        )
        X = rng.normal(size=(30, 4))
        assert np.allclose(cc_score(model, X), cc_score_bruteforce(model, X), atol=1e-12)


def test_cc_eta_zero_reduction_exact():
    rng = np.random.default_rng(6)
    centers = rng.normal(size=(8, 3))
    X = rng.normal(size=(50, 3))
    with_anomalies = ClusterModel(centers=centers, eta=0.0, anomaly_set=rng.normal(size=(5, 3)))
    plain = ClusterModel(centers=centers, eta=0.0)
    assert np.array_equal(cc_score(with_anomalies, X), cc_score(plain, X))


def test_cc_penalty_monotonicity():
    centers = np.array([[0.0, 0.0]])
    x = np.array([[1.0, 0.0]])
    scores = []
    for eta in (0.0, 0.1, 0.2, 0.5):
        m = ClusterModel(centers=centers, eta=eta, zeta=0.01, anomaly_set=[[2.0, 0.0]])
        scores.append(cc_score(m, x)[0])
    assert all(b >= a for a, b in zip(scores, scores[1:]))
    # farther anomaly -> lower score
    near = ClusterModel(centers=centers, eta=0.2, zeta=0.01, anomaly_set=[[1.1, 0.0]])
    far = ClusterModel(centers=centers, eta=0.2, zeta=0.01, anomaly_set=[[9.0, 0.0]])
    assert cc_score(near, x)[0] > cc_score(far, x)[0]


def test_cluster_model_validation():
    with pytest.raises(ValueError):
        ClusterModel(centers=[[np.inf, 0.0]])
    with pytest.raises(ValueError):
        ClusterModel(centers=[[0.0]], zeta=0.0)
    with pytest.raises(ValueError):
        ClusterModel(centers=[[0.0]], eta=-1.0)


def test_cluster_model_json_roundtrip():
    model = ClusterModel(centers=[[1.0, 2.0], [3.0, 4.0]], eta=0.15, zeta=0.001,
                         anomaly_set=[[5.0, 6.0]])
    back = ClusterModel.from_json(model.to_json())
    assert np.array_equal(back.centers, model.centers)
    assert np.array_equal(back.anomaly_set, model.anomaly_set)
    assert back.eta == model.eta and back.zeta == model.zeta


# ------------------------------------------------------------- knn
def test_knn_zero_for_training_point():
    train = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert knn_score(train, [[1.0, 1.0]], k=1)[0] == 0.0


def test_knn_single_point():
    assert knn_score([[0.0, 0.0]], [[1.0, 1.0]], k=1)[0] == pytest.approx(np.sqrt(2.0))


def test_knn_k_equals_n_matches_exhaustive():
    rng = np.random.default_rng(7)
    train = rng.normal(size=(40, 3))
    X = rng.normal(size=(10, 3))
    got = knn_score(train, X, k=40)
    expected = np.array([np.mean([np.linalg.norm(x - t) for t in train]) for x in X])
    assert np.allclose(got, expected, atol=1e-10)


def test_knn_rejects_large_k():
    with pytest.raises(ValueError):
        knn_score(np.zeros((3, 2)), np.zeros((1, 2)), k=4)


# ------------------------------------------------------------- selection
def test_choose_n_clusters_single_candidate():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 2))
    best, trace = choose_n_clusters(X, [4], evaluate=lambda c: 1.0)
    assert best == 4 and len(trace) == 1


def test_choose_n_clusters_prefers_higher_score():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(100, 2))
    best, trace = choose_n_clusters(X, [2, 8, 32], evaluate=lambda c: float(len(c) == 8))
    assert best == 8
    assert [t["n_clusters"] for t in trace] == [2, 8, 32]


def test_choose_n_clusters_tie_break_earliest():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(100, 2))
    best, _ = choose_n_clusters(X, [2, 8], evaluate=lambda c: 0.5)
    assert best == 2


def test_choose_n_clusters_deterministic():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(200, 2))

    def evaluate(centers):
        return -kmeans_objective(X, centers)

    a = choose_n_clusters(X, [2, 4, 8], evaluate, seed=3)
    b = choose_n_clusters(X, [2, 4, 8], evaluate, seed=3)
    assert a == b
