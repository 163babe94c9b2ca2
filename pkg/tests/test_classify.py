import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from mflda.classify import (OVERALL, TIMEWISE, Centroids, DiscriminantScores, class_centroids,
                            ks_separation, majority_vote, nearest_centroid, project,
                            write_predictions_csv, write_scores_csv)
from mflda.errors import DegenerateClassError, InsufficientDataError
from mflda.model import fit, load_classifier, save_classifier
from mflda.scatter import TIME_DEPENDENT, TIME_INDEPENDENT
from mflda.simgen import SimConfig, generate


def scores(arr, ids=None):
    arr = np.asarray(arr, dtype=float)
    return DiscriminantScores(arr, tuple(ids) if ids is not None else tuple(range(arr.shape[0])))


class TestProject:
    def test_zero_discriminant(self):
        X = np.random.default_rng(0).normal(size=(4, 3, 5))
        assert not np.any(project(X, np.zeros((3, 5))).scores)

    def test_indicator(self):
        X = np.random.default_rng(1).normal(size=(4, 3, 5))
        G = np.zeros((3, 5))
        G[1] = 1.0
        assert np.array_equal(project(X, G).scores[:, 0], X[:, 1])

    def test_hand_product(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(3, 2, 2))
        G = rng.normal(size=(2, 2))
        z = project(X, G).scores[:, 0]
        for i in range(3):
            for t in range(2):
                ref = X[i, 0, t] * G[0, t] + X[i, 1, t] * G[1, t]
                assert abs(z[i, t] - ref) <= 1e-12

    def test_linear(self):
        rng = np.random.default_rng(3)
        X, Y = rng.normal(size=(2, 5, 4, 6))
        G = rng.normal(size=(2, 4, 6))
        lhs = project(2 * X - Y, G).scores
        rhs = 2 * project(X, G).scores - project(Y, G).scores
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            project(np.zeros((2, 3, 4)), np.zeros((3, 5)))


class TestCentroids:
    def test_class_means(self):
        rng = np.random.default_rng(4)
        s = scores(rng.normal(size=(9, 2, 5)))
        labels = np.repeat([1, 2, 3], 3)
        c = class_centroids(s, labels)
        for g, k in enumerate([1, 2, 3]):
            assert np.max(np.abs(c.means[g] - s.scores[labels == k].mean(axis=0))) <= 1e-10

    def test_empty_class(self):
        with pytest.raises(DegenerateClassError):
            class_centroids(scores(np.zeros((2, 1, 1))), [1, 1], classes=[1, 2])


def toy_centroids(values, T=1):
    vals = np.asarray(values, dtype=float)
    return Centroids(np.arange(1, vals.size + 1), np.repeat(vals[:, None, None], T, axis=2))


class TestNearestCentroid:
    def test_one_dimensional(self):
        pred = nearest_centroid(scores([[[1.0]]]), toy_centroids([0.0, 4.0]))
        assert pred[0].predicted == 1
        assert pred[0].margin == pytest.approx(2.0)

    def test_equal_to_centroid(self):
        cents = Centroids(np.array([1, 2, 3]), np.random.default_rng(5).normal(size=(3, 2, 4)))
        pred = nearest_centroid(scores(cents.means[1:2]), cents)
        assert pred[0].predicted == 2

    def test_tie_goes_low(self):
        for mode in (OVERALL, TIMEWISE):
            pred = nearest_centroid(scores([[[2.0, 2.0]]]), toy_centroids([0.0, 4.0], T=2), mode)
            assert pred[0].predicted == 1

    def test_timewise_vote(self):
        cents = Centroids(np.array([1, 2]), np.array([[[0.0, 0.0, 0.0]], [[4.0, 4.0, 4.0]]]))
        pred = nearest_centroid(scores([[[3.9, 3.9, 0.1]]]), cents, TIMEWISE)
        assert pred[0].predicted == 2
        assert pred[0].votes == (2, 2, 1)
        assert pred[0].margin == pytest.approx(2 / 3)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            nearest_centroid(scores([[[1.0]]]), toy_centroids([0.0, 1.0]), "median")

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=(6, 2, 3))
        cents = Centroids(np.array([1, 2, 3]), rng.normal(size=(3, 2, 3)))
        for mode in (OVERALL, TIMEWISE):
            a = [p.predicted for p in nearest_centroid(scores(s), cents, mode)]
            b = [p.predicted for p in nearest_centroid(scores(c * s), Centroids(cents.classes, c * cents.means),
                                                        mode)]
            assert a == b

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=(8, 1, 4))
        cents = Centroids(np.array([1, 2]), rng.normal(size=(2, 1, 4)))
        perm = rng.permutation(8)
        a = nearest_centroid(scores(s), cents)
        b = nearest_centroid(scores(s[perm], perm), cents)
        assert [a[i].predicted for i in perm] == [p.predicted for p in b]
        assert [p.subject_id for p in b] == list(perm)


class TestMajorityVote:
    @pytest.mark.parametrize("votes,expected", [((1, 1, 2), 1), ((1, 2), 1), ((3, 3, 3), 3),
                                                ((3, 2, 2, 3), 2)])
    def test_examples(self, votes, expected):
        assert majority_vote(votes) == expected

    def test_empty(self):
        with pytest.raises(ValueError):
            majority_vote([])


class TestKs:
    def test_identical(self):
        D, p = ks_separation([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert D == 0 and p == pytest.approx(1.0)

    def test_disjoint(self):
        assert ks_separation(np.zeros(4), np.ones(4))[0] == 1.0

    def test_shifted(self):
        assert ks_separation([1, 2, 3], [2, 3, 4])[0] == pytest.approx(1 / 3)

    def test_too_small(self):
        with pytest.raises(InsufficientDataError):
            ks_separation([1.0], [1.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 60), st.integers(2, 60), st.floats(-1, 1))
    def test_against_scipy(self, seed, na, nb, shift):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=na), rng.normal(shift, 1, size=nb)
        D, p = ks_separation(a, b)
        assert D == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)
        assert p == pytest.approx(special.kolmogorov(np.sqrt(na * nb / (na + nb)) * D), abs=1e-10)

    def test_flattens_matrices(self):
        rng = np.random.default_rng(6)
        a, b = rng.normal(size=(5, 4)), rng.normal(size=(3, 4))
        assert ks_separation(a, b) == ks_separation(a.ravel(), b.ravel())

    def test_null_calibration(self):
        rng = np.random.default_rng(7)
        ok = sum(ks_separation(rng.normal(size=400), rng.normal(size=400))[1] > 0.05 for _ in range(100))
        assert ok >= 90


class TestResubstitution:
    @pytest.mark.parametrize("mode", [TIME_DEPENDENT, TIME_INDEPENDENT])
    def test_separable_training_data(self, mode):
        X, labels, _ = generate(SimConfig(n_per_group=(15, 15), p=20, T=10, sigma=0.5, seed=1))
        model = fit(X, labels, 0.0, mode)
        assert np.array_equal(model.predict_labels(X), labels)

    def test_saved_classifier_predicts_the_same(self, tmp_path):
        X, labels, _ = generate(SimConfig(n_per_group=(10, 12, 11), p=15, T=8, sigma=5.0, seed=2))
        model = fit(X, labels, 0.0)
        save_classifier(tmp_path / "m.json", model.classifier(), {"note": 1})
        clf, extra = load_classifier(tmp_path / "m.json")
        assert extra == {"note": 1}
        assert [p.predicted for p in clf.predict(X)] == model.predict_labels(X).tolist()
        assert np.array_equal(clf.scores(X).scores, model.scores(X).scores)


class TestWriters:
    def test_predictions(self, tmp_path):
        preds = nearest_centroid(scores([[[1.0]], [[3.5]]], ["a", "b"]), toy_centroids([0.0, 4.0]))
        write_predictions_csv(tmp_path / "p.csv", preds, [1, 2])
        assert (tmp_path / "p.csv").read_bytes() == b"subject_id,predicted,true,margin\na,1,1,2\nb,2,2,3\n"

    def test_scores(self, tmp_path):
        write_scores_csv(tmp_path / "s.csv", scores(np.arange(4.0).reshape(1, 2, 2), ["x"]), [0.0, 0.5])
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines == ["subject_id,component,time,score", "x,1,0,0", "x,1,0.5,1", "x,2,0,2",
                         "x,2,0.5,3"]
