import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflda.errors import DataError, DomainError, EmptyModelError, InsufficientDataError
from mflda.fd_model import (FunctionalDataSet, Observation, SplineBasis, default_grid,
                            evaluate_basis, fit_subject, read_long_csv, smooth_dataset,
                            smooth_tensor, standardize, write_long_csv)


def cubic_basis():
    return SplineBasis.uniform((0.0, 10.0), 4, 3)


class TestSplineBasis:
    def test_size(self):
        basis = cubic_basis()
        assert basis.m == 8
        assert evaluate_basis(basis, [0.0, 5.0, 10.0]).shape == (3, 8)

    def test_constant_basis(self):
        basis = SplineBasis((0.0, 1.0), (), 0)
        B = evaluate_basis(basis, [0.0, 0.3, 1.0])
        assert B.shape == (3, 1)
        assert np.all(B == 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=20),
           st.integers(0, 5), st.integers(0, 4))
    def test_partition_of_unity(self, times, degree, n_interior):
        basis = SplineBasis.uniform((0.0, 10.0), n_interior, degree)
        B = evaluate_basis(basis, times)
        assert np.allclose(B.sum(axis=1), 1.0, atol=1e-12, rtol=0)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            evaluate_basis(cubic_basis(), [10.5])

    def test_bad_knots(self):
        with pytest.raises(ValueError):
            SplineBasis((0.0, 1.0), (0.5, 0.4))
        with pytest.raises(ValueError):
            SplineBasis((0.0, 1.0), (1.0,))

    def test_matches_cox_de_boor_recursion(self):
        # independent evaluation through the Cox-de Boor recursion
        basis = cubic_basis()
        t = np.linspace(0, 9.99, 17)
        knots = basis.knots

        def bspl(i, k, x):
            if k == 0:
                return 1.0 if knots[i] <= x < knots[i + 1] else 0.0
            out = 0.0
            if knots[i + k] > knots[i]:
                out += (x - knots[i]) / (knots[i + k] - knots[i]) * bspl(i, k - 1, x)
            if knots[i + k + 1] > knots[i + 1]:
                out += (knots[i + k + 1] - x) / (knots[i + k + 1] - knots[i + 1]) * bspl(i + 1, k - 1, x)
            return out

        ref = np.array([[bspl(i, 3, x) for i in range(basis.m)] for x in t])
        assert np.allclose(evaluate_basis(basis, t), ref, atol=1e-12)


class TestFitSubject:
    def test_constant(self):
        basis = cubic_basis()
        t = np.linspace(0, 10, 10)
        coef = fit_subject(basis, t, np.full(10, 5.0))
        assert np.allclose(evaluate_basis(basis, t) @ coef, 5.0, atol=1e-10)

    def test_cubic_reconstruction(self):
        basis = cubic_basis()
        t = np.linspace(0, 10, 25)
        y = 0.3 * t ** 3 - 2 * t ** 2 + t - 7
        coef = fit_subject(basis, t, y)
        assert np.max(np.abs(evaluate_basis(basis, t) @ coef[:, 0] - y)) <= 1e-8

    def test_too_few_points(self):
        basis = cubic_basis()
        t = np.linspace(0, 10, basis.m - 1)
        with pytest.raises(InsufficientDataError) as info:
            fit_subject(basis, t, t, subject_id="s7")
        assert info.value.subject_id == "s7"

    def test_missing_values_use_available_times(self):
        basis = cubic_basis()
        rng = np.random.default_rng(0)
        t = np.linspace(0, 10, 20)
        Y = rng.normal(size=(20, 2))
        Y[3, 1] = np.nan
        coef = fit_subject(basis, t, Y)
        keep = np.arange(20) != 3
        ref = np.linalg.lstsq(evaluate_basis(basis, t[keep]), Y[keep, 1], rcond=None)[0]
        assert np.allclose(coef[:, 1], ref)

    def test_least_squares_optimality(self):
        basis = cubic_basis()
        rng = np.random.default_rng(1)
        t = np.sort(rng.uniform(0, 10, 15))
        y = rng.normal(size=15)
        B = evaluate_basis(basis, t)
        coef = fit_subject(basis, t, y)[:, 0]
        rss = np.sum((y - B @ coef) ** 2)
        for _ in range(50):
            d = rng.normal(size=basis.m)
            d *= 1e-3 / np.linalg.norm(d)
            assert np.sum((y - B @ (coef + d)) ** 2) >= rss


def irregular_dataset(counts, p=2, seed=0):
    rng = np.random.default_rng(seed)
    obs = []
    for i, k in enumerate(counts):
        for t in np.sort(rng.choice(np.arange(0, 11), size=k, replace=False)):
            for j in range(p):
                obs.append(Observation(f"s{i}", float(t), j, float(rng.normal())))
    return FunctionalDataSet.from_observations(obs, p, time_domain=(0.0, 10.0))


class TestSmoothDataset:
    def test_exclusions(self):
        data = irregular_dataset([11, 9, 5, 8])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model, excl = smooth_dataset(data, cubic_basis(), 9)
        assert model.subject_ids == ("s0", "s1")
        assert [e.subject_id for e in excl] == ["s2", "s3"]

    def test_dense_has_no_exclusions(self):
        data = irregular_dataset([11, 11, 11])
        model, excl = smooth_dataset(data, cubic_basis(), 9)
        assert excl == []
        assert model.curves().shape == (3, 2, 10)

    def test_warns_at_basis_size(self):
        data = irregular_dataset([11, 11])
        with pytest.warns(UserWarning):
            smooth_dataset(data, cubic_basis(), 8)

    def test_empty_model(self):
        data = irregular_dataset([5, 6])
        with pytest.raises(EmptyModelError):
            smooth_dataset(data, cubic_basis(), 9)

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.integers(1, 11), min_size=3, max_size=8), st.integers(8, 11))
    def test_exclusion_monotone(self, counts, k):
        data = irregular_dataset(counts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                low = {e.subject_id for e in smooth_dataset(data, cubic_basis(), k)[1]}
            except EmptyModelError:
                return
            try:
                high = {e.subject_id for e in smooth_dataset(data, cubic_basis(), k + 1)[1]}
            except EmptyModelError:
                return
        assert low <= high

    def test_reconstruction_matches_fit_subject(self):
        data = irregular_dataset([10, 11, 9], p=3, seed=4)
        model, _ = smooth_dataset(data, cubic_basis(), 9)
        for i in range(model.n_subjects):
            times, table = data.subject_table(i)
            ref = evaluate_basis(cubic_basis(), times) @ fit_subject(cubic_basis(), times, table)
            assert np.allclose(model.evaluate(i, times), ref, atol=1e-10)

    def test_default_grid(self):
        assert np.array_equal(default_grid((0.0, 40.0)), np.arange(1, 41))


class TestStandardize:
    def test_sample_sd(self):
        X = np.array([1.0, 2.0, 3.0]).reshape(3, 1, 1)
        s = standardize(X)
        assert np.allclose(s.X.ravel(), [-1, 0, 1])

    def test_constant_slice_flagged(self):
        X = np.full((3, 1, 1), 4.0)
        s = standardize(X)
        assert np.all(s.X == 0)
        assert s.zero_variance.all()

    def test_moments_and_idempotence(self):
        X = np.random.default_rng(2).normal(3, 2, size=(12, 4, 5))
        once = standardize(X).X
        assert np.allclose(once.mean(axis=0), 0, atol=1e-10)
        assert np.allclose(once.std(axis=0, ddof=1), 1, atol=1e-10)
        assert np.allclose(standardize(once).X, once, atol=1e-12)

    def test_reuse_statistics(self):
        rng = np.random.default_rng(3)
        X, Y = rng.normal(size=(8, 2, 3)), rng.normal(size=(4, 2, 3))
        s = standardize(X)
        assert np.allclose(standardize(Y, s.mean, s.sd).X, (Y - s.mean) / s.sd)


class TestDataSet:
    def test_time_outside_domain(self):
        with pytest.raises(DomainError):
            FunctionalDataSet.from_observations([Observation("a", 11.0, 0, 1.0)], 1,
                                                time_domain=(0.0, 10.0))

    def test_feature_out_of_range(self):
        with pytest.raises(DataError):
            FunctionalDataSet.from_observations([Observation("a", 1.0, 3, 1.0)], 2)

    def test_immutable(self):
        data = irregular_dataset([11])
        with pytest.raises(ValueError):
            data.value[0] = 1.0

    def test_csv_round_trip(self, tmp_path):
        X = np.random.default_rng(5).normal(size=(3, 2, 4))
        data = FunctionalDataSet.from_tensor(X, [1, 2, 3, 4], np.array([1, 2, 2]),
                                             subject_ids=["a", "b", "c"],
                                             feature_names=["x", "y"], class_names=["ctl", "ibd"])
        write_long_csv(tmp_path / "d.csv", data)
        back = read_long_csv(tmp_path / "d.csv", tmp_path / "map.csv")
        assert back.subject_ids == ("a", "b", "c")
        assert back.feature_names == ("x", "y")
        assert back.class_names == ("ctl", "ibd")
        assert np.array_equal(back.labels, [1, 2, 2])
        order = np.lexsort((back.feature, back.time, back.subject))
        assert np.array_equal(back.value[order], X.transpose(0, 2, 1).ravel())
        assert (tmp_path / "map.csv").read_text() == "feature_index,feature\n0,x\n1,y\n"

    def test_smooth_tensor_identity_on_spline_space(self):
        basis = SplineBasis.uniform((1.0, 20.0), 2, 3)
        t = np.arange(1, 21, dtype=float)
        X = (2 * t - 0.1 * t ** 2)[None, None, :].repeat(2, 0)
        assert np.allclose(smooth_tensor(X, t, basis), X, atol=1e-8)
