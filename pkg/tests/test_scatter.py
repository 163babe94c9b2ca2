import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflda.errors import DegenerateClassError, NonEstimableError
from mflda.scatter import (TIME_DEPENDENT, TIME_INDEPENDENT, between_scatter, class_means,
                           default_ridge, dump_scatter, flatten_curves, load_scatter,
                           scatter_pair, unflatten, within_scatter)


def brute_force(C, labels, phi):
    """Evaluate every curve on the grid, then form sample scatter entry by entry."""
    n, m, p = C.shape
    T = phi.shape[0]
    W = np.zeros((n, p, T))
    for i in range(n):
        for j in range(p):
            for h in range(T):
                W[i, j, h] = sum(phi[h, a] * C[i, a, j] for a in range(m))
    d = p * T
    vec = lambda w: np.array([w[j, h] for h in range(T) for j in range(p)])
    overall = sum(vec(W[i]) for i in range(n)) / n
    S_b = np.zeros((d, d))
    S_p = np.zeros((d, d))
    dof = 0
    for k in sorted(set(labels.tolist())):
        idx = [i for i in range(n) if labels[i] == k]
        mk = sum(vec(W[i]) for i in idx) / len(idx)
        S_b += len(idx) * np.outer(mk - overall, mk - overall)
        for i in idx:
            S_p += np.outer(vec(W[i]) - mk, vec(W[i]) - mk)
        dof += len(idx) - 1
    return S_b, S_p / dof


def random_instance(seed, n=6, m=3, p=2, T=3, G=2):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(n, m, p))
    labels = np.r_[np.tile(np.arange(1, G + 1), 2), rng.integers(1, G + 1, size=n - 2 * G)]
    phi = rng.uniform(size=(T, m))
    return C, labels, phi


def block_diag(blocks):
    T, p, _ = blocks.shape
    out = np.zeros((p * T, p * T))
    for h in range(T):
        out[h * p:(h + 1) * p, h * p:(h + 1) * p] = blocks[h]
    return out


class TestClassMeans:
    def test_direct_average(self):
        C = np.array([1.0, 2.0, 6.0]).reshape(3, 1, 1)
        means = class_means(C, np.array([1, 1, 1]))
        assert means.class_means[0, 0, 0] == 3.0

    def test_single_subject_per_class(self):
        C = np.random.default_rng(0).normal(size=(2, 3, 2))
        means = class_means(C, np.array([1, 2]))
        assert np.array_equal(means.class_means, C)

    def test_overall_is_weighted(self):
        C, labels, _ = random_instance(1, n=9, G=3)
        means = class_means(C, labels)
        assert means.n == 9
        assert np.allclose(means.overall, C.mean(axis=0), atol=1e-10)

    def test_empty_class(self):
        with pytest.raises(DegenerateClassError) as info:
            class_means(np.zeros((2, 1, 1)), np.array([1, 1]), classes=[1, 2])
        assert info.value.klass == 2


class TestScatter:
    def test_hand_between(self):
        C = np.array([0.0, 2.0]).reshape(2, 1, 1)
        means = class_means(C, np.array([1, 2]))
        assert between_scatter(means, np.ones((1, 1)))[0, 0] == pytest.approx(2.0)

    def test_hand_within(self):
        C = np.array([0.0, 2.0]).reshape(2, 1, 1)
        labels = np.array([1, 1])
        means = class_means(C, labels)
        assert within_scatter(C, labels, means, np.ones((1, 1)))[0, 0] == pytest.approx(2.0)

    def test_equal_means_give_zero_between(self):
        C = np.random.default_rng(0).normal(size=(2, 2, 2))
        C = np.concatenate([C, C])
        means = class_means(C, np.array([1, 1, 2, 2]))
        assert np.allclose(between_scatter(means, np.eye(2)), 0)

    def test_single_class_between_zero(self):
        C = np.random.default_rng(0).normal(size=(4, 2, 2))
        means = class_means(C, np.ones(4, dtype=int))
        assert np.allclose(between_scatter(means, np.eye(2)), 0)

    def test_identical_subjects_give_zero_within(self):
        C = np.tile(np.random.default_rng(0).normal(size=(1, 2, 2)), (3, 1, 1))
        labels = np.ones(3, dtype=int)
        assert np.allclose(within_scatter(C, labels, class_means(C, labels), np.eye(2)), 0)

    def test_all_singletons(self):
        C = np.zeros((2, 1, 1))
        labels = np.array([1, 2])
        with pytest.warns(UserWarning), pytest.raises(NonEstimableError):
            within_scatter(C, labels, class_means(C, labels), np.ones((1, 1)))

    def test_singleton_class_drops_out(self):
        C, labels, phi = random_instance(3, n=5)
        labels = np.array([1, 2, 2, 2, 2])
        with pytest.warns(UserWarning):
            S = within_scatter(C, labels, class_means(C, labels), phi)
        assert np.allclose(S, brute_force(C, labels, phi)[1])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(6, 8), st.integers(1, 3), st.integers(1, 3),
           st.integers(1, 3), st.integers(2, 3))
    def test_brute_force_oracle(self, seed, n, m, p, T, G):
        C, labels, phi = random_instance(seed, n, m, p, T, G)
        ref_b, ref_p = brute_force(C, labels, phi)
        means = class_means(C, labels)
        assert np.allclose(between_scatter(means, phi), ref_b, atol=1e-8)
        assert np.allclose(within_scatter(C, labels, means, phi), ref_p, atol=1e-8)
        # time-independent operators are the diagonal blocks of the same matrices
        ti_b = block_diag(between_scatter(means, phi, TIME_INDEPENDENT))
        ti_p = block_diag(within_scatter(C, labels, means, phi, TIME_INDEPENDENT))
        mask = block_diag(np.ones((T, p, p))).astype(bool)
        assert np.allclose(ti_b, np.where(mask, ref_b, 0), atol=1e-8)
        assert np.allclose(ti_p, np.where(mask, ref_p, 0), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([TIME_DEPENDENT, TIME_INDEPENDENT]))
    def test_symmetric_psd(self, seed, mode):
        C, labels, phi = random_instance(seed, n=7, m=3, p=3, T=2, G=3)
        pair = scatter_pair(C, labels, phi, mode)
        for which in ("between", "within"):
            S = pair.to_dense(which)
            assert np.max(np.abs(S - S.T)) <= 1e-8
            vals = np.linalg.eigvalsh(S + (pair.ridge if which == "within" else 0) * np.eye(len(S)))
            floor = pair.ridge if which == "within" else 0.0
            assert vals.min() >= floor - 1e-8 * max(1.0, np.abs(S).max())

    def test_single_time_modes_agree(self):
        C, labels, phi = random_instance(4, n=6, m=2, p=3, T=1)
        td = scatter_pair(C, labels, phi, TIME_DEPENDENT)
        ti = scatter_pair(C, labels, phi, TIME_INDEPENDENT)
        assert np.allclose(td.between, ti.to_dense("between"))
        assert np.allclose(td.within, ti.to_dense("within"))

    def test_default_ridge(self):
        S = np.diag([2.0, 4.0])
        assert default_ridge(S) == pytest.approx(3e-6)

    def test_dense_cap(self):
        C, labels, phi = random_instance(0, p=3, T=3)
        with pytest.raises(ValueError, match="time_independent"):
            scatter_pair(C, labels, phi, TIME_DEPENDENT, max_dim=8)


class TestLayout:
    def test_flatten_round_trip(self):
        X = np.arange(24.0).reshape(2, 3, 4)
        F = flatten_curves(X)
        assert F[0, 1 * 3 + 2] == X[0, 2, 1]
        assert np.array_equal(unflatten(F, 3, 4), X)

    @pytest.mark.parametrize("mode", [TIME_DEPENDENT, TIME_INDEPENDENT])
    def test_dump_round_trip(self, tmp_path, mode):
        C, labels, phi = random_instance(2, p=2, T=3)
        pair = scatter_pair(C, labels, phi, mode)
        dump_scatter(tmp_path / "s.bin", pair.within, 2, 3, mode)
        raw = (tmp_path / "s.bin").read_bytes()
        assert raw[:4] == b"MFSC" and len(raw) == 16 + 8 * pair.within.size
        S, p, T, back = load_scatter(tmp_path / "s.bin")
        assert (p, T, back) == (2, 3, mode)
        assert np.array_equal(S, pair.within)
