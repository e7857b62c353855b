import itertools
import math

import numpy as np
import pytest
from scipy import stats

from pcgscreen.errors import ConfigError, DataError
from pcgscreen.learn import (
    KernelSpec,
    compute_metrics,
    decision_to_probability,
    fit_platt,
    kernel_matrix,
    knn_predict,
    knn_predict_batch,
    load_svm_model,
    metrics_from_labels,
    save_svm_model,
    svm_decision,
    svm_predict,
    svm_train,
    wilcoxon_rank_sum,
)

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def blobs(n=100, d=5, margin=8.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    b = rng.standard_normal((n, d))
    b[:, 0] += margin
    X = np.vstack([a, b])
    y = np.array([0] * n + [1] * n)
    return X, y


def dual_objective(model, X, y):
    """Dual and primal objectives of the scaled problem, for gap checks."""
    Xs = (X - model.feature_mean) / model.feature_std
    ybin = np.where(y == 1, 1.0, -1.0)
    K = kernel_matrix(model.kernel.kind, model.gamma, model.kernel.coef0, Xs, Xs)
    # recover full alpha from the stored support set
    alpha = np.zeros(len(y))
    d = np.atleast_1d(svm_decision(model, X))
    # match support vectors back to training rows
    sv_rows = []
    used = set()
    for sv in model.support_vectors:
        for i in range(len(Xs)):
            if i not in used and np.allclose(Xs[i], sv, atol=1e-12):
                sv_rows.append(i)
                used.add(i)
                break
    alpha[sv_rows] = model.dual_coefs * ybin[sv_rows]
    quad = float(alpha * ybin @ K @ (alpha * ybin))
    dual = float(alpha.sum()) - 0.5 * quad
    xi = np.maximum(0.0, 1.0 - ybin * d)
    primal = 0.5 * quad + model.kernel.C * float(xi.sum())
    return dual, primal


class TestSvmTrain:
    def test_xor_rbf_perfect(self):
        model = svm_train(XOR_X, XOR_Y, KernelSpec(kind="rbf", C=10.0, gamma=1.0))
        np.testing.assert_array_equal(svm_predict(model, XOR_X), XOR_Y)

    def test_dual_constraints(self):
        for seed in range(5):
            X, y = blobs(30, margin=2.0, seed=seed)
            model = svm_train(X, y, KernelSpec(kind="rbf", C=1.0))
            assert np.all(np.abs(model.dual_coefs) <= 1.0 + 1e-9)
            assert abs(model.dual_coefs.sum()) < 1e-6

    def test_separable_blobs_linear_heldout(self):
        X, y = blobs(100, margin=8.0, seed=1)
        model = svm_train(X, y, KernelSpec(kind="linear", C=1.0))
        Xt, yt = blobs(50, margin=8.0, seed=2)
        assert np.mean(svm_predict(model, Xt) == yt) == 1.0

    def test_duality_gap_small(self):
        X, y = blobs(60, margin=4.0, seed=3)
        model = svm_train(X, y, KernelSpec(kind="rbf", C=1.0))
        dual, primal = dual_objective(model, X, y)
        assert primal - dual < 1e-2
        assert primal - dual >= -1e-9

    def test_objective_nonincreasing(self):
        X, y = blobs(40, margin=2.0, seed=4)
        model = svm_train(X, y, KernelSpec(kind="rbf", C=5.0),
                          track_objective=True)
        trace = np.array(model.objective_trace)
        assert len(trace) > 1
        assert np.all(np.diff(trace) <= 1e-10)

    def test_free_support_vectors_on_margin(self):
        X, y = blobs(80, margin=4.0, seed=5)
        model = svm_train(X, y, KernelSpec(kind="linear", C=1.0))
        free = np.abs(model.dual_coefs) < 1.0 - 1e-6
        if np.any(free):
            # margin support vectors sit at |decision| = 1
            Xs_back = model.support_vectors * model.feature_std + model.feature_mean
            d = np.atleast_1d(svm_decision(model, Xs_back[free]))
            np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-2)

    def test_far_point_decision_approaches_bias(self):
        X, y = blobs(40, margin=3.0, seed=6)
        model = svm_train(X, y, KernelSpec(kind="rbf", C=1.0, gamma=0.5))
        far = np.full((1, X.shape[1]), 1e9)
        assert svm_decision(model, far[0]) == pytest.approx(model.bias, abs=1e-9)

    def test_label_flip_flips_decision(self):
        X, y = blobs(30, margin=2.0, seed=7)
        probe = np.zeros(X.shape[1])
        d1 = svm_decision(svm_train(X, y, KernelSpec(kind="rbf")), probe)
        d2 = svm_decision(svm_train(X, 1 - y, KernelSpec(kind="rbf")), probe)
        assert d1 == pytest.approx(-d2, abs=1e-6)

    def test_row_permutation_invariance(self):
        X, y = blobs(50, margin=4.0, seed=8)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(y))
        m1 = svm_train(X, y, KernelSpec(kind="rbf"))
        m2 = svm_train(X[perm], y[perm], KernelSpec(kind="rbf"))
        Xt, _ = blobs(40, margin=4.0, seed=9)
        np.testing.assert_array_equal(svm_predict(m1, Xt), svm_predict(m2, Xt))

    def test_kernel_variants_train(self):
        X, y = blobs(40, margin=6.0, seed=10)
        for kind in ("linear", "rbf", "poly3", "sigmoid"):
            model = svm_train(X, y, KernelSpec(kind=kind, C=1.0))
            assert np.mean(svm_predict(model, X) == y) > 0.9

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            svm_train(np.zeros((5, 2)), np.zeros(5, dtype=int), KernelSpec())

    def test_nonfinite_rejected(self):
        X = np.zeros((4, 2))
        X[0, 0] = np.nan
        with pytest.raises(DataError):
            svm_train(X, np.array([0, 1, 0, 1]), KernelSpec())

    def test_dimension_mismatch(self):
        X, y = blobs(20, seed=11)
        model = svm_train(X, y, KernelSpec())
        with pytest.raises(DataError, match="dimension mismatch"):
            svm_decision(model, np.zeros(3))

    def test_rbf_kernel_positive_semidefinite(self, rng):
        X = rng.standard_normal((40, 6))
        K = kernel_matrix("rbf", 0.3, 0.0, X, X)
        np.testing.assert_allclose(K, K.T, atol=1e-12)
        eig = np.linalg.eigvalsh(K)
        assert eig.min() >= -1e-8

    def test_gamma_default_is_reciprocal_dim(self):
        X, y = blobs(20, d=8, seed=12)
        model = svm_train(X, y, KernelSpec(kind="rbf", gamma=None))
        assert model.gamma == pytest.approx(1.0 / 8.0)

    def test_model_round_trip(self, tmp_path):
        X, y = blobs(30, margin=3.0, seed=13)
        model = svm_train(X, y, KernelSpec(kind="rbf", C=2.0))
        path = save_svm_model(model, tmp_path / "model")
        loaded = load_svm_model(path)
        Xt, _ = blobs(20, margin=3.0, seed=14)
        np.testing.assert_allclose(
            np.atleast_1d(svm_decision(model, Xt)),
            np.atleast_1d(svm_decision(loaded, Xt)),
            atol=1e-12,
        )


class TestProbability:
    def test_zero_decision_is_half(self):
        assert decision_to_probability(0.0) == 0.5

    def test_symmetry(self, rng):
        d = rng.standard_normal(100)
        np.testing.assert_allclose(
            decision_to_probability(-d), 1.0 - decision_to_probability(d), atol=1e-12
        )

    def test_monotonic(self):
        d = np.linspace(-5, 5, 101)
        p = decision_to_probability(d)
        assert np.all(np.diff(p) > 0)

    def test_platt_recovers_sigmoid(self):
        rng = np.random.default_rng(1)
        d = rng.uniform(-4, 4, 2000)
        true_p = 1.0 / (1.0 + np.exp(2.0 * d - 0.5))  # A=2, B=-0.5
        y = (rng.random(2000) < true_p).astype(int)
        A, B = fit_platt(d, y)
        assert A == pytest.approx(2.0, abs=0.3)
        assert B == pytest.approx(-0.5, abs=0.3)
        p = decision_to_probability(d, platt=(A, B))
        assert np.corrcoef(p, true_p)[0, 1] > 0.99

    def test_platt_requires_both_classes(self):
        with pytest.raises(DataError):
            fit_platt(np.ones(5), np.ones(5, dtype=int))


class TestKnn:
    def test_exact_training_point(self, rng):
        X = rng.standard_normal((20, 3))
        y = rng.integers(0, 2, 20)
        for i in (0, 7, 19):
            assert knn_predict(X, y, X[i], k=1) == y[i]

    def test_majority_3_cad_8_normal(self):
        X = np.arange(11, dtype=float)[:, None]
        y = np.array([1, 1, 1] + [0] * 8)
        assert knn_predict(X, y, np.array([5.0]), k=11) == 0

    def test_vote_tie_predicts_cad(self):
        X = np.array([[0.0], [2.0]])
        y = np.array([1, 0])
        assert knn_predict(X, y, np.array([1.0]), k=2) == 1

    def test_distance_tie_lower_index(self):
        X = np.array([[1.0], [-1.0], [5.0]])
        y = np.array([0, 1, 1])
        # query 0 is equidistant from rows 0 and 1; row 0 wins
        assert knn_predict(X, y, np.array([0.0]), k=1) == 0

    def test_cosine_scale_invariance(self, rng):
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 2, 30)
        q = rng.standard_normal(4)
        l1, f1 = knn_predict_batch(X, y, q[None, :], k=5, metric="cosine")
        l2, f2 = knn_predict_batch(X, y, 2.0 * q[None, :], k=5, metric="cosine")
        assert l1[0] == l2[0] and f1[0] == f2[0]

    def test_metrics_all_run(self, rng):
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 2, 30)
        q = rng.standard_normal((5, 4))
        for metric in ("euclidean", "cosine", "cityblock", "correlation"):
            labels, frac = knn_predict_batch(X, y, q, k=7, metric=metric)
            assert labels.shape == (5,)
            assert np.all((frac >= 0) & (frac <= 1))

    def test_k_validation(self, rng):
        X = rng.standard_normal((5, 2))
        y = np.array([0, 1, 0, 1, 0])
        with pytest.raises(ConfigError):
            knn_predict(X, y, np.zeros(2), k=0)
        with pytest.raises(ConfigError):
            knn_predict(X, y, np.zeros(2), k=6)


def oracle_exact_ranksum_p(a, b):
    """Enumerate every group assignment of the pooled sample."""
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    n = len(a)
    w_obs = ranks[:n].sum()
    sums = [sum(c) for c in itertools.combinations(ranks, n)]
    total = len(sums)
    le = sum(1 for s in sums if s <= w_obs + 1e-9)
    ge = sum(1 for s in sums if s >= w_obs - 1e-9)
    return min(1.0, 2.0 * min(le / total, ge / total))


class TestWilcoxon:
    def test_identical_samples(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        assert wilcoxon_rank_sum(a, a.copy()) > 0.9

    def test_fully_separated(self):
        p = wilcoxon_rank_sum(np.arange(1.0, 11.0), np.arange(11.0, 21.0))
        # exact two-sided tail: 2 / C(20, 10)
        assert p == pytest.approx(2.0 / math.comb(20, 10), rel=1e-9)
        assert p < 0.001

    def test_swap_symmetry(self, rng):
        a = rng.standard_normal(8)
        b = rng.standard_normal(6) + 0.4
        assert wilcoxon_rank_sum(a, b) == pytest.approx(
            wilcoxon_rank_sum(b, a), abs=1e-12
        )

    def test_exact_agrees_with_enumeration(self):
        rng = np.random.default_rng(5)
        for n, m in ((3, 3), (4, 6), (5, 5), (7, 4), (8, 8)):
            a = rng.standard_normal(n)
            b = rng.standard_normal(m) + rng.uniform(-1, 1)
            assert wilcoxon_rank_sum(a, b) == pytest.approx(
                oracle_exact_ranksum_p(a, b), rel=1e-9
            )

    def test_exact_with_ties(self):
        a = np.array([1.0, 1.0, 2.0, 3.0])
        b = np.array([1.0, 2.0, 2.0, 4.0, 4.0])
        assert wilcoxon_rank_sum(a, b) == pytest.approx(
            oracle_exact_ranksum_p(a, b), rel=1e-9
        )

    def test_normal_path_matches_scipy(self, rng):
        a = rng.standard_normal(40)
        b = rng.standard_normal(45) + 0.3
        ours = wilcoxon_rank_sum(a, b)
        ref = stats.mannwhitneyu(
            a, b, alternative="two-sided", method="asymptotic", use_continuity=True
        ).pvalue
        assert ours == pytest.approx(ref, rel=1e-9)

    def test_normal_path_with_ties_matches_scipy(self, rng):
        a = np.round(rng.standard_normal(50), 1)
        b = np.round(rng.standard_normal(60) + 0.2, 1)
        ours = wilcoxon_rank_sum(a, b)
        ref = stats.mannwhitneyu(
            a, b, alternative="two-sided", method="asymptotic", use_continuity=True
        ).pvalue
        assert ours == pytest.approx(ref, rel=1e-9)

    def test_empty_sample(self):
        with pytest.raises(DataError, match="empty sample"):
            wilcoxon_rank_sum(np.array([]), np.array([1.0]))


class TestMetrics:
    def test_worked_example(self):
        m = compute_metrics(tp=3, fn=1, tn=2, fp=2)
        assert m.sens == pytest.approx(0.75)
        assert m.spec == pytest.approx(0.50)
        assert m.acc == pytest.approx(0.625)

    def test_all_correct(self):
        m = compute_metrics(tp=5, fn=0, tn=5, fp=0)
        assert (m.sens, m.spec, m.acc, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_f1_worked_example(self):
        m = compute_metrics(tp=85, fp=25, fn=15, tn=75)
        assert m.f1 == pytest.approx(0.8095, abs=5e-5)

    def test_role_swap(self, rng):
        y_true = rng.integers(0, 2, 50)
        y_pred = rng.integers(0, 2, 50)
        y_true[:2] = [0, 1]
        a = metrics_from_labels(y_true, y_pred)
        b = metrics_from_labels(1 - y_true, 1 - y_pred)
        assert a.sens == pytest.approx(b.spec)
        assert a.spec == pytest.approx(b.sens)
        assert a.acc == pytest.approx(b.acc)

    def test_degenerate_flag(self):
        m = compute_metrics(tp=0, fn=0, tn=4, fp=0)
        assert m.degenerate
        assert m.sens == 0.0 and m.f1 == 0.0

    def test_empty_confusion(self):
        with pytest.raises(DataError):
            compute_metrics(0, 0, 0, 0)
