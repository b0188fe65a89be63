"""Baseline classifier, AUC-weighted averaging, and the metric report.

Gradient correctness is checked against central finite differences of an
independently written penalized cross-entropy; AUC is checked against
explicit concordant/tied pair counting.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spfp.ensemble import (
    EnsembleSpec,
    MetricReport,
    ProbModel,
    ensemble_predict,
    metrics,
    normalized_weights,
    predict_proba,
    train_builtin,
)
from spfp.errors import ConfigError, DataError


def separable_toy(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(np.intp)
    X[y == 1] += 3.0  # push the classes far apart
    return X, y


def imported(proba):
    proba = np.asarray(proba, dtype=np.float64)
    return ProbModel(kind="imported", n_classes=proba.shape[1], proba=proba)


def penalized_nll(w_flat, xb, y, l2, n_cls):
    """Reference loss (natural log): mean cross-entropy + L2 on non-bias rows."""
    w = w_flat.reshape(xb.shape[1], n_cls)
    z = xb @ w
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -logp[np.arange(y.shape[0]), y].mean()
    return nll + 0.5 * l2 * float((w[1:] ** 2).sum())


class TestTrainBuiltin:
    def test_separable_training_accuracy(self):
        X, y = separable_toy()
        model = train_builtin(X, y)
        proba = predict_proba(model, X)
        assert (proba.argmax(axis=1) == y).mean() == 1.0

    def test_noise_labels_recover_priors(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(400, 3))
        y = np.zeros(400, dtype=np.intp)
        y[280:] = 1  # priors 0.7 / 0.3
        y = y[rng.permutation(400)]
        model = train_builtin(X, y)
        proba = predict_proba(model, X)
        assert abs(proba[:, 0].mean() - 0.7) < 0.05
        assert abs(proba[:, 1].mean() - 0.3) < 0.05

    def test_deterministic_weights(self):
        X, y = separable_toy(seed=2)
        a = train_builtin(X, y)
        b = train_builtin(X, y)
        assert np.array_equal(a.weights, b.weights)
        assert a.iterations == b.iterations
        assert a.final_loss == b.final_loss

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(25, 3))
        y = rng.integers(0, 3, size=25).astype(np.intp)
        l2 = 0.01
        # one update from zero initialization isolates the gradient at w=0
        model = train_builtin(X, y, l2=l2, max_iters=1, tol=0.0)
        xb = np.hstack([np.ones((25, 1)), (X - model.mean) / model.scale])
        lip = 0.5 * float(np.linalg.eigvalsh(xb.T @ xb)[-1]) / 25 + l2
        analytic = (-model.weights * lip).ravel()  # w1 = -grad/lip

        eps = 1e-6
        w0 = np.zeros(xb.shape[1] * 3)
        fd = np.empty_like(w0)
        for i in range(w0.shape[0]):
            up, dn = w0.copy(), w0.copy()
            up[i] += eps
            dn[i] -= eps
            fd[i] = (
                penalized_nll(up, xb, y, l2, 3) - penalized_nll(dn, xb, y, l2, 3)
            ) / (2 * eps)
        assert_allclose(analytic, fd, rtol=1e-5, atol=1e-8)

    def test_converged_point_is_stationary(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 2))
        y = (X[:, 0] > 0.3).astype(np.intp)
        l2 = 0.05
        model = train_builtin(X, y, l2=l2, max_iters=5000, tol=1e-10)
        xb = np.hstack([np.ones((40, 1)), (X - model.mean) / model.scale])
        w = model.weights.ravel()
        eps = 1e-6
        for i in range(w.shape[0]):
            up, dn = w.copy(), w.copy()
            up[i] += eps
            dn[i] -= eps
            fd = (
                penalized_nll(up, xb, y, l2, 2) - penalized_nll(dn, xb, y, l2, 2)
            ) / (2 * eps)
            assert abs(fd) < 1e-5

    def test_final_loss_in_bits(self):
        X, y = separable_toy(seed=5)
        model = train_builtin(X, y)
        proba = predict_proba(model, X)
        p_true = np.clip(proba[np.arange(60), y], 1e-15, 1 - 1e-15)
        assert_allclose(model.final_loss, float(-np.log2(p_true).mean()), atol=1e-12)

    def test_single_class_rejected(self):
        X = np.random.default_rng(6).normal(size=(10, 2))
        with pytest.raises(DataError, match="single class"):
            train_builtin(X, np.zeros(10, dtype=np.intp))

    def test_misaligned_inputs(self):
        with pytest.raises(DataError):
            train_builtin(np.zeros((4, 2)), np.array([0, 1]))
        with pytest.raises(ConfigError):
            train_builtin(np.zeros((4, 2)), np.array([0, 1, 0, 1]), l2=-1.0)

    def test_iteration_cap(self):
        X, y = separable_toy(seed=7)
        model = train_builtin(X, y, max_iters=3)
        assert model.iterations <= 3

    def test_explicit_class_count(self):
        X, y = separable_toy(seed=8)
        model = train_builtin(X, y, n_classes=4)
        assert model.weights.shape == (3, 4)
        proba = predict_proba(model, X)
        assert proba.shape == (60, 4)
        assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)


class TestPredictProba:
    def test_rows_are_distributions(self):
        X, y = separable_toy(seed=9)
        proba = predict_proba(train_builtin(X, y), X)
        assert proba.min() >= 0.0 and proba.max() <= 1.0
        assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)

    def test_full_width_slicing_matches_restricted(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 6))
        y = (X[:, 1] + X[:, 4] > 0).astype(np.intp)
        ids = [1, 4]
        model = train_builtin(X[:, ids], y, feature_ids=ids)
        assert np.array_equal(predict_proba(model, X), predict_proba(model, X[:, ids]))

    def test_width_mismatch_without_resolution(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(30, 4))
        y = (X[:, 0] > 0).astype(np.intp)
        model = train_builtin(X, y)
        with pytest.raises(DataError, match="feature columns"):
            predict_proba(model, X[:, :2])

    def test_imported_passthrough_and_checks(self):
        proba = np.array([[0.9, 0.1], [0.2, 0.8]])
        model = imported(proba)
        assert predict_proba(model) is proba
        assert predict_proba(model, np.zeros((2, 5))) is proba
        with pytest.raises(DataError, match="row count"):
            predict_proba(model, np.zeros((3, 5)))
        with pytest.raises(DataError):
            predict_proba(ProbModel(kind="imported", n_classes=2))

    def test_builtin_needs_matrix(self):
        X, y = separable_toy(seed=12)
        with pytest.raises(DataError):
            predict_proba(train_builtin(X, y))


class TestNormalizedWeights:
    def test_proportional(self):
        kept, w = normalized_weights([0.8, 0.2])
        assert kept == [0, 1]
        assert_allclose(w, [0.8, 0.2])

    def test_equal_aucs_equal_weights(self):
        kept, w = normalized_weights([0.7, 0.7, 0.7])
        assert_allclose(w, [1 / 3] * 3)

    def test_zero_auc_member_dropped(self):
        with pytest.warns(UserWarning, match=r"zero-AUC.*\[1\]"):
            kept, w = normalized_weights([0.6, 0.0, 0.4])
        assert kept == [0, 2]
        assert_allclose(w, [0.6, 0.4])

    def test_degenerate_inputs(self):
        with pytest.raises(ConfigError):
            normalized_weights([])
        with pytest.raises(ConfigError):
            normalized_weights([-0.1, 0.5])
        with pytest.warns(UserWarning):
            with pytest.raises(ConfigError):
                normalized_weights([0.0, 0.0])


class TestEnsemblePredict:
    def test_equal_aucs_plain_average(self):
        a = imported([[1.0, 0.0], [0.5, 0.5]])
        b = imported([[0.0, 1.0], [0.7, 0.3]])
        out = ensemble_predict([a, b], [0.5, 0.5])
        assert_allclose(out, [[0.5, 0.5], [0.6, 0.4]], atol=1e-12)

    def test_single_member_identity(self):
        a = imported([[0.3, 0.7], [0.8, 0.2]])
        assert_allclose(ensemble_predict([a], [0.9]), a.proba, atol=0)

    def test_hand_weighted_example(self):
        a = imported([[1.0, 0.0]])
        b = imported([[0.0, 1.0]])
        out = ensemble_predict([a, b], [0.8, 0.2])
        assert_allclose(out, [[0.8, 0.2]], atol=1e-12)

    def test_rows_still_distributions(self):
        rng = np.random.default_rng(13)
        members = [imported(rng.dirichlet(np.ones(3), size=20)) for _ in range(4)]
        out = ensemble_predict(members, [0.9, 0.6, 0.7, 0.5])
        assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
        assert out.min() >= 0.0

    def test_member_permutation_invariance(self):
        rng = np.random.default_rng(14)
        members = [imported(rng.dirichlet(np.ones(2), size=10)) for _ in range(3)]
        aucs = [0.9, 0.5, 0.7]
        base = ensemble_predict(members, aucs)
        perm = [2, 0, 1]
        out = ensemble_predict([members[i] for i in perm], [aucs[i] for i in perm])
        assert_allclose(out, base, atol=1e-12)

    def test_mismatches(self):
        a = imported([[1.0, 0.0]])
        c = imported([[0.2, 0.3, 0.5]])
        with pytest.raises(DataError, match="class set"):
            ensemble_predict([a, c], [0.5, 0.5])
        with pytest.raises(ConfigError):
            ensemble_predict([], [])
        with pytest.raises(ConfigError):
            ensemble_predict([a], [0.5, 0.5])

    def test_builtin_members_share_full_table(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(80, 5))
        y = (X[:, 0] - X[:, 3] > 0).astype(np.intp)
        m1 = train_builtin(X[:, [0, 1]], y, feature_ids=[0, 1])
        m2 = train_builtin(X[:, [3, 4]], y, feature_ids=[3, 4])
        out = ensemble_predict([m1, m2], [0.8, 0.6], rows=X)
        assert out.shape == (80, 2)
        assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


def oracle_pair_auc(score, truth):
    pos = score[truth == 1]
    neg = score[truth == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (pos.shape[0] * neg.shape[0])


class TestMetrics:
    def test_perfect_predictor(self):
        proba = np.eye(3)[[0, 1, 2, 1]]
        truth = np.array([0, 1, 2, 1])
        rep = metrics(proba, truth)
        assert rep.f1_micro == 1.0
        assert rep.auc == 1.0
        assert rep.log_loss < 1e-9
        assert rep.mec == 0.0
        assert rep.mew is None

    def test_uniform_binary(self):
        proba = np.full((10, 2), 0.5)
        truth = np.array([0, 1] * 5)
        rep = metrics(proba, truth)
        assert rep.log_loss == 1.0
        assert rep.auc == 0.5
        assert rep.f1_micro == 0.5  # argmax ties resolve to class 0
        assert rep.mec == 1.0
        assert rep.mew == 1.0

    def test_three_row_hand_example(self):
        proba = np.array([[0.7, 0.3], [0.4, 0.6], [0.9, 0.1]])
        truth = np.array([0, 1, 1])
        rep = metrics(proba, truth)
        assert_allclose(rep.f1_micro, 2 / 3, atol=1e-12)
        assert_allclose(rep.mec, 0.9261, atol=1e-4)
        assert_allclose(rep.mew, 0.4690, atol=1e-4)
        h = lambda p: -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
        assert_allclose(rep.mec, (h(0.7) + h(0.4)) / 2, atol=1e-12)
        assert_allclose(rep.mew, h(0.9), atol=1e-12)

    def test_auc_matches_pair_counting(self):
        rng = np.random.default_rng(16)
        for trial in range(60):
            n = int(rng.integers(4, 13))
            truth = rng.integers(0, 2, size=n)
            if truth.min() == truth.max():
                truth[0] = 1 - truth[0]
            p1 = np.round(rng.random(n), 1)  # coarse grid forces ties
            proba = np.column_stack([1 - p1, p1])
            rep = metrics(proba, truth.astype(np.intp))
            assert_allclose(
                rep.auc, oracle_pair_auc(p1, truth), rtol=0, atol=1e-12
            ), f"trial {trial}"

    def test_auc_skips_absent_classes(self):
        # class 2 never appears in truth: macro average covers classes 0,1
        proba = np.array(
            [[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.5, 0.4, 0.1], [0.1, 0.8, 0.1]]
        )
        truth = np.array([0, 1, 1, 1])
        rep = metrics(proba, truth)
        a0 = oracle_pair_auc(proba[:, 0], (truth == 0).astype(int))
        a1 = oracle_pair_auc(proba[:, 1], (truth == 1).astype(int))
        assert_allclose(rep.auc, (a0 + a1) / 2, atol=1e-12)

    def test_single_class_truth_rejected(self):
        proba = np.array([[0.6, 0.4], [0.3, 0.7]])
        with pytest.raises(DataError, match="AUC undefined"):
            metrics(proba, np.array([1, 1]))

    def test_entropy_decomposition(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            n = int(rng.integers(2, 30))
            c = int(rng.integers(2, 6))
            proba = rng.dirichlet(np.ones(c), size=n)
            truth = rng.integers(0, c, size=n)
            if np.unique(truth).shape[0] < 2:
                truth[0] = (truth[0] + 1) % c
            rep = metrics(proba, truth.astype(np.intp))
            n_correct = int(round(rep.f1_micro * n))
            n_wrong = n - n_correct
            total = (rep.mec or 0.0) * n_correct + (rep.mew or 0.0) * n_wrong
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = -np.where(proba > 0, proba * np.log2(proba), 0.0).sum(axis=1)
            assert_allclose(total, ent.sum(), atol=1e-9)

    def test_validation_errors(self):
        good = np.array([[0.5, 0.5], [0.4, 0.6]])
        with pytest.raises(DataError):
            metrics(good, np.array([0]))
        with pytest.raises(DataError):
            metrics(good, np.array([0, 2]))
        with pytest.raises(DataError):
            metrics(np.array([[0.9, 0.3], [0.5, 0.5]]), np.array([0, 1]))
        with pytest.raises(DataError):
            metrics(good[0], np.array([0, 1]))
        with pytest.raises(DataError):
            metrics(np.empty((0, 2)), np.empty(0, dtype=int))

    def test_report_dict_and_elapsed(self):
        proba = np.array([[0.7, 0.3], [0.4, 0.6]])
        rep = metrics(proba, np.array([0, 1]), elapsed=1.25)
        d = rep.to_dict()
        assert d["elapsed"] == 1.25
        assert set(d) == {"f1_micro", "auc", "log_loss", "mec", "mew", "elapsed"}
        assert d["mew"] is None


class TestEnsembleSpec:
    def test_valid(self):
        spec = EnsembleSpec(members=[0, 1], weights=[0.25, 0.75])
        assert spec.members == [0, 1]

    @pytest.mark.parametrize(
        "members,weights",
        [
            ([0, 1], [0.5, 0.6]),
            ([0, 1], [-0.1, 1.1]),
            ([0], [0.5, 0.5]),
            ([], []),
        ],
    )
    def test_invalid(self, members, weights):
        with pytest.raises(ConfigError):
            EnsembleSpec(members=members, weights=weights)
