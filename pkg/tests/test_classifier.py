import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dual_qp_projected_gradient, random_svm_problem
from prosospeaker.classifier import (DF, REAL, ConvergenceError, GridPoint, KernelSpec, SvmError,
                                     default_grid, grid_search, kernel_eval, labels_from_scores,
                                     load_model, parse_grid, save_model, smo_solve, svm_decision,
                                     svm_predict, svm_train)
from prosospeaker.features import FeatureVector, fit_standardizer


# -- kernels ---------------------------------------------------------------------

def test_kernel_closed_forms():
    u = np.array([0.3, -1.2, 2.0])
    assert kernel_eval(KernelSpec("rbf", 0.7), u, u) == 1.0
    v = np.array([np.sqrt(np.log(2.0)), 0.0])
    assert kernel_eval(KernelSpec("rbf", 1.0), v, np.zeros(2)) == pytest.approx(0.5, abs=1e-15)
    assert kernel_eval(KernelSpec("polynomial", 1.0, 2, 0.0), [1.0, 1.0], [1.0, 2.0]) == pytest.approx(9.0)
    assert kernel_eval(KernelSpec("sigmoid", 0.5, coef0=-1.0), [1.0], [2.0]) == pytest.approx(0.0)


def test_kernel_errors():
    with pytest.raises(SvmError):
        kernel_eval(KernelSpec(), [1.0, 2.0], [1.0])
    with pytest.raises(SvmError):
        KernelSpec("rbf", 0.0)
    with pytest.raises(SvmError):
        KernelSpec("linear", 1.0)


def test_kernel_matrix_matches_pointwise():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    for k in (KernelSpec("rbf", 0.4), KernelSpec("polynomial", 0.5, 3, 1.0), KernelSpec("sigmoid", 0.2, coef0=0.1)):
        ref = [[kernel_eval(k, a, b) for b in B] for a in A]
        np.testing.assert_allclose(k.matrix(A, B), ref, rtol=1e-12, atol=1e-14)


# -- training ----------------------------------------------------------------------

def test_symmetric_1d_problem():
    X, y = np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0])
    k = KernelSpec("rbf", 1.0)
    m = svm_train(X, y, 100.0, k)
    assert abs(m.decision_function([[0.0]])[0]) <= 1e-6
    assert m.decision_function([[-1e-3]])[0] < 0 < m.decision_function([[1e-3]])[0]
    assert list(m.predict(X)) == [REAL, DF]
    _, obj = dual_qp_projected_gradient(k.matrix(X, X), y, 100.0)
    assert smo_solve(X, y, 100.0, k).objective == pytest.approx(obj, rel=1e-6)


def test_xor_fit():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = [REAL, REAL, DF, DF]
    m = svm_train(X, y, 100.0, KernelSpec("rbf", 1.0))
    assert list(m.predict(X)) == y


@pytest.mark.parametrize("seed", range(12))
def test_dual_objective_against_oracle(seed):
    X, y, C, k = random_svm_problem(seed)
    res = smo_solve(X, y, C, k, tol=1e-6)
    _, obj = dual_qp_projected_gradient(k.matrix(X, X), y, C)
    assert abs(res.alpha @ y) <= 1e-6
    assert abs(res.objective - obj) <= 1e-6 * abs(obj)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_kkt_residuals_below_tol(seed):
    X, y, C, k = random_svm_problem(seed)
    tol = 1e-3
    res = smo_solve(X, y, C, k, tol)
    a = res.alpha
    assert np.all(a >= 0) and np.all(a <= C)
    grad = (k.matrix(X, X) * np.outer(y, y)) @ a - 1.0
    score = -y * grad
    up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
    low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
    assert score[up].max() - score[low].min() < tol


def test_model_invariants():
    X, y, C, k = random_svm_problem(3)
    m = svm_train(X, y, C, k)
    assert np.all(np.abs(m.dual_coefs) <= C + 1e-12)
    assert abs(m.dual_coefs.sum()) <= 1e-9
    assert (m.dual_coefs > 0).any() and (m.dual_coefs < 0).any()


def test_margin_at_free_support_vector():
    rng = np.random.default_rng(5)
    X = np.r_[rng.standard_normal((15, 2)) + 1.5, rng.standard_normal((15, 2)) - 1.5]
    y = np.r_[np.ones(15), -np.ones(15)]
    tol = 1e-3
    m = svm_train(X, y, 10.0, KernelSpec("rbf", 0.5), tol)
    free = (m.dual_coefs > 0) & (m.dual_coefs < m.C)
    assert free.any()
    np.testing.assert_allclose(m.decision_function(m.support_vectors[free]), 1.0, atol=tol)


def test_permuted_rows_same_predictions():
    for seed in range(20):
        X, y, C, k = random_svm_problem(seed, kernels=("rbf", "polynomial"))
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(y))
        H = rng.standard_normal((25, X.shape[1]))
        a = svm_train(X, y, C, k, tol=1e-8).decision_function(H)
        b = svm_train(X[perm], y[perm], C, k, tol=1e-8).decision_function(H)
        assert np.max(np.abs(a - b)) < 1e-6


def test_train_errors():
    X = np.zeros((3, 2))
    with pytest.raises(SvmError, match="both"):
        svm_train(X, [DF, DF, DF], 1.0, KernelSpec())
    with pytest.raises(SvmError, match="NaN"):
        svm_train(np.array([[0.0], [np.nan]]), [DF, REAL], 1.0, KernelSpec())
    with pytest.raises(SvmError):
        svm_train(X, [DF, REAL, "FAKE"], 1.0, KernelSpec())


def test_non_convergence_raises():
    X, y, C, k = random_svm_problem(0)
    with pytest.raises(ConvergenceError):
        smo_solve(X, y, C, k, tol=1e-12, max_iter=1)


# -- decision and prediction -------------------------------------------------------

@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(9)
    X = np.r_[rng.standard_normal((20, 3)) + 1, rng.standard_normal((20, 3)) - 1]
    y = [DF] * 20 + [REAL] * 20
    s = fit_standardizer(X)
    return svm_train(s.transform(X), y, 1.0, KernelSpec("rbf", 0.3), standardizer=s), X


def test_decision_requires_standardized(fitted):
    m, X = fitted
    with pytest.raises(SvmError):
        svm_decision(m, FeatureVector(X[0]))


def test_decision_continuity_and_sign(fitted):
    m, X = fitted
    for x in X[:10]:
        f = m.standardizer(FeatureVector(x))
        g = FeatureVector(f.values + 1e-9, standardized=True)
        assert abs(svm_decision(m, f) - svm_decision(m, g)) < 1e-6
        assert svm_predict(m, f) == (DF if svm_decision(m, f) > 0 else REAL)


def test_score_rule():
    assert list(labels_from_scores([2.3, 0.0, -0.1])) == [DF, REAL, REAL]


def test_model_round_trip(tmp_path, fitted):
    m, X = fitted
    save_model(tmp_path / "m.psk", m)
    back, grid = load_model(tmp_path / "m.psk")
    assert grid is None
    assert np.array_equal(back.score(X), m.score(X))
    assert back.kernel == m.kernel and back.C == m.C


# -- grid search ---------------------------------------------------------------------

def blobs(seed, n, shift=1.5):
    rng = np.random.default_rng(seed)
    X = np.r_[rng.standard_normal((n, 4)) + shift, rng.standard_normal((n, 4)) - shift]
    return X, [DF] * n + [REAL] * n


def test_default_grid_order():
    g = default_grid()
    assert len(g) == 30
    assert g[0] == GridPoint(0.01, "uniform", "rbf")
    assert [p.kernel for p in g[:3]] == ["rbf", "polynomial", "sigmoid"]
    assert g[-1] == GridPoint(100.0, "scaled", "sigmoid")
    assert g == [GridPoint(c, gm, k) for c, gm, k in itertools.product(
        (0.01, 0.1, 1.0, 10.0, 100.0), ("uniform", "scaled"), ("rbf", "polynomial", "sigmoid"))]


def test_parse_grid():
    assert parse_grid("default") == default_grid()
    assert parse_grid("C=100,gamma=scaled,kernel=rbf") == [GridPoint(100.0, "scaled", "rbf")]
    assert len(parse_grid("kernel=rbf|poly")) == 20
    with pytest.raises(SvmError):
        parse_grid("degree=3")


def test_grid_singleton_and_argmax():
    Xt, yt = blobs(0, 20)
    Xd, yd = blobs(1, 10, 0.5)
    one = grid_search(Xt, yt, Xd, yd, [GridPoint(1.0, "scaled", "rbf")])
    assert one.best_index == 0 and len(one.entries) == 1
    full = grid_search(Xt, yt, Xd, yd)
    bas = [e["dev_balanced_accuracy"] for e in full.entries]
    assert len(bas) == 30
    assert full.best["dev_balanced_accuracy"] == max(bas)
    assert full.best_index == bas.index(max(bas))  # first maximum wins ties
    assert full.sigma2 == pytest.approx(1.0)


def test_grid_tie_break_first():
    Xt, yt = blobs(0, 20, 5.0)
    Xd, yd = blobs(1, 10, 5.0)  # every config separates perfectly
    res = grid_search(Xt, yt, Xd, yd, parse_grid("C=1|10,kernel=rbf"))
    assert all(e["dev_balanced_accuracy"] == 1.0 for e in res.entries)
    assert res.best_index == 0


def test_grid_errors():
    Xt, yt = blobs(0, 5)
    with pytest.raises(SvmError):
        grid_search(Xt, yt, np.zeros((0, 4)), [])
    with pytest.raises(SvmError):
        grid_search(Xt, yt, Xt[:3], [DF] * 3)
    with pytest.raises(SvmError):
        grid_search(Xt, yt, Xt, yt, [])


def test_grid_parallel_matches_serial():
    Xt, yt = blobs(2, 15, 0.8)
    Xd, yd = blobs(3, 10, 0.8)
    a = grid_search(Xt, yt, Xd, yd, workers=1)
    b = grid_search(Xt, yt, Xd, yd, workers=4)
    assert a.entries == b.entries and a.best_index == b.best_index
