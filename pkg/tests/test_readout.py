import numpy as np
import pytest

from memcap.errors import InvalidInputError, SingularSystemError
from memcap.readout import (
    LOGISTIC_OVR,
    LinearReadout,
    _augment,
    decision_scores,
    evaluate_classification,
    evaluate_regression,
    logistic_gradient,
    logistic_loss,
    mse_gradient,
    mse_loss,
    nmse_ratio,
    nmse_variance,
    predict,
    read_readout,
    train_linear,
    train_logistic_ovr,
    write_readout,
)


def _design(n=20, p=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p)), rng


def test_exact_linear_target_is_recovered():
    X, rng = _design()
    w = rng.standard_normal(5)
    y = X @ w + 0.7
    readout = train_linear(X, y, ridge_lambda=0.0)
    np.testing.assert_allclose(readout.weights[:, 0], w, atol=1e-10)
    assert readout.bias[0] == pytest.approx(0.7, abs=1e-10)
    assert np.linalg.norm(predict(readout, X) - y) <= 1e-10 * np.linalg.norm(y)


def test_one_hot_rows_reproduce_targets():
    X = np.eye(5)
    y = np.array([0.3, -1.0, 2.0, 0.5, 0.0])
    readout = train_linear(X, y, ridge_lambda=1e-12)
    np.testing.assert_allclose(predict(readout, X), y, atol=1e-6)


def test_rank_deficient_design_without_ridge_is_singular():
    with pytest.raises(SingularSystemError):
        train_linear(np.eye(5), np.arange(5.0), ridge_lambda=0.0)
    X, _ = _design(n=4, p=5)
    with pytest.raises(SingularSystemError):
        train_linear(X, np.ones(4), ridge_lambda=0.0)


def test_closed_form_is_a_minimum():
    X, rng = _design()
    y = rng.standard_normal(20)
    lam = 1e-3
    readout = train_linear(X, y, ridge_lambda=lam)
    A = _augment(X)
    w = np.vstack([readout.weights, readout.bias[None, :]])
    base = mse_loss(w, A, y[:, None], lam)
    for i in range(w.shape[0]):
        for delta in (1e-6, -1e-6):
            moved = w.copy()
            moved[i, 0] += delta
            assert mse_loss(moved, A, y[:, None], lam) >= base - 1e-15


def test_gradient_descent_matches_closed_form():
    X, rng = _design()
    y = X @ rng.standard_normal(5) + 0.1 * rng.standard_normal(20)
    closed = train_linear(X, y, ridge_lambda=0.0)
    gd = train_linear(X, y, method="gradient-descent", ridge_lambda=0.0, iters=20000)
    np.testing.assert_allclose(predict(gd, X), predict(closed, X), atol=1e-6)


def test_gradient_descent_with_ridge_matches_closed_form():
    X, rng = _design(seed=3)
    y = rng.standard_normal(20)
    closed = train_linear(X, y, ridge_lambda=0.05)
    gd = train_linear(X, y, method="gradient-descent", ridge_lambda=0.05)
    np.testing.assert_allclose(gd.weights, closed.weights, atol=1e-8)
    np.testing.assert_allclose(gd.bias, closed.bias, atol=1e-8)


def test_unknown_method_is_rejected():
    X, _ = _design()
    with pytest.raises(InvalidInputError):
        train_linear(X, np.ones(20), method="newton")


def test_mse_gradient_matches_finite_differences():
    X, rng = _design(n=8, p=3, seed=5)
    A = _augment(X)
    y = rng.standard_normal((8, 1))
    w = rng.standard_normal((4, 1))
    lam = 0.3
    grad = mse_gradient(w, A, y, lam)
    h = 1e-6
    numeric = np.zeros_like(w)
    for i in range(w.shape[0]):
        e = np.zeros_like(w)
        e[i, 0] = h
        numeric[i, 0] = (mse_loss(w + e, A, y, lam) - mse_loss(w - e, A, y, lam)) / (2 * h)
    np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-8)


def test_logistic_gradient_matches_finite_differences():
    Z, rng = _design(n=10, p=3, seed=6)
    Y = (rng.random((10, 2)) < 0.5).astype(float)
    W = rng.standard_normal((3, 2))
    b = rng.standard_normal(2)
    lam = 0.2
    gW, gb = logistic_gradient(W, b, Z, Y, lam)
    h = 1e-6

    def total(W_, b_):
        return float(logistic_loss(W_, b_, Z, Y, lam).sum())

    for i in range(3):
        for k in range(2):
            e = np.zeros_like(W)
            e[i, k] = h
            numeric = (total(W + e, b) - total(W - e, b)) / (2 * h)
            assert gW[i, k] == pytest.approx(numeric, rel=1e-6, abs=1e-8)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        numeric = (total(W, b + e) - total(W, b - e)) / (2 * h)
        assert gb[k] == pytest.approx(numeric, rel=1e-6, abs=1e-8)


def _blobs(seed=0, per_class=10, spread=0.1):
    rng = np.random.default_rng(seed)
    centers = np.array([[-2.0, -2.0], [2.0, 2.0], [2.0, -2.0]])
    X = np.vstack([c + spread * rng.standard_normal((per_class, 2)) for c in centers])
    labels = np.repeat([0, 1, 2], per_class)
    return X, labels


def test_logistic_separates_separable_classes():
    X, labels = _blobs()
    readout = train_logistic_ovr(X, labels)
    assert readout.weights.shape == (2, 3)
    np.testing.assert_array_equal(predict(readout, X), labels)
    metrics = evaluate_classification(readout, X, labels)
    assert metrics.accuracy == 1.0
    np.testing.assert_array_equal(metrics.confusion, np.diag([10, 10, 10]))


def test_logistic_label_permutation_permutes_columns():
    X, labels = _blobs(seed=1)
    perm = np.array([2, 0, 1])
    a = train_logistic_ovr(X, labels)
    b = train_logistic_ovr(X, perm[labels])
    for k in range(3):
        np.testing.assert_allclose(b.weights[:, perm[k]], a.weights[:, k], rtol=1e-10)
        assert b.bias[perm[k]] == pytest.approx(a.bias[k], rel=1e-10)


def test_logistic_duplicate_rows_give_same_readout():
    X, labels = _blobs(seed=2)
    a = train_logistic_ovr(X, labels)
    b = train_logistic_ovr(np.vstack([X, X]), np.concatenate([labels, labels]))
    np.testing.assert_allclose(b.weights, a.weights, rtol=1e-9, atol=1e-12)


def test_strong_penalty_predicts_majority_class():
    X, _ = _blobs(seed=3, per_class=4)
    labels = np.array([1] * 6 + [0] * 3 + [2] * 3)
    readout = train_logistic_ovr(X, labels, l2_lambda=1e8)
    assert np.all(np.abs(readout.weights) < 1e-6)
    np.testing.assert_array_equal(predict(readout, X), 1)


def test_logistic_needs_two_classes():
    with pytest.raises(InvalidInputError):
        train_logistic_ovr(np.ones((4, 2)), [1, 1, 1, 1])


def test_positive_score_scaling_keeps_predictions():
    X, labels = _blobs(seed=4)
    readout = train_logistic_ovr(X, labels, iters=50)
    scores = decision_scores(readout, X)
    np.testing.assert_array_equal(
        readout.classes[np.argmax(3.0 * scores, axis=1)], predict(readout, X)
    )


def _fixed_classifier(n_classes=3):
    # one-hot features score their own class
    return LinearReadout(
        weights=5.0 * np.eye(n_classes),
        bias=np.zeros(n_classes),
        kind=LOGISTIC_OVR,
        classes=np.arange(n_classes),
        mean=np.zeros(n_classes),
        scale=np.ones(n_classes),
    )


def test_confusion_matrix_counts():
    truth = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2])
    pred = np.array([0, 0, 1, 1, 1, 2, 2, 2, 0, 2])
    X = np.eye(3)[pred]
    metrics = evaluate_classification(_fixed_classifier(), X, truth)
    expected = np.array([[2, 1, 0], [0, 2, 1], [1, 0, 3]])
    np.testing.assert_array_equal(metrics.confusion, expected)
    assert metrics.accuracy == pytest.approx(0.7)


def test_constant_classifier_fills_one_column():
    readout = LinearReadout(
        weights=np.zeros((2, 3)),
        bias=np.array([1.0, 0.0, 0.0]),
        kind=LOGISTIC_OVR,
        classes=np.arange(3),
        mean=np.zeros(2),
        scale=np.ones(2),
    )
    truth = np.array([0, 1, 1, 2])
    metrics = evaluate_classification(readout, np.zeros((4, 2)), truth)
    np.testing.assert_array_equal(metrics.confusion[:, 0], [1, 2, 1])
    assert metrics.confusion[:, 1:].sum() == 0


def test_ties_go_to_lowest_class():
    readout = LinearReadout(
        weights=np.zeros((1, 3)),
        bias=np.zeros(3),
        kind=LOGISTIC_OVR,
        classes=np.array(["a", "b", "c"]),
    )
    np.testing.assert_array_equal(predict(readout, np.zeros((2, 1))), ["a", "a"])


def test_unseen_labels_are_rejected():
    with pytest.raises(InvalidInputError):
        evaluate_classification(_fixed_classifier(), np.eye(3), [0, 1, 7])


def test_zero_weights_predict_bias():
    readout = LinearReadout(weights=np.zeros((3, 1)), bias=np.array([0.25]))
    np.testing.assert_array_equal(predict(readout, np.ones((4, 3))), 0.25)


def test_nmse_examples():
    assert nmse_ratio([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert nmse_ratio([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert nmse_variance([2.0, 2.0], [1.0, 3.0]) == 1.0


def test_nmse_definitions_are_related():
    rng = np.random.default_rng(8)
    y = rng.uniform(0.1, 0.3, 50)
    z = y + 0.01 * rng.standard_normal(50)
    ratio = nmse_ratio(z, y)
    variance = nmse_variance(z, y)
    scale = np.sum((y - y.mean()) ** 2) / np.sum(y**2)
    assert ratio == pytest.approx(variance * scale, rel=1e-12)


def test_nmse_undefined_cases():
    with pytest.raises(InvalidInputError):
        nmse_ratio([1.0], [0.0])
    with pytest.raises(InvalidInputError):
        nmse_variance([1.0, 2.0], [3.0, 3.0])


def test_evaluate_regression():
    X, rng = _design()
    y = X @ rng.standard_normal(5) + 1.0
    readout = train_linear(X, y, ridge_lambda=0.0)
    metrics = evaluate_regression(readout, X, y)
    assert metrics.nmse_ratio < 1e-20
    assert set(metrics.as_dict()) == {"nmse_ratio", "nmse_variance"}


def test_readout_files(tmp_path):
    X, labels = _blobs(seed=5)
    readout = train_logistic_ovr(X, labels, iters=20)
    prefix = str(tmp_path / "readout")
    csv_path, json_path = write_readout(prefix, readout)
    assert csv_path.endswith("readout.weights.csv")
    loaded = read_readout(prefix)
    np.testing.assert_array_equal(loaded.weights, readout.weights)
    np.testing.assert_array_equal(predict(loaded, X), predict(readout, X))
