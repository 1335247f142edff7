"""Unit tests for the predictor module"""

import numpy as np
import pytest

from models.pydantic_schemas import PredictorSpec
from scripts.errors import BenchmarkDataError
from scripts.predictors import (MLPNetwork, kkt_violations, predict, predict_values, rbf_kernel,
                                resolve_hyperparameters, train_classifier, train_regressor)

FAMILIES = ['svm', 'gp', 'mlp']


@pytest.fixture
def blobs():
    """Two well separated Gaussian blobs"""
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-1.0, 0.3, size=(30, 2)), rng.normal(1.0, 0.3, size=(30, 2))])
    y = np.array([0] * 30 + [1] * 30)
    return X, y


def classifier(family, **hyperparameters):
    return PredictorSpec(family=family, problem='classification', hyperparameters=hyperparameters)


def regressor(family, **hyperparameters):
    return PredictorSpec(family=family, problem='regression', hyperparameters=hyperparameters)


def test_rbf_kernel_properties():
    """Test unit diagonal, symmetry and range"""
    X = np.random.default_rng(1).normal(size=(6, 3))
    K = rbf_kernel(X, X, 0.5)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    np.testing.assert_array_equal(K, K.T)
    assert np.all((K > 0) & (K <= 1))


def test_rbf_kernel_errors():
    """Test dimension mismatch and non-positive gamma"""
    with pytest.raises(BenchmarkDataError):
        rbf_kernel(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)
    with pytest.raises(BenchmarkDataError):
        rbf_kernel(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


def test_resolve_hyperparameters():
    """Test defaults overridden by the PredictorSpec"""
    params = resolve_hyperparameters(regressor('svm', epsilon=0.01))
    assert params == {'C': 1.0, 'tol': 1e-3, 'epsilon': 0.01}
    assert resolve_hyperparameters(classifier('mlp'))['hidden_sizes'] == [16, 16, 16]


@pytest.mark.parametrize('family', FAMILIES)
def test_classifiers_separate_blobs(family, blobs):
    """Test every family on separable data"""
    X, y = blobs
    spec = classifier(family, epochs=100, learning_rate=1e-2) if family == 'mlp' else classifier(family)
    model = train_classifier(spec, X, y)
    labels, scores = predict(model, X)
    assert np.mean(labels == y) >= 0.95
    assert scores.shape == (60,)


@pytest.mark.parametrize('family', FAMILIES)
def test_classifier_deterministic(family, blobs):
    """Test that the same seed gives identical predictions"""
    X, y = blobs
    first = predict(train_classifier(classifier(family), X, y), X)[1]
    second = predict(train_classifier(classifier(family), X, y), X)[1]
    np.testing.assert_array_equal(first, second)


@pytest.mark.parametrize('family', ['svm', 'gp'])
def test_kernel_methods_ignore_row_order(family, blobs):
    """Test that permuting training rows leaves predictions unchanged"""
    X, y = blobs
    order = np.random.default_rng(5).permutation(len(y))
    first = predict(train_classifier(classifier(family), X, y), X)[1]
    second = predict(train_classifier(classifier(family), X[order], y[order]), X)[1]
    np.testing.assert_allclose(first, second, atol=1e-9)


def test_classifier_single_class():
    """Test that single-class labels are rejected"""
    X = np.random.default_rng(2).normal(size=(6, 2))
    with pytest.raises(BenchmarkDataError, match='single-class'):
        train_classifier(classifier('svm'), X, np.ones(6))


def test_classifier_too_few_rows():
    """Test the minimum training size"""
    with pytest.raises(BenchmarkDataError):
        train_classifier(classifier('gp'), np.zeros((3, 2)), [0, 1, 0])


def test_svm_fits_xor():
    """Test that the RBF SVM separates the 4-point XOR set"""
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    labels, _ = predict(train_classifier(classifier('svm'), X, y), X)
    np.testing.assert_array_equal(labels, y)


def test_predict_dimension_mismatch(blobs):
    """Test prediction with the wrong feature count"""
    X, y = blobs
    model = train_classifier(classifier('svm'), X, y)
    with pytest.raises(BenchmarkDataError, match='dimension mismatch'):
        predict(model, np.zeros((2, 3)))


def test_predict_empty(blobs):
    """Test prediction on zero rows"""
    X, y = blobs
    labels, scores = predict(train_classifier(classifier('gp'), X, y), np.zeros((0, 2)))
    assert labels.shape == (0,) and scores.shape == (0,)


def test_predict_wrong_problem(blobs):
    """Test that classifiers and regressors are not interchangeable"""
    X, y = blobs
    model = train_classifier(classifier('svm'), X, y)
    with pytest.raises(BenchmarkDataError):
        predict_values(model, X)


def test_svm_dual_feasible_and_kkt(blobs):
    """Test box constraints, the equality constraint and KKT residuals"""
    X, y = blobs
    rng = np.random.default_rng(11)
    # overlapping classes so that some multipliers hit the box bound
    X = X + rng.normal(0, 0.8, size=X.shape)
    model = train_classifier(classifier('svm'), X, y)
    alpha, signs = model.state['alpha'], model.state['y_train']
    assert np.all(alpha >= 0) and np.all(alpha <= model.state['C'])
    assert abs(float(alpha @ signs)) <= 1e-9
    assert kkt_violations(model).max() <= 1e-3 + 1e-9


def test_kkt_only_for_svm_classifier(blobs):
    """Test that KKT residuals need an SVM classifier"""
    X, y = blobs
    with pytest.raises(BenchmarkDataError):
        kkt_violations(train_classifier(classifier('gp'), X, y))


def test_gp_mode_gradient(blobs):
    """Test that the Laplace mode is found to tolerance"""
    X, y = blobs
    model = train_classifier(classifier('gp'), X, y)
    assert model.state['mode_gradient_norm'] <= 1e-6


def test_gp_probabilities_in_unit_interval(blobs):
    """Test GP predictive probabilities"""
    X, y = blobs
    _, scores = predict(train_classifier(classifier('gp'), X, y), np.array([[-1.0, -1.0], [1.0, 1.0], [8.0, -8.0]]))
    assert np.all((scores > 0) & (scores < 1))
    assert scores[0] < 0.5 < scores[1]
    # far from the data the posterior reverts towards the prior
    assert scores[2] == pytest.approx(0.5, abs=0.1)


def test_mlp_gradient_check():
    """Test backpropagation against central differences"""
    rng = np.random.default_rng(0)
    for problem in ('classification', 'regression'):
        seed = 0
        while True:
            network = MLPNetwork([3, 16, 16, 16, 1], problem, rng=np.random.default_rng(seed))
            X = rng.normal(size=(8, 3))
            _, _, pre_activations = network.forward(X)
            if min(np.abs(z).min() for z in pre_activations) > 1e-4:
                break
            seed += 1
        y = rng.integers(0, 2, size=8).astype(float) if problem == 'classification' else rng.uniform(size=8)
        _, gradients = network.loss_and_gradients(X, y)

        h = 1e-5
        worst = 0.0
        for param, grad in zip(network.parameters, gradients):
            for index in list(np.ndindex(param.shape))[:20]:
                original = param[index]
                param[index] = original + h
                plus, _ = network.loss_and_gradients(X, y)
                param[index] = original - h
                minus, _ = network.loss_and_gradients(X, y)
                param[index] = original
                numeric = (plus - minus) / (2 * h)
                analytic = grad[index]
                worst = max(worst, abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-7))
        assert worst <= 1e-3


def test_svr_fits_smooth_function():
    """Test SVR on a smooth 1-D target"""
    X = np.linspace(0, 1, 40)[:, None]
    y = 0.5 + 0.3 * np.sin(3 * X[:, 0])
    model = train_regressor(regressor('svm', epsilon=0.01), X, y)
    rmse = np.sqrt(np.mean((predict_values(model, X) - y) ** 2))
    assert rmse <= 0.05


def test_svr_default_epsilon_tube():
    """Test that the default epsilon keeps errors near the tube width"""
    X = np.linspace(0, 1, 40)[:, None]
    y = 0.5 + 0.3 * np.sin(3 * X[:, 0])
    model = train_regressor(regressor('svm'), X, y)
    rmse = np.sqrt(np.mean((predict_values(model, X) - y) ** 2))
    assert rmse <= 0.1


@pytest.mark.parametrize('family', FAMILIES)
def test_regressor_constant_target(family):
    """Test that a constant target is predicted back"""
    X = np.random.default_rng(4).uniform(size=(20, 3))
    y = np.full(20, 0.42)
    spec = regressor(family, epochs=500, learning_rate=1e-2) if family == 'mlp' else regressor(family)
    predictions = predict_values(train_regressor(spec, X, y), X)
    tolerance = 1e-3 if family != 'mlp' else 0.05
    np.testing.assert_allclose(predictions, 0.42, atol=tolerance)


def test_gp_regression_interpolates():
    """Test that a nearly noise-free GP passes through its training points"""
    X = np.array([[0.0], [1.5], [3.0], [4.5], [6.0]])
    y = np.array([0.1, 0.7, 0.3, 0.9, 0.5])
    model = train_regressor(regressor('gp', noise=1e-6), X, y)
    np.testing.assert_allclose(predict_values(model, X), y, atol=1e-3)


def test_mlp_regression_linear_signal():
    """Test that the MLP recovers a linear target"""
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(200, 3))
    y = X @ np.array([0.3, 0.2, 0.1]) + 0.1
    model = train_regressor(regressor('mlp', epochs=500, learning_rate=1e-2), X, y)
    predictions = predict_values(model, X)
    r2 = 1 - np.sum((y - predictions) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 >= 0.9


def test_trained_predictor_dump(blobs):
    """Test the plain model dump"""
    X, y = blobs
    dump = train_classifier(classifier('svm'), X, y).to_dict()
    assert dump['spec']['family'] == 'svm'
    assert dump['feature_dim'] == 2
    assert isinstance(dump['state']['alpha'], list)


if __name__ == "__main__":
    pytest.main([__file__, '-v'])
