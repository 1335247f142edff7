"""
Predictor module
SVM (SMO), Gaussian process (Laplace / exact) and MLP (Adam) models for
the model-comparison and score-estimation problems
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import expit

from models.pydantic_schemas import PredictorSpec, TrainedPredictor
from scripts.config import Config
from scripts.errors import BenchmarkDataError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """K[i][j] = exp(-gamma * ||A_i - B_j||^2)"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise BenchmarkDataError(f'feature dimensions differ: {A.shape[1]} vs {B.shape[1]}')
    if not gamma > 0:
        raise BenchmarkDataError(f'gamma must be positive, got {gamma}')
    return np.exp(-gamma * cdist(A, B, 'sqeuclidean'))


def default_gamma(X: np.ndarray) -> float:
    """1 / (d * Var(X)), falling back to 1 for constant features"""
    variance = float(np.var(X))
    return 1.0 / (X.shape[1] * variance) if variance > 0 else 1.0


def resolve_hyperparameters(spec: PredictorSpec) -> Dict[str, Any]:
    """Config defaults for the family/problem, overridden by the PredictorSpec"""
    params = Config.default_hyperparameters(spec.family, spec.problem)
    params.update(spec.hyperparameters)
    return params


def _as_features(X, rows_min: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise BenchmarkDataError(f'features must be a 2-D matrix, got shape {X.shape}')
    if len(X) < rows_min:
        raise BenchmarkDataError(f'need at least {rows_min} rows, got {len(X)}')
    if not np.all(np.isfinite(X)):
        raise BenchmarkDataError('non-finite input features')
    return X


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order independent of how the caller ordered the samples"""
    keys = [y] + [X[:, c] for c in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


# ---------------------------------------------------------------------------
# Support vector machines
# ---------------------------------------------------------------------------

def _smo(Q: np.ndarray, p: np.ndarray, y: np.ndarray, C: float, tol: float,
         max_iter: int) -> Tuple[np.ndarray, float, int]:
    """
    Sequential minimal optimization of min 1/2 a'Qa + p'a, 0 <= a <= C, y'a = 0

    Working pairs are the maximal KKT violators; each two-variable step is
    solved analytically and clipped to the box.

    Returns:
        Tuple of (alpha, rho, iterations)
    """
    n = len(p)
    alpha = np.zeros(n)
    G = p.astype(float).copy()
    QD = np.diag(Q)
    tau = 1e-12

    iteration = 0
    while iteration < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        up_scores = np.where(up, score, -np.inf)
        low_scores = np.where(low, score, np.inf)
        i = int(np.argmax(up_scores))
        j = int(np.argmin(low_scores))
        if not np.isfinite(up_scores[i]) or not np.isfinite(low_scores[j]):
            break
        if up_scores[i] - low_scores[j] < tol:
            break
        iteration += 1

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2 * Q[i, j], tau)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2 * Q[i, j], tau)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total

        G += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    else:
        logger.warning(f"SMO stopped at the iteration limit ({max_iter}) before reaching tolerance {tol}")

    # offset from the free variables, midpoint of the feasible range otherwise
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = float(np.mean(yG[free]))
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = float(np.min(yG[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yG[lb_mask])) if np.any(lb_mask) else -np.inf
        if np.isfinite(ub) and np.isfinite(lb):
            rho = (ub + lb) / 2
        else:
            rho = ub if np.isfinite(ub) else (lb if np.isfinite(lb) else 0.0)
    return alpha, rho, iteration


def _fit_svc(X: np.ndarray, labels: np.ndarray, params: Dict[str, Any]) -> Dict[str, Any]:
    order = _canonical_order(X, labels)
    X, labels = X[order], labels[order]
    y = np.where(labels > 0, 1.0, -1.0)
    gamma = params.get('gamma') or default_gamma(X)
    C = float(params['C'])
    K = rbf_kernel(X, X, gamma)
    Q = np.outer(y, y) * K
    alpha, rho, iterations = _smo(Q, -np.ones(len(y)), y, C, float(params['tol']), 100 * len(y))
    logger.debug(f"SVC converged in {iterations} SMO steps, {int(np.sum(alpha > 0))} support vectors")
    return {'X_train': X, 'y_train': y, 'alpha': alpha, 'coef': alpha * y, 'rho': rho,
            'gamma': gamma, 'C': C, 'iterations': iterations}


def _fit_svr(X: np.ndarray, targets: np.ndarray, params: Dict[str, Any]) -> Dict[str, Any]:
    order = _canonical_order(X, targets)
    X, targets = X[order], targets[order]
    n = len(targets)
    gamma = params.get('gamma') or default_gamma(X)
    C, epsilon = float(params['C']), float(params['epsilon'])
    K = rbf_kernel(X, X, gamma)
    # alpha (y = +1) and alpha* (y = -1) stacked into one 2n problem
    y = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - targets, epsilon + targets])
    Q = np.outer(y, y) * np.tile(K, (2, 2))
    alpha, rho, iterations = _smo(Q, p, y, C, float(params['tol']), 100 * 2 * n)
    coef = alpha[:n] - alpha[n:]
    logger.debug(f"SVR converged in {iterations} SMO steps, {int(np.sum(coef != 0))} support vectors")
    return {'X_train': X, 'coef': coef, 'alpha': alpha, 'rho': rho, 'gamma': gamma,
            'C': C, 'epsilon': epsilon, 'iterations': iterations}


def _svm_decision(state: Dict[str, Any], X: np.ndarray) -> np.ndarray:
    K = rbf_kernel(state['X_train'], X, state['gamma'])
    return state['coef'] @ K - state['rho']


def kkt_violations(model: TrainedPredictor) -> np.ndarray:
    """
    Per-sample KKT residuals of a trained SVM classifier on its training set

    alpha = 0 needs y f >= 1, 0 < alpha < C needs y f = 1, alpha = C needs
    y f <= 1; the residual is how far each sample misses its condition.
    """
    if model.spec.family != 'svm' or model.spec.problem != 'classification':
        raise BenchmarkDataError('KKT residuals are defined for SVM classifiers only')
    state = model.state
    margin = state['y_train'] * _svm_decision(state, state['X_train'])
    alpha, C = state['alpha'], state['C']
    return np.where(alpha <= 0, np.maximum(0.0, 1 - margin),
                    np.where(alpha >= C, np.maximum(0.0, margin - 1), np.abs(margin - 1)))


# ---------------------------------------------------------------------------
# Gaussian processes
# ---------------------------------------------------------------------------

def _gp_gamma(params: Dict[str, Any]) -> float:
    return 1.0 / (2.0 * float(params['length_scale']) ** 2)


def _jittered_cholesky(K: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + jitter*I, escalating jitter 1e-10 -> 1e-6"""
    eye = np.eye(len(K))
    for jitter in Config.GP_JITTERS:
        try:
            return cholesky(K + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            logger.debug(f"Kernel matrix not positive definite with jitter {jitter}")
    raise BenchmarkDataError(
        f'kernel matrix is not positive definite even with jitter {Config.GP_JITTERS[-1]}')


def _fit_gpc(X: np.ndarray, labels: np.ndarray, params: Dict[str, Any]) -> Dict[str, Any]:
    """Binary GP classification, Laplace approximation by Newton steps on the mode"""
    order = _canonical_order(X, labels)
    X, labels = X[order], labels[order]
    t = (labels > 0).astype(float)
    gamma = _gp_gamma(params)
    _, jitter = _jittered_cholesky(rbf_kernel(X, X, gamma))
    K = rbf_kernel(X, X, gamma) + jitter * np.eye(len(X))
    max_steps = int(params.get('max_newton_steps', Config.GP_MAX_NEWTON_STEPS))
    mode_tol = float(params.get('mode_tol', Config.GP_MODE_TOL))

    f = np.zeros(len(t))
    grad_norm = np.inf
    steps = 0
    while steps < max_steps and grad_norm > mode_tol:
        pi = expit(f)
        sW = np.sqrt(pi * (1 - pi))
        L = cholesky(np.eye(len(t)) + sW[:, None] * K * sW[None, :], lower=True)
        b = pi * (1 - pi) * f + (t - pi)
        c = solve_triangular(L, sW * (K @ b), lower=True)
        a = b - sW * solve_triangular(L.T, c, lower=False)
        f = K @ a
        # gradient of log p(y|f) - 1/2 f'K^-1 f, with K^-1 f = a
        grad_norm = float(np.linalg.norm((t - expit(f)) - a))
        steps += 1
    if grad_norm > mode_tol:
        logger.warning(f"Laplace mode search stopped after {steps} steps, gradient norm {grad_norm:.2e}")

    pi = expit(f)
    sW = np.sqrt(pi * (1 - pi))
    L = cholesky(np.eye(len(t)) + sW[:, None] * K * sW[None, :], lower=True)
    return {'X_train': X, 'gamma': gamma, 'jitter': jitter, 'residual': t - pi, 'sqrt_w': sW,
            'L': L, 'mode': f, 'newton_steps': steps, 'mode_gradient_norm': grad_norm}


def _gpc_probabilities(state: Dict[str, Any], X: np.ndarray) -> np.ndarray:
    Ks = rbf_kernel(state['X_train'], X, state['gamma'])
    mean = Ks.T @ state['residual']
    v = solve_triangular(state['L'], state['sqrt_w'][:, None] * Ks, lower=True)
    variance = np.maximum(1.0 - np.sum(v ** 2, axis=0), 0.0)
    # E[sigmoid(f)] under N(mean, variance) by Gauss-Hermite quadrature
    nodes, weights = hermgauss(Config.GP_HERMITE_POINTS)
    latent = mean[:, None] + np.sqrt(2 * variance)[:, None] * nodes[None, :]
    return expit(latent) @ weights / np.sqrt(np.pi)


def _fit_gpr(X: np.ndarray, targets: np.ndarray, params: Dict[str, Any]) -> Dict[str, Any]:
    """Exact GP regression around the training-target mean"""
    order = _canonical_order(X, targets)
    X, targets = X[order], targets[order]
    gamma = _gp_gamma(params)
    offset = float(np.mean(targets))
    K = rbf_kernel(X, X, gamma) + float(params['noise']) * np.eye(len(X))
    L, jitter = _jittered_cholesky(K)
    weights = cho_solve((L, True), targets - offset)
    return {'X_train': X, 'gamma': gamma, 'noise': float(params['noise']), 'jitter': jitter,
            'weights': weights, 'offset': offset}


def _gpr_mean(state: Dict[str, Any], X: np.ndarray) -> np.ndarray:
    return rbf_kernel(state['X_train'], X, state['gamma']).T @ state['weights'] + state['offset']


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------

class MLPNetwork:
    """
    Fully connected ReLU network with one output unit

    The output is a logit (sigmoid + binary cross-entropy) for
    classification and a linear value (mean squared error) for regression.
    """

    def __init__(self, sizes: List[int], problem: str, rng: Optional[np.random.Generator] = None,
                 weights: Optional[List[np.ndarray]] = None, biases: Optional[List[np.ndarray]] = None):
        self.sizes = list(sizes)
        self.problem = problem
        if weights is not None:
            self.weights = [np.asarray(w, dtype=float) for w in weights]
            self.biases = [np.asarray(b, dtype=float) for b in biases]
            return
        # Glorot-uniform weights, zero biases
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def parameters(self) -> List[np.ndarray]:
        return self.weights + self.biases

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        """Returns (output, layer inputs, hidden pre-activations)"""
        inputs, pre_activations = [], []
        h = X
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            if layer < len(self.weights) - 1:
                pre_activations.append(z)
                h = np.maximum(z, 0.0)
            else:
                h = z
        return h[:, 0], inputs, pre_activations

    def loss_and_gradients(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, List[np.ndarray]]:
        """Mean loss over the batch and its gradient for every parameter"""
        output, inputs, pre_activations = self.forward(X)
        batch = len(X)
        if self.problem == 'classification':
            loss = float(np.mean(np.logaddexp(0.0, output) - y * output))
            delta = (expit(output) - y) / batch
        else:
            loss = float(np.mean((output - y) ** 2))
            delta = 2.0 * (output - y) / batch

        delta = delta[:, None]
        weight_grads = [None] * len(self.weights)
        bias_grads = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            weight_grads[layer] = inputs[layer].T @ delta
            bias_grads[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre_activations[layer - 1] > 0)
        return loss, weight_grads + bias_grads

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]


class AdamOptimizer:
    """Adam with bias-corrected moment estimates"""

    def __init__(self, parameters: List[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = parameters
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in parameters]
        self.v = [np.zeros_like(p) for p in parameters]
        self.t = 0

    def step(self, gradients: List[np.ndarray]):
        self.t += 1
        for param, grad, m, v in zip(self.parameters, gradients, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad ** 2
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def _fit_mlp(X: np.ndarray, targets: np.ndarray, params: Dict[str, Any], problem: str,
             seed: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    sizes = [X.shape[1], *params['hidden_sizes'], 1]
    network = MLPNetwork(sizes, problem, rng=rng)
    optimizer = AdamOptimizer(network.parameters, float(params['learning_rate']))
    batch_size = int(params['batch_size'])

    loss = float('nan')
    for _ in range(int(params['epochs'])):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            batch = order[start:start + batch_size]
            loss, gradients = network.loss_and_gradients(X[batch], targets[batch])
            optimizer.step(gradients)
    logger.debug(f"MLP trained {params['epochs']} epochs, last batch loss {loss:.4f}")
    return {'sizes': sizes, 'weights': [w.copy() for w in network.weights],
            'biases': [b.copy() for b in network.biases], 'final_batch_loss': loss}


def _mlp_from_state(state: Dict[str, Any], problem: str) -> MLPNetwork:
    return MLPNetwork(state['sizes'], problem, weights=state['weights'], biases=state['biases'])


# ---------------------------------------------------------------------------
# Public training / prediction API
# ---------------------------------------------------------------------------

def train_classifier(spec: PredictorSpec, X, y, seed: Optional[int] = None) -> TrainedPredictor:
    """
    Fit a binary classifier of the PredictorSpec's family

    Args:
        spec: predictor family and hyperparameter overrides
        X: feature matrix, at least 4 rows
        y: labels in {0, 1}, both classes present
        seed: overrides spec.seed when given
    """
    if spec.problem != 'classification':
        raise BenchmarkDataError(f'{spec.spec_id} is not a classification spec')
    X = _as_features(X, rows_min=4)
    labels = np.asarray(y, dtype=float)
    if labels.shape != (len(X),):
        raise BenchmarkDataError('labels must be a vector with one entry per row')
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise BenchmarkDataError('labels must be binary (0/1)')
    if len(np.unique(labels)) < 2:
        raise BenchmarkDataError('single-class labels: both classes are required')

    params = resolve_hyperparameters(spec)
    seed = spec.seed if seed is None else seed
    if spec.family == 'svm':
        state = _fit_svc(X, labels, params)
    elif spec.family == 'gp':
        state = _fit_gpc(X, labels, params)
    else:
        state = _fit_mlp(X, labels, params, 'classification', seed)
    return TrainedPredictor(spec=spec, feature_dim=X.shape[1], hyperparameters=params, state=state)


def train_regressor(spec: PredictorSpec, X, y, seed: Optional[int] = None) -> TrainedPredictor:
    """Fit a regressor of the PredictorSpec's family on targets in [0, 1]"""
    if spec.problem != 'regression':
        raise BenchmarkDataError(f'{spec.spec_id} is not a regression spec')
    X = _as_features(X, rows_min=3)
    targets = np.asarray(y, dtype=float)
    if targets.shape != (len(X),):
        raise BenchmarkDataError('targets must be a vector with one entry per row')
    if not np.all(np.isfinite(targets)):
        raise BenchmarkDataError('non-finite regression targets')

    params = resolve_hyperparameters(spec)
    seed = spec.seed if seed is None else seed
    if spec.family == 'svm':
        state = _fit_svr(X, targets, params)
    elif spec.family == 'gp':
        state = _fit_gpr(X, targets, params)
    else:
        state = _fit_mlp(X, targets, params, 'regression', seed)
    return TrainedPredictor(spec=spec, feature_dim=X.shape[1], hyperparameters=params, state=state)


def _check_input(model: TrainedPredictor, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, model.feature_dim)
    X = _as_features(X)
    if X.shape[1] != model.feature_dim:
        raise BenchmarkDataError(f'dimension mismatch: model expects {model.feature_dim} features, '
                                 f'got {X.shape[1]}')
    return X


def predict(model: TrainedPredictor, X) -> Tuple[np.ndarray, np.ndarray]:
    """
    Labels and monotone confidence scores of a trained classifier

    Scores are SVM decision values (label threshold 0) or probabilities
    from the GP / MLP (threshold 0.5).
    """
    if model.spec.problem != 'classification':
        raise BenchmarkDataError(f'{model.spec.spec_id} is not a classifier; use predict_values')
    X = _check_input(model, X)
    if len(X) == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    if model.spec.family == 'svm':
        scores, threshold = _svm_decision(model.state, X), 0.0
    elif model.spec.family == 'gp':
        scores, threshold = _gpc_probabilities(model.state, X), 0.5
    else:
        scores, threshold = expit(_mlp_from_state(model.state, 'classification').predict_raw(X)), 0.5
    return (scores > threshold).astype(int), scores


def predict_values(model: TrainedPredictor, X) -> np.ndarray:
    """Raw (unclipped) regression outputs"""
    if model.spec.problem != 'regression':
        raise BenchmarkDataError(f'{model.spec.spec_id} is not a regressor; use predict')
    X = _check_input(model, X)
    if len(X) == 0:
        return np.zeros(0)
    if model.spec.family == 'svm':
        return _svm_decision(model.state, X)
    if model.spec.family == 'gp':
        return _gpr_mean(model.state, X)
    return _mlp_from_state(model.state, 'regression').predict_raw(X)
