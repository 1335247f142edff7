"""
Metrics module
Quality metrics for the model-comparison and score-estimation problems,
and confidence-interval summaries over many splits
"""
import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import (accuracy_score, f1_score, max_error, mean_absolute_error, mean_squared_error,
                             precision_score, r2_score, recall_score, roc_auc_score)

from models.pydantic_schemas import ClassificationReport, RegressionReport, TOLERANCE
from scripts.errors import BenchmarkDataError

logger = logging.getLogger(__name__)

ERROR_METRICS = ('mse', 'rmse', 'mae', 'max_error')
CLASSIFICATION_METRICS = ('accuracy', 'f1', 'precision', 'recall', 'roc_auc')
REGRESSION_METRICS = ('mse', 'rmse', 'mae', 'max_error', 'r2', 'r2_clamped')


def lower_is_better(metric: str) -> bool:
    return metric in ERROR_METRICS


def _vectors(*arrays) -> List[np.ndarray]:
    vectors = [np.asarray(a, dtype=float).ravel() for a in arrays]
    if len({len(v) for v in vectors}) != 1:
        raise BenchmarkDataError(f'length mismatch: {[len(v) for v in vectors]}')
    if len(vectors[0]) == 0:
        raise BenchmarkDataError('need at least one sample')
    return vectors


def _warn_undefined(name: str) -> None:
    logger.warning(f"{name} undefined (zero denominator), reported as 0")


def roc_auc(labels_true, scores) -> float:
    """P(score of a random positive > score of a random negative), ties 1/2"""
    labels, values = _vectors(labels_true, scores)
    if len(np.unique(labels)) < 2:
        raise BenchmarkDataError('ROC-AUC needs both classes in labels_true')
    return float(roc_auc_score(labels, values))


def classification_metrics(labels_true, labels_pred, scores) -> ClassificationReport:
    """Accuracy, F1, precision, recall and ROC-AUC with positive class 1"""
    truth, predicted, values = _vectors(labels_true, labels_pred, scores)
    for name, vector in (('labels_true', truth), ('labels_pred', predicted)):
        if not np.all(np.isin(vector, (0.0, 1.0))):
            raise BenchmarkDataError(f'{name} must be binary (0/1)')
    truth, predicted = truth.astype(int), predicted.astype(int)

    true_positives = int(np.sum((predicted == 1) & (truth == 1)))
    if not np.any(predicted == 1):
        _warn_undefined('precision')
    if not np.any(truth == 1):
        _warn_undefined('recall')
    if true_positives == 0:
        _warn_undefined('f1')
    if len(np.unique(truth)) < 2:
        logger.warning("ROC-AUC undefined on single-class labels, reported as 0.5")
        auc = 0.5
    else:
        auc = roc_auc(truth, values)

    return ClassificationReport(
        accuracy=float(accuracy_score(truth, predicted)),
        f1=float(f1_score(truth, predicted, zero_division=0)),
        precision=float(precision_score(truth, predicted, zero_division=0)),
        recall=float(recall_score(truth, predicted, zero_division=0)),
        roc_auc=auc,
    )


def regression_metrics(y_true, y_pred) -> RegressionReport:
    """MSE, RMSE, MAE, max error and R^2 (raw and clamped at 0)"""
    truth, predicted = _vectors(y_true, y_pred)
    if len(truth) < 2:
        raise BenchmarkDataError('regression metrics need at least 2 samples')
    if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(predicted))):
        raise BenchmarkDataError('non-finite regression values')
    if np.ptp(truth) == 0:
        raise BenchmarkDataError('R^2 undefined: y_true is constant')

    mse = float(mean_squared_error(truth, predicted))
    r2 = float(r2_score(truth, predicted))
    return RegressionReport(
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(mean_absolute_error(truth, predicted)),
        max_error=float(max_error(truth, predicted)),
        r2=r2,
        r2_clamped=max(r2, 0.0),
    )


def ci95(values: Sequence[float]) -> Tuple[float, float]:
    """Empirical 2.5th and 97.5th percentiles, linear interpolation"""
    sample = np.asarray(values, dtype=float)
    if sample.size == 0:
        raise BenchmarkDataError('ci95 of an empty sequence')
    low, high = np.percentile(sample, [2.5, 97.5])
    return float(low), float(high)


def parametric_ci95(values: Sequence[float]) -> Tuple[float, float]:
    """mean +- 1.96 * sd / sqrt(n), sample standard deviation (0 for n = 1)"""
    sample = np.asarray(values, dtype=float)
    if sample.size == 0:
        raise BenchmarkDataError('parametric_ci95 of an empty sequence')
    mean = float(sample.mean())
    if sample.size == 1:
        return mean, mean
    half_width = 1.96 * float(sample.std(ddof=1)) / math.sqrt(sample.size)
    return mean - half_width, mean + half_width


def check_reference_report(values: Dict[str, float]) -> List[str]:
    """
    Consistency problems in an imported regression report row

    Published tables sometimes carry RMSE and MSE values that cannot come
    from one evaluation; every broken identity is returned and logged.
    """
    problems = []
    mse, rmse = values.get('mse'), values.get('rmse')
    mae, max_error = values.get('mae'), values.get('max_error')
    if mse is not None and rmse is not None and not math.isclose(
            rmse ** 2, mse, rel_tol=1e-6, abs_tol=TOLERANCE):
        problems.append(f'rmse^2 = {rmse ** 2:.6g} but mse = {mse:.6g}')
    if mae is not None and rmse is not None and mae > rmse + TOLERANCE:
        problems.append(f'mae {mae:.6g} exceeds rmse {rmse:.6g}')
    if rmse is not None and max_error is not None and rmse > max_error + TOLERANCE:
        problems.append(f'rmse {rmse:.6g} exceeds max_error {max_error:.6g}')
    r2 = values.get('r2')
    if r2 is not None and r2 > 1 + TOLERANCE:
        problems.append(f'r2 {r2:.6g} exceeds 1')
    for problem in problems:
        logger.warning(f"Inconsistent reference report: {problem}")
    return problems
