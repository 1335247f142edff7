"""
Benchmark compression module
Public/private task splits, the comparison and score-estimation datasets
built from them, per-split evaluation and the search/profile experiments
"""
import logging
import math
import time
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.pydantic_schemas import (CompressionProfile, Leaderboard, MetricSummary, PairDataset,
                                     PredictorSpec, RateSummary, RegDataset, RowSplit, SplitResult,
                                     SplitSpec)
from scripts.config import Config
from scripts.errors import BenchmarkDataError
from scripts.metrics import (CLASSIFICATION_METRICS, REGRESSION_METRICS, ci95, classification_metrics,
                             lower_is_better, parametric_ci95, regression_metrics)
from scripts.predictors import predict, predict_values, train_classifier, train_regressor

logger = logging.getLogger(__name__)


class RowPolicy(BaseModel):
    """How model rows are split into train/validation, possibly repeatedly"""
    model_config = ConfigDict(frozen=True)

    ratio: float = Field(Config.ROW_SPLIT_RATIO, gt=0, lt=1)
    seed: int = Field(Config.SEED, ge=0)
    repeats: int = Field(Config.ROW_SPLIT_REPEATS, ge=1)

    def row_splits(self, n_models: int) -> List[RowSplit]:
        """One row split per repeat, seeded seed, seed + 1, ..."""
        return [make_row_split(n_models, self.ratio, self.seed + r) for r in range(self.repeats)]


Rows = Union[RowSplit, Sequence[RowSplit], RowPolicy]


# ---------------------------------------------------------------------------
# Task and row splits
# ---------------------------------------------------------------------------

def _split_from_public(public: Iterable[int], n_tasks: int) -> SplitSpec:
    public = tuple(sorted(public))
    chosen = set(public)
    return SplitSpec(public_tasks=public,
                     private_tasks=tuple(i for i in range(n_tasks) if i not in chosen))


def enumerate_splits(n_tasks: int) -> List[SplitSpec]:
    """All 2^n - 2 public/private splits; public set i has bitmask i"""
    if n_tasks < 2:
        raise BenchmarkDataError(f'need >= 2 tasks to split, got {n_tasks}')
    if n_tasks > Config.ENUMERATION_CAP:
        raise BenchmarkDataError(
            f'{n_tasks} tasks exceed the enumeration cap {Config.ENUMERATION_CAP}; sample splits instead')
    return [_split_from_public((i for i in range(n_tasks) if mask >> i & 1), n_tasks)
            for mask in range(1, 2 ** n_tasks - 1)]


def sample_splits(n_tasks: int, per_rate: int, seed: int) -> List[SplitSpec]:
    """
    Up to `per_rate` distinct public sets of every size 1..n-1

    Sizes whose census C(n, k) fits the budget are enumerated in bitmask
    order; larger ones are drawn uniformly without repetition.
    """
    if n_tasks < 2:
        raise BenchmarkDataError(f'need >= 2 tasks to split, got {n_tasks}')
    if per_rate < 1:
        raise BenchmarkDataError(f'per_rate must be positive, got {per_rate}')
    rng = np.random.default_rng(seed)
    splits = []
    for k in range(1, n_tasks):
        if math.comb(n_tasks, k) <= per_rate:
            subsets = sorted(combinations(range(n_tasks), k), key=lambda s: sum(1 << i for i in s))
        else:
            seen = set()
            subsets = []
            while len(subsets) < per_rate:
                subset = tuple(sorted(int(i) for i in rng.choice(n_tasks, size=k, replace=False)))
                if subset not in seen:
                    seen.add(subset)
                    subsets.append(subset)
        splits.extend(_split_from_public(subset, n_tasks) for subset in subsets)
    return splits


def candidate_splits(n_tasks: int, sizes: Iterable[int], samples_per_rate: Optional[int] = None,
                     seed: int = 0) -> List[SplitSpec]:
    """Splits with the given public sizes, enumerated when possible"""
    sizes = set(sizes)
    if samples_per_rate is None and n_tasks > Config.ENUMERATION_CAP:
        samples_per_rate = Config.FALLBACK_SAMPLES_PER_RATE
        logger.warning(f"{n_tasks} tasks exceed the enumeration cap, sampling {samples_per_rate} splits per rate")
    if samples_per_rate is None:
        splits = enumerate_splits(n_tasks)
    else:
        splits = sample_splits(n_tasks, samples_per_rate, seed)
    return [split for split in splits if split.public_size in sizes]


def make_row_split(n_models: int, ratio: float, seed: int) -> RowSplit:
    """Seeded shuffle cut at round(ratio * n), keeping >= 2 rows per side"""
    if n_models < 4:
        raise BenchmarkDataError(f'need >= 4 models for a row split, got {n_models}')
    if not 0 < ratio < 1:
        raise BenchmarkDataError(f'ratio must lie in (0, 1), got {ratio}')
    order = np.random.default_rng(seed).permutation(n_models)
    cut = min(max(int(round(ratio * n_models)), 2), n_models - 2)
    return RowSplit(train_rows=tuple(sorted(int(i) for i in order[:cut])),
                    val_rows=tuple(sorted(int(i) for i in order[cut:])))


def _resolve_rows(lb: Leaderboard, rows: Rows) -> List[RowSplit]:
    if isinstance(rows, RowPolicy):
        return rows.row_splits(lb.n_models)
    if isinstance(rows, RowSplit):
        return [rows]
    return list(rows)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def _check_inputs(lb: Leaderboard, split: SplitSpec, rows: RowSplit):
    if split.n_tasks != lb.n_tasks:
        raise BenchmarkDataError(f'split covers {split.n_tasks} tasks, board has {lb.n_tasks}')
    if rows.n_models != lb.n_models:
        raise BenchmarkDataError(f'row split covers {rows.n_models} models, board has {lb.n_models}')
    if not lb.normalized:
        logger.warning(f"{lb.name}: building datasets from un-normalized scores")


def private_averages(lb: Leaderboard, split: SplitSpec) -> np.ndarray:
    """Mean private-task score of every model"""
    return lb.scores[:, list(split.private_tasks)].mean(axis=1)


def build_pair_dataset(lb: Leaderboard, split: SplitSpec, rows: RowSplit,
                       drop_ties: bool = False) -> PairDataset:
    """
    Model-comparison dataset

    Every pair (i, j), i < j, of the same row set becomes the feature
    concat(public_i, public_j) with label 1 iff avg(private_i) < avg(private_j).
    Tied averages are labeled 0 unless drop_ties removes them.
    """
    _check_inputs(lb, split, rows)
    public = lb.scores[:, list(split.public_tasks)]
    averages = private_averages(lb, split)

    def build(row_set: Sequence[int]):
        pairs = [(i, j) for i, j in combinations(sorted(row_set), 2)
                 if not (drop_ties and averages[i] == averages[j])]
        X = np.array([np.concatenate([public[i], public[j]]) for i, j in pairs]).reshape(
            len(pairs), 2 * split.public_size)
        y = np.array([1 if averages[i] < averages[j] else 0 for i, j in pairs], dtype=int)
        return X, y, tuple(pairs)

    X_tr, y_tr, pairs_tr = build(rows.train_rows)
    X_val, y_val, pairs_val = build(rows.val_rows)
    return PairDataset(X_tr=X_tr, y_tr=y_tr, X_val=X_val, y_val=y_val,
                       pairs_tr=pairs_tr, pairs_val=pairs_val)


def build_reg_dataset(lb: Leaderboard, split: SplitSpec, rows: RowSplit) -> RegDataset:
    """Score-estimation dataset: public row -> mean private score"""
    _check_inputs(lb, split, rows)
    public = lb.scores[:, list(split.public_tasks)]
    averages = private_averages(lb, split)
    train, val = list(rows.train_rows), list(rows.val_rows)
    return RegDataset(X_tr=public[train], y_tr=averages[train], X_val=public[val], y_val=averages[val],
                      rows_tr=rows.train_rows, rows_val=rows.val_rows)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate_split(lb: Leaderboard, split: SplitSpec, spec: PredictorSpec, rows: Rows,
                   drop_ties: bool = False) -> SplitResult:
    """
    Train on the training rows, score on the validation rows

    With several row splits the validation predictions of every repeat are
    pooled before the metrics are computed. Repeats with too few training
    rows, single-class labels or constant regression targets are skipped
    with a warning; a split with no usable repeat comes back with `skipped_reason` set.
    """
    row_splits = _resolve_rows(lb, rows)
    base = dict(split=split, predictor=spec, compression_rate=split.compression_rate,
                public_task_names=tuple(lb.task_names[i] for i in split.public_tasks))
    public_names = ','.join(base['public_task_names'])

    truths, predictions, scores = [], [], []
    reason = None
    for repeat, row_split in enumerate(row_splits):
        if spec.problem == 'classification':
            data = build_pair_dataset(lb, split, row_split, drop_ties=drop_ties)
            if len(data.y_tr) < 4:
                reason = 'too few training rows'
            elif len(np.unique(data.y_tr)) < 2:
                reason = 'single-class training labels'
            elif len(np.unique(data.y_val)) < 2:
                reason = 'single-class validation labels'
            else:
                model = train_classifier(spec, data.X_tr, data.y_tr, seed=spec.seed + repeat)
                labels, values = predict(model, data.X_val)
                truths.append(data.y_val)
                predictions.append(labels)
                scores.append(values)
                continue
        else:
            data = build_reg_dataset(lb, split, row_split)
            if len(data.y_tr) < 3:
                reason = 'too few training rows'
            elif np.ptp(data.y_val) == 0:
                reason = 'constant validation targets'
            else:
                model = train_regressor(spec, data.X_tr, data.y_tr, seed=spec.seed + repeat)
                truths.append(data.y_val)
                predictions.append(predict_values(model, data.X_val))
                continue
        logger.warning(f"{lb.name}: skipping [{public_names}] / {spec.spec_id} repeat {repeat}: {reason}")

    if not truths:
        return SplitResult(**base, skipped_reason=reason)

    truth = np.concatenate(truths)
    if spec.problem == 'classification':
        report = classification_metrics(truth, np.concatenate(predictions), np.concatenate(scores))
        return SplitResult(**base, classification=report, n_val=len(truth))
    report = regression_metrics(truth, np.concatenate(predictions))
    return SplitResult(**base, regression=report, n_val=len(truth))


def evaluate_splits(lb: Leaderboard, splits: Sequence[SplitSpec], specs: Sequence[PredictorSpec],
                    rows: Rows) -> List[SplitResult]:
    """Every (split, spec) combination, in split order then spec order"""
    row_splits = _resolve_rows(lb, rows)
    results = [evaluate_split(lb, split, spec, row_splits) for split in splits for spec in specs]
    skipped = sum(result.degenerate for result in results)
    logger.info(f"{lb.name}: evaluated {len(results) - skipped} split/predictor pairs, {skipped} skipped")
    return results


def _check_metric(metric: str):
    if metric not in CLASSIFICATION_METRICS + REGRESSION_METRICS:
        raise BenchmarkDataError(f'unknown metric {metric!r}')


def _oriented(metric: str, value: float) -> float:
    """Larger is better after orientation"""
    return -value if lower_is_better(metric) else value


def _pick_best(results: Sequence[SplitResult], specs: Sequence[PredictorSpec],
               metric: str) -> Optional[SplitResult]:
    """Best metric value; ties go to the smaller public set, then bitmask, then spec order"""
    specs = list(specs)
    candidates = [r for r in results if r.metric(metric) is not None]
    if not candidates:
        return None
    return min(candidates, key=lambda r: (-_oriented(metric, r.metric(metric)), r.split.public_size,
                                          r.split.bitmask, specs.index(r.predictor)))


def _searchable_sizes(n_tasks: int, max_compression: float) -> range:
    largest = math.floor(max_compression * n_tasks + 1e-9)
    if largest < 1:
        raise BenchmarkDataError(
            f'max_compression {max_compression} < 1/{n_tasks}: no split has a small enough public set')
    return range(1, min(largest, n_tasks - 1) + 1)


def best_split_under_compression(lb: Leaderboard, max_compression: float, specs: Sequence[PredictorSpec],
                                 target_metric: str, rows: Rows, samples_per_rate: Optional[int] = None,
                                 seed: int = 0) -> SplitResult:
    """The split/predictor with the best target metric among |public|/n <= max_compression"""
    _check_metric(target_metric)
    splits = candidate_splits(lb.n_tasks, _searchable_sizes(lb.n_tasks, max_compression),
                              samples_per_rate, seed)
    results = evaluate_splits(lb, splits, specs, rows)
    best = _pick_best(results, specs, target_metric)
    if best is None:
        raise BenchmarkDataError(
            f'no evaluated split reports {target_metric!r} (all degenerate or wrong problem type)')
    logger.info(f"{lb.name}: best {target_metric} = {best.metric(target_metric):.4f} with "
                f"[{','.join(best.public_task_names)}] ({best.predictor.spec_id})")
    return best


def _meets(metric: str, value: float, threshold: float) -> bool:
    return value <= threshold if lower_is_better(metric) else value >= threshold


def min_public_subset(lb: Leaderboard, spec: PredictorSpec, metric: str, threshold: float, rows: Rows,
                      samples_per_rate: Optional[int] = None, seed: int = 0) -> Optional[SplitResult]:
    """
    Smallest public set whose predictor reaches the threshold

    Public sizes are scanned ascending, splits of one size in bitmask
    order; the first qualifying split is returned, None when none does.
    """
    _check_metric(metric)
    row_splits = _resolve_rows(lb, rows)
    splits = candidate_splits(lb.n_tasks, range(1, lb.n_tasks), samples_per_rate, seed)
    splits = sorted(splits, key=lambda s: (s.public_size, s.bitmask))
    for split in splits:
        result = evaluate_split(lb, split, spec, row_splits)
        value = result.metric(metric)
        if value is not None and _meets(metric, value, threshold):
            logger.info(f"{lb.name}: {metric} {value:.4f} meets {threshold} with "
                        f"{split.public_size} public task(s) [{','.join(result.public_task_names)}]")
            return result
    logger.info(f"{lb.name}: no public subset reaches {metric} {threshold}")
    return None


# ---------------------------------------------------------------------------
# Profiles and tables
# ---------------------------------------------------------------------------

def summarize(values: Sequence[float]) -> MetricSummary:
    """Mean with percentile and parametric 95% intervals"""
    mean = float(np.mean(values))
    low, high = ci95(values)
    parametric_low, parametric_high = parametric_ci95(values)
    return MetricSummary(count=len(values), mean=mean, ci_low=min(low, mean), ci_high=max(high, mean),
                         parametric_low=parametric_low, parametric_high=parametric_high)


def _metric_names(spec: PredictorSpec) -> Tuple[str, ...]:
    return CLASSIFICATION_METRICS if spec.problem == 'classification' else REGRESSION_METRICS


def _profile_values(lb: Leaderboard, specs: Sequence[PredictorSpec], rows: Rows, seed: int,
                    samples_per_rate: Optional[int]) -> Dict[int, Tuple[Dict[str, Dict[str, List[float]]], int, int]]:
    """public size -> (spec id -> metric -> values, evaluated, skipped)"""
    row_splits = _resolve_rows(lb, rows)
    splits = candidate_splits(lb.n_tasks, range(1, lb.n_tasks), samples_per_rate, seed)
    by_size = {}
    for k in range(1, lb.n_tasks):
        results = evaluate_splits(lb, [s for s in splits if s.public_size == k], specs, row_splits)
        values = {}
        for result in results:
            if result.degenerate:
                continue
            per_metric = values.setdefault(result.predictor.spec_id, {})
            for metric in _metric_names(result.predictor):
                per_metric.setdefault(metric, []).append(result.metric(metric))
        skipped = sum(result.degenerate for result in results)
        by_size[k] = (values, len(results) - skipped, skipped)
    return by_size


def compression_profile(lb: Leaderboard, specs: Sequence[PredictorSpec], rows: Rows, seed: int = 0,
                        samples_per_rate: Optional[int] = None) -> CompressionProfile:
    """Per compression rate, every metric of every predictor with 95% intervals"""
    rates = []
    for k, (values, evaluated, skipped) in _profile_values(lb, specs, rows, seed, samples_per_rate).items():
        metrics = {spec_id: {metric: summarize(sample) for metric, sample in per_metric.items()}
                   for spec_id, per_metric in values.items()}
        rates.append(RateSummary(rate=k / lb.n_tasks, public_size=k, n_evaluated=evaluated,
                                 n_skipped=skipped, metrics=metrics))
    return CompressionProfile(n_tasks=lb.n_tasks, rates=tuple(rates))


def pooled_profile(boards: Sequence[Leaderboard], specs: Sequence[PredictorSpec], rows: RowPolicy,
                   seed: int = 0, samples_per_rate: Optional[int] = None,
                   pooling: str = 'pool') -> CompressionProfile:
    """
    Profile of several benchmarks with the same task count

    'pool' aggregates every split metric across benchmarks; 'benchmark'
    averages within each benchmark first and aggregates those means.
    """
    if pooling not in ('pool', 'benchmark'):
        raise BenchmarkDataError(f'unknown pooling {pooling!r}')
    if not boards:
        raise BenchmarkDataError('no leaderboards to profile')
    n_tasks = {board.n_tasks for board in boards}
    if len(n_tasks) != 1:
        raise BenchmarkDataError(f'pooled profiles need one task count, got {sorted(n_tasks)}')
    n_tasks = n_tasks.pop()

    pooled = {k: ({}, 0, 0) for k in range(1, n_tasks)}
    for board in boards:
        for k, (values, evaluated, skipped) in _profile_values(board, specs, rows, seed,
                                                               samples_per_rate).items():
            merged, total_evaluated, total_skipped = pooled[k]
            for spec_id, per_metric in values.items():
                for metric, sample in per_metric.items():
                    target = merged.setdefault(spec_id, {}).setdefault(metric, [])
                    if pooling == 'pool':
                        target.extend(sample)
                    else:
                        target.append(float(np.mean(sample)))
            pooled[k] = (merged, total_evaluated + evaluated, total_skipped + skipped)

    rates = []
    for k, (values, evaluated, skipped) in pooled.items():
        metrics = {spec_id: {metric: summarize(sample) for metric, sample in per_metric.items()}
                   for spec_id, per_metric in values.items()}
        rates.append(RateSummary(rate=k / n_tasks, public_size=k, n_evaluated=evaluated,
                                 n_skipped=skipped, metrics=metrics))
    return CompressionProfile(n_tasks=n_tasks, rates=tuple(rates))


def best_split_table(boards: Sequence[Leaderboard], specs: Sequence[PredictorSpec], max_compression: float,
                     target_metrics: Sequence[str], rows: RowPolicy, seed: int = 0,
                     samples_per_rate: Optional[int] = None) -> Dict[str, Dict[str, Dict]]:
    """
    Best split per benchmark for every (predictor, metric), averaged over benchmarks

    Returns:
        spec id -> metric -> {'mean', 'per_benchmark': {board name: value}}
    """
    for metric in target_metrics:
        _check_metric(metric)
    table = {}
    for board in boards:
        splits = candidate_splits(board.n_tasks, _searchable_sizes(board.n_tasks, max_compression),
                                  samples_per_rate, seed)
        results = evaluate_splits(board, splits, specs, rows)
        for spec in specs:
            own = [r for r in results if r.predictor == spec]
            for metric in target_metrics:
                if metric not in _metric_names(spec):
                    continue
                best = _pick_best(own, [spec], metric)
                if best is None:
                    logger.warning(f"{board.name}: no usable split for {spec.spec_id} / {metric}")
                    continue
                entry = table.setdefault(spec.spec_id, {}).setdefault(metric, {'per_benchmark': {}})
                entry['per_benchmark'][board.name] = best.metric(metric)
    for per_metric in table.values():
        for entry in per_metric.values():
            entry['mean'] = float(np.mean(list(entry['per_benchmark'].values())))
    return table


class CompressionExperiment:
    """Runs the search, threshold and profile experiments for a CLI run"""

    def __init__(self, specs: Sequence[PredictorSpec], row_policy: RowPolicy = None,
                 samples_per_rate: Optional[int] = None):
        self.config = Config()
        self.specs = list(specs)
        self.row_policy = row_policy or RowPolicy()
        self.samples_per_rate = samples_per_rate or self.config.SAMPLES_PER_RATE

    def _banner(self, title: str):
        logger.info("=" * 60)
        logger.info(title)
        logger.info("=" * 60)

    def search_pipeline(self, boards: Sequence[Leaderboard], max_compression: float, metric: str) -> Dict:
        """Best split under the compression bound, per board plus a cross-board table"""
        self._banner("Starting Compression Search")
        start_time = time.time()
        best = {board.name: best_split_under_compression(board, max_compression, self.specs, metric,
                                                         self.row_policy, self.samples_per_rate,
                                                         self.row_policy.seed)
                for board in boards}
        table = None
        if len(boards) > 1:
            metrics = [m for m in CLASSIFICATION_METRICS + REGRESSION_METRICS
                       if any(m in _metric_names(spec) for spec in self.specs)]
            table = best_split_table(boards, self.specs, max_compression, metrics, self.row_policy,
                                     self.row_policy.seed, self.samples_per_rate)
        self._banner("Compression Search Completed")
        logger.info(f"Boards: {len(boards)}, duration: {time.time() - start_time:.2f}s")
        return {'success': True, 'best': best, 'table': table}

    def threshold_pipeline(self, board: Leaderboard, metric: str, threshold: float) -> Dict:
        """Smallest public set per predictor reaching the threshold"""
        self._banner("Starting Minimal Public Set Search")
        found = {spec.spec_id: min_public_subset(board, spec, metric, threshold, self.row_policy,
                                                 self.samples_per_rate, self.row_policy.seed)
                 for spec in self.specs}
        self._banner("Minimal Public Set Search Completed")
        return {'success': True, 'found': found}

    def profile_pipeline(self, boards: Sequence[Leaderboard], pooling: str = 'pool') -> Dict:
        """Per-rate confidence profile of one board or several pooled boards"""
        self._banner("Starting Compression Profile")
        start_time = time.time()
        if len(boards) == 1:
            profile = compression_profile(boards[0], self.specs, self.row_policy, self.row_policy.seed,
                                          self.samples_per_rate)
        else:
            profile = pooled_profile(boards, self.specs, self.row_policy, self.row_policy.seed,
                                     self.samples_per_rate, pooling)
        self._banner("Compression Profile Completed")
        logger.info(f"Rates: {len(profile.rates)}, duration: {time.time() - start_time:.2f}s")
        return {'success': True, 'profile': profile}
