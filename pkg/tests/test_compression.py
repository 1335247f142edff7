"""Unit tests for the benchmark compression module"""

import math

import numpy as np
import pytest

from models.pydantic_schemas import Leaderboard, PredictorSpec, RowSplit, SplitSpec
from scripts.compression import (CompressionExperiment, RowPolicy, best_split_table,
                                 best_split_under_compression, build_pair_dataset, build_reg_dataset,
                                 candidate_splits, compression_profile, enumerate_splits, evaluate_split,
                                 evaluate_splits, make_row_split, min_public_subset, pooled_profile,
                                 sample_splits)
from scripts.errors import BenchmarkDataError

SVM = PredictorSpec(family='svm', problem='classification')
SVR = PredictorSpec(family='svm', problem='regression')


def make_board(scores, name='bench'):
    scores = np.asarray(scores, dtype=float)
    n_models, n_tasks = scores.shape
    return Leaderboard(name=name, model_names=tuple(f'm{i}' for i in range(n_models)),
                       task_names=tuple(f't{j}' for j in range(n_tasks)), scores=scores,
                       metric_name_per_task=('accuracy',) * n_tasks, normalized=True)


def signal_board(n_models=40, n_public=4, seed=0, name='signal'):
    """Public columns track a latent skill; private columns are noisy copies of them"""
    rng = np.random.default_rng(seed)
    skill = rng.permutation(np.linspace(0.05, 0.95, n_models))
    public = np.clip(skill[:, None] + rng.normal(0, 0.01, size=(n_models, n_public)), 0, 1)
    private = np.clip(public + rng.normal(0, 0.02, size=public.shape), 0, 1)
    return make_board(np.hstack([public, private]), name=name)


def null_board(n_models=40, n_tasks=8, seed=1):
    """Independent uniform scores: nothing to learn"""
    return make_board(np.random.default_rng(seed).uniform(size=(n_models, n_tasks)), name='null')


def half_split(n_tasks):
    half = n_tasks // 2
    return SplitSpec(public_tasks=tuple(range(half)), private_tasks=tuple(range(half, n_tasks)))


def fitted(family, problem):
    """Specs with enough MLP training budget to converge on the fixtures"""
    hyperparameters = {'epochs': 200, 'learning_rate': 5e-3} if family == 'mlp' else {}
    return PredictorSpec(family=family, problem=problem, hyperparameters=hyperparameters)


@pytest.fixture
def small_board():
    """4 models x 3 tasks; public task 0, private tasks 1 and 2"""
    return make_board([[0.9, 0.4, 0.6],
                       [0.8, 0.6, 0.8],
                       [0.3, 0.1, 0.2],
                       [0.5, 0.9, 0.7]])


def test_enumerate_splits_counts():
    """Test 2^n - 2 splits"""
    assert len(enumerate_splits(3)) == 6
    assert len(enumerate_splits(2)) == 2


def test_enumerate_splits_valid_and_ordered():
    """Test the partition invariant and bitmask order"""
    splits = enumerate_splits(5)
    for mask, split in enumerate(splits, start=1):
        assert set(split.public_tasks) | set(split.private_tasks) == set(range(5))
        assert not set(split.public_tasks) & set(split.private_tasks)
        assert split.bitmask == mask


def test_enumerate_splits_bounds():
    """Test too few tasks and the enumeration cap"""
    with pytest.raises(BenchmarkDataError):
        enumerate_splits(1)
    with pytest.raises(BenchmarkDataError, match='enumeration cap'):
        enumerate_splits(21)


def test_sample_splits_census():
    """Test that sampling cannot exceed the number of splits"""
    assert len(sample_splits(3, per_rate=10, seed=0)) == 6


def test_sample_splits_deterministic():
    """Test the same seed twice"""
    assert sample_splits(12, per_rate=4, seed=3) == sample_splits(12, per_rate=4, seed=3)


def test_sample_splits_large():
    """Test 24 rates x 5 distinct splits for 25 tasks"""
    splits = sample_splits(25, per_rate=5, seed=0)
    assert len(splits) == 120
    for k in range(1, 25):
        public_sets = [s.public_tasks for s in splits if s.public_size == k]
        assert len(public_sets) == 5
        assert len(set(public_sets)) == 5


def test_candidate_splits_filters_sizes():
    """Test restriction to the searchable public sizes"""
    splits = candidate_splits(9, range(1, 4))
    assert {s.public_size for s in splits} == {1, 2, 3}
    assert len(splits) == 9 + 36 + 84


def test_make_row_split():
    """Test the 70/30 cut"""
    rows = make_row_split(10, 0.7, seed=0)
    assert len(rows.train_rows) == 7
    assert len(rows.val_rows) == 3
    assert make_row_split(10, 0.7, seed=0) == rows


def test_make_row_split_minimum_sides():
    """Test the adjustment to two rows per side"""
    rows = make_row_split(4, 0.9, seed=1)
    assert (len(rows.train_rows), len(rows.val_rows)) == (2, 2)


def test_make_row_split_too_few_models():
    """Test n = 3"""
    with pytest.raises(BenchmarkDataError):
        make_row_split(3, 0.7, seed=0)


def test_pair_dataset_sizes():
    """Test |pairs(A)| = |A|(|A| - 1)/2 and the feature dimension"""
    board = null_board(n_models=6, n_tasks=4)
    rows = RowSplit(train_rows=(0, 2, 3, 5), val_rows=(1, 4))
    data = build_pair_dataset(board, half_split(4), rows)
    assert data.X_tr.shape == (6, 4)
    assert data.X_val.shape == (1, 4)


def test_pair_dataset_label(small_board):
    """Test that a lower private average gives label 1"""
    split = SplitSpec(public_tasks=(0,), private_tasks=(1, 2))
    data = build_pair_dataset(small_board, split, RowSplit(train_rows=(0, 1), val_rows=(2, 3)))
    assert data.pairs_tr == ((0, 1),)
    # avg private: model 0 -> 0.5, model 1 -> 0.7
    assert data.y_tr.tolist() == [1]
    np.testing.assert_allclose(data.X_tr[0], [0.9, 0.8])


def test_pair_dataset_ties_labeled_zero():
    """Test the strict comparison on tied private averages, and drop_ties"""
    board = make_board([[0.1, 0.5], [0.2, 0.5], [0.3, 0.5], [0.4, 0.5]])
    split = SplitSpec(public_tasks=(0,), private_tasks=(1,))
    rows = RowSplit(train_rows=(0, 1), val_rows=(2, 3))
    assert build_pair_dataset(board, split, rows).y_tr.tolist() == [0]
    assert len(build_pair_dataset(board, split, rows, drop_ties=True).pairs_tr) == 0


def test_pair_dataset_no_leakage():
    """Test that validation features come only from validation rows"""
    board = null_board(n_models=12, n_tasks=5)
    split = SplitSpec(public_tasks=(1, 3), private_tasks=(0, 2, 4))
    rows = make_row_split(12, 0.7, seed=2)
    data = build_pair_dataset(board, split, rows)
    public = board.scores[:, [1, 3]]
    for (i, j), features in zip(data.pairs_val, data.X_val):
        assert i in rows.val_rows and j in rows.val_rows
        np.testing.assert_array_equal(features, np.concatenate([public[i], public[j]]))
    for i, j in data.pairs_tr:
        assert i in rows.train_rows and j in rows.train_rows


def test_pair_labels_match_private_averages():
    """Test every label against recomputed private averages on small boards"""
    for seed in range(5):
        board = null_board(n_models=6, n_tasks=4, seed=seed)
        rows = RowSplit(train_rows=(0, 1, 2), val_rows=(3, 4, 5))
        for split in enumerate_splits(4):
            data = build_pair_dataset(board, split, rows)
            private = board.scores[:, list(split.private_tasks)]
            for pairs, labels in ((data.pairs_tr, data.y_tr), (data.pairs_val, data.y_val)):
                for (i, j), label in zip(pairs, labels):
                    assert label == int(np.mean(private[i]) < np.mean(private[j]))


def test_reg_dataset():
    """Test regression targets as private means"""
    board = make_board([[0.9, 0.2, 0.4, 0.6], [0.1, 0.3, 0.3, 0.3], [0.5, 0.1, 0.2, 0.3], [0.7, 0.8, 0.9, 1.0]])
    split = SplitSpec(public_tasks=(0,), private_tasks=(1, 2, 3))
    data = build_reg_dataset(board, split, RowSplit(train_rows=(0, 1), val_rows=(2, 3)))
    assert data.y_tr[0] == pytest.approx(0.4)
    assert data.X_tr.shape == (2, 1)
    assert data.rows_val == (2, 3)


def test_dataset_shape_mismatch(small_board):
    """Test a split built for another board"""
    with pytest.raises(BenchmarkDataError):
        build_pair_dataset(small_board, half_split(4), RowSplit(train_rows=(0, 1), val_rows=(2, 3)))


@pytest.mark.parametrize('family', ['svm', 'gp', 'mlp'])
def test_signal_recovery_classification(family):
    """Test comparison accuracy on a board whose private tasks copy the public ones"""
    board = signal_board()
    result = evaluate_split(board, half_split(8), fitted(family, 'classification'),
                            make_row_split(40, 0.7, seed=0))
    assert result.compression_rate == 0.5
    assert result.classification.accuracy >= 0.90


def test_signal_recovery_svr():
    """Test SVR score estimation on the signal board"""
    board = signal_board()
    rows = make_row_split(40, 0.7, seed=0)
    tight = PredictorSpec(family='svm', problem='regression', hyperparameters={'epsilon': 0.01})
    assert evaluate_split(board, half_split(8), tight, rows).regression.rmse <= 0.05
    assert evaluate_split(board, half_split(8), SVR, rows).regression.rmse <= 0.1


@pytest.mark.parametrize('family', ['svm', 'gp', 'mlp'])
def test_null_control(family):
    """Test that independent columns give chance-level comparisons and no R^2"""
    board = null_board()
    policy = RowPolicy(ratio=0.7, seed=0, repeats=5)
    comparison = evaluate_split(board, half_split(8), PredictorSpec(family=family, problem='classification'),
                                policy)
    estimation = evaluate_split(board, half_split(8), PredictorSpec(family=family, problem='regression'),
                                policy)
    assert 0.35 <= comparison.classification.accuracy <= 0.65
    assert estimation.regression.r2 <= 0.1


def test_evaluate_split_deterministic():
    """Test identical results for identical inputs"""
    board = signal_board(n_models=20, n_public=2)
    rows = make_row_split(20, 0.7, seed=4)
    for spec in (SVM, PredictorSpec(family='mlp', problem='classification')):
        assert evaluate_split(board, half_split(4), spec, rows) == evaluate_split(board, half_split(4), spec, rows)


def test_evaluate_split_pools_repeats():
    """Test that repeated row splits pool their validation pairs"""
    board = signal_board(n_models=20, n_public=2)
    result = evaluate_split(board, half_split(4), SVM, RowPolicy(ratio=0.7, seed=0, repeats=3))
    assert result.n_val == 3 * math.comb(6, 2)


def test_evaluate_split_degenerate(caplog):
    """Test that constant private averages are skipped, not failed"""
    board = make_board(np.column_stack([np.linspace(0.1, 0.9, 8), np.full(8, 0.5)]))
    split = SplitSpec(public_tasks=(0,), private_tasks=(1,))
    rows = make_row_split(8, 0.5, seed=0)
    comparison = evaluate_split(board, split, SVM, rows)
    assert comparison.degenerate
    assert comparison.classification is None
    assert comparison.skipped_reason.startswith('single-class')
    assert evaluate_split(board, split, SVR, rows).skipped_reason == 'constant validation targets'
    assert any('skipping' in message for message in caplog.messages)


def test_evaluate_split_too_few_training_rows(small_board, caplog):
    """Test that the smallest legal row splits are skipped, not failed"""
    split = SplitSpec(public_tasks=(0,), private_tasks=(1, 2))
    estimation = evaluate_split(small_board, split, SVR, make_row_split(4, 0.7, 0))
    assert estimation.skipped_reason == 'too few training rows'
    board = make_board(np.random.default_rng(0).uniform(size=(6, 3)))
    comparison = evaluate_split(board, split, SVM, RowSplit(train_rows=(0, 1, 2), val_rows=(3, 4, 5)))
    assert comparison.degenerate
    assert comparison.skipped_reason == 'too few training rows'
    assert any('too few training rows' in message for message in caplog.messages)


def test_profile_four_models(small_board):
    """Test that a profile of a 4-model board completes with every split skipped"""
    profile = compression_profile(small_board, [SVM, SVR], RowPolicy(ratio=0.7, seed=0))
    assert sum(r.n_skipped for r in profile.rates) == (2 ** 3 - 2) * 2
    assert all(r.n_evaluated == 0 for r in profile.rates)


def test_evaluate_all_splits_nine_tasks():
    """Test SVM over every split of a 9-task x 30-model board"""
    board = make_board(np.random.default_rng(2).uniform(size=(30, 9)))
    splits = enumerate_splits(9)
    results = evaluate_splits(board, splits, [SVM], make_row_split(30, 0.7, 0))
    assert len(results) == 510
    assert {r.split for r in results} == set(splits)


def test_split_result_json():
    """Test split identity as task names plus bitmask"""
    board = signal_board(n_models=20, n_public=2)
    payload = evaluate_split(board, half_split(4), SVM, make_row_split(20, 0.7, 0)).to_json_dict()
    assert payload['public_tasks'] == ['t0', 't1']
    assert payload['bitmask'] == 3
    assert payload['regression'] is None


def test_searched_sizes_under_bound():
    """Test that 40% of 9 tasks allows public sizes 1..3"""
    board = null_board(n_models=8, n_tasks=9)
    best = best_split_under_compression(board, 0.4, [SVR], 'rmse', make_row_split(8, 0.5, seed=0))
    assert 1 <= best.split.public_size <= 3


def test_bound_below_one_task():
    """Test max_compression < 1/n"""
    with pytest.raises(BenchmarkDataError):
        best_split_under_compression(null_board(n_tasks=9), 0.05, [SVM], 'accuracy',
                                     make_row_split(40, 0.7, seed=0))


def test_unknown_metric():
    """Test an unknown target metric"""
    with pytest.raises(BenchmarkDataError, match='unknown metric'):
        best_split_under_compression(null_board(n_tasks=4), 0.5, [SVM], 'bleu', make_row_split(40, 0.7, 0))


def test_best_split_matches_brute_force():
    """Test the search against a full re-evaluation of every qualifying split"""
    board = signal_board(n_models=16, n_public=2, seed=5)
    rows = make_row_split(16, 0.7, seed=1)
    specs = [SVM, PredictorSpec(family='gp', problem='classification')]
    best = best_split_under_compression(board, 0.5, specs, 'accuracy', rows)

    candidates = []
    for split in enumerate_splits(4):
        if split.public_size > 2:
            continue
        for index, spec in enumerate(specs):
            result = evaluate_split(board, split, spec, rows)
            if not result.degenerate:
                candidates.append((-result.classification.accuracy, split.public_size, split.bitmask, index, result))
    expected = sorted(candidates, key=lambda c: c[:4])[0][-1]
    assert best == expected


def test_best_split_minimizes_error_metrics():
    """Test that error metrics pick the smallest value"""
    board = signal_board(n_models=16, n_public=2, seed=5)
    rows = make_row_split(16, 0.7, seed=1)
    best = best_split_under_compression(board, 0.75, [SVR], 'mse', rows)
    others = [evaluate_split(board, split, SVR, rows) for split in enumerate_splits(4) if split.public_size <= 3]
    assert best.regression.mse == min(r.regression.mse for r in others if not r.degenerate)


def test_min_public_subset_zero_threshold():
    """Test that any split meets accuracy 0"""
    board = signal_board(n_models=16, n_public=2)
    result = min_public_subset(board, SVM, 'accuracy', 0.0, make_row_split(16, 0.7, 0))
    assert result.split.public_size == 1
    assert result.split.bitmask == 1


def test_min_public_subset_signal():
    """Test that one public task suffices on the copy board"""
    board = signal_board()
    result = min_public_subset(board, SVM, 'accuracy', 0.9, make_row_split(40, 0.7, 0))
    assert result is not None
    assert result.split.public_size == 1


def test_min_public_subset_unreachable():
    """Test accuracy 1.01"""
    board = signal_board(n_models=12, n_public=2)
    assert min_public_subset(board, SVM, 'accuracy', 1.01, make_row_split(12, 0.7, 0)) is None


def test_profile_rates():
    """Test one summary per rate and intervals around the mean"""
    board = signal_board(n_models=16, n_public=2)
    profile = compression_profile(board, [SVM, SVR], RowPolicy(ratio=0.7, seed=0))
    assert [r.rate for r in profile.rates] == [0.25, 0.5, 0.75]
    for rate in profile.rates:
        for per_metric in rate.metrics.values():
            for summary in per_metric.values():
                assert summary.ci_low <= summary.mean <= summary.ci_high


def test_profile_count_law():
    """Test evaluated + skipped = (2^n - 2) x specs under full enumeration"""
    board = signal_board(n_models=16, n_public=2)
    profile = compression_profile(board, [SVM], make_row_split(16, 0.7, 0))
    assert sum(r.n_evaluated + r.n_skipped for r in profile.rates) == 2 ** 4 - 2


def test_profile_signal_upper_bound():
    """Test that the copy board reaches high accuracy at every rate"""
    board = signal_board(n_models=24, n_public=2)
    profile = compression_profile(board, [SVM], RowPolicy(ratio=0.7, seed=0))
    for rate in profile.rates:
        assert rate.metrics['svm-classification']['accuracy'].ci_high >= 0.9


def test_pooled_profile():
    """Test pooling across benchmarks and within-benchmark averaging"""
    boards = [signal_board(n_models=12, n_public=2, seed=s, name=f'b{s}') for s in range(2)]
    policy = RowPolicy(ratio=0.7, seed=0)
    pooled = pooled_profile(boards, [SVM], policy, pooling='pool')
    averaged = pooled_profile(boards, [SVM], policy, pooling='benchmark')
    first_rate = pooled.rates[0]
    assert first_rate.n_evaluated + first_rate.n_skipped == 2 * 4
    assert averaged.rates[0].metrics['svm-classification']['accuracy'].count == 2


def test_pooled_profile_needs_one_task_count():
    """Test boards of different sizes"""
    with pytest.raises(BenchmarkDataError):
        pooled_profile([signal_board(12, 2), signal_board(12, 3)], [SVM], RowPolicy())


def test_best_split_table():
    """Test the per-benchmark best values and their mean"""
    boards = [signal_board(n_models=12, n_public=2, seed=s, name=f'b{s}') for s in range(2)]
    table = best_split_table(boards, [SVM], 0.5, ['accuracy', 'rmse'], RowPolicy(ratio=0.7, seed=0))
    entry = table['svm-classification']['accuracy']
    assert set(entry['per_benchmark']) == {'b0', 'b1'}
    assert entry['mean'] == pytest.approx(np.mean(list(entry['per_benchmark'].values())))
    assert 'rmse' not in table['svm-classification']


def test_experiment_profile_pipeline():
    """Test the profile pipeline wrapper"""
    experiment = CompressionExperiment([SVM], RowPolicy(ratio=0.7, seed=0))
    result = experiment.profile_pipeline([signal_board(n_models=12, n_public=2)])
    assert result['success']
    assert result['profile'].n_tasks == 4


if __name__ == "__main__":
    pytest.main([__file__, '-v'])
