"""
Ranking module
Turns task score columns into model rankings and measures how differently
two tasks order the same models (the Vygotsky distance)
"""
import logging
import math
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.pydantic_schemas import DistanceMatrix, Leaderboard, Permutation
from scripts.errors import BenchmarkDataError

logger = logging.getLogger(__name__)


def ranking_from_scores(scores: Sequence[float], tie_break: Optional[Sequence[int]] = None) -> Permutation:
    """
    Rank models on one task, rank 0 for the highest score

    Args:
        scores: one score per model
        tie_break: priority key per model; among equal scores the smaller
            key gets the better rank (default: ascending model index)
    """
    values = np.asarray(scores, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise BenchmarkDataError('need >= 2 models to build a ranking')
    if not np.all(np.isfinite(values)):
        raise BenchmarkDataError('ranking scores must be finite')
    keys = np.arange(len(values)) if tie_break is None else np.asarray(tie_break)
    if len(keys) != len(values):
        raise BenchmarkDataError('tie_break must give one key per model')

    # lexsort sorts by the last key first
    order = np.lexsort((keys, -values))
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(len(values))
    return Permutation(ranks=tuple(int(r) for r in ranks))


def _merge_count(seq: List[int]) -> Tuple[List[int], int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, left_count = _merge_count(seq[:mid])
    right, right_count = _merge_count(seq[mid:])
    merged = []
    count = left_count + right_count
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            # right[j] is smaller than every remaining left element
            merged.append(right[j])
            count += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, count


def count_inversions(seq: Sequence[int]) -> int:
    """|{(i, j): i < j, seq[i] > seq[j]}| by merge counting, O(n log n)"""
    return _merge_count(list(seq))[1]


def inversions(p: Permutation) -> int:
    """Number of inversions of a permutation"""
    return count_inversions(p.ranks)


def _check_lengths(pA: Permutation, pB: Permutation):
    if pA.n != pB.n:
        raise BenchmarkDataError(f'rankings differ in length: {pA.n} vs {pB.n}')


def discordant_pairs(pA: Permutation, pB: Permutation) -> int:
    """
    inv(pA o pB^-1): position k holds the A-rank of the model ranked k-th
    by B, so every inversion is a model pair the two tasks order oppositely
    """
    _check_lengths(pA, pB)
    composed = [pA.ranks[model] for model in pB.order()]
    return count_inversions(composed)


def vygotsky_weight(pA: Permutation, pB: Permutation) -> float:
    """Discordant model pairs scaled by the maximum n(n-1)/2 into [0, 1]"""
    return discordant_pairs(pA, pB) / math.comb(pA.n, 2)


def bubble_swap_distance(order_a: Sequence[int], order_b: Sequence[int]) -> int:
    """
    Adjacent transpositions bubble sort needs to turn ordering a into b

    Quadratic; kept as the reference the inversion count is checked against.
    """
    position = {item: idx for idx, item in enumerate(order_b)}
    seq = [position[item] for item in order_a]
    swaps = 0
    for end in range(len(seq) - 1, 0, -1):
        for i in range(end):
            if seq[i] > seq[i + 1]:
                seq[i], seq[i + 1] = seq[i + 1], seq[i]
                swaps += 1
    return swaps


def tied_weight(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """
    Distance that keeps ties instead of breaking them

    A pair ordered oppositely costs 1, a pair tied on exactly one of the
    two tasks costs 1/2; the sum is scaled by n(n-1)/2.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if len(a) != len(b):
        raise BenchmarkDataError(f'score columns differ in length: {len(a)} vs {len(b)}')
    if len(a) < 2:
        raise BenchmarkDataError('need >= 2 models')
    sign_a = np.sign(a[:, None] - a[None, :])
    sign_b = np.sign(b[:, None] - b[None, :])
    upper = np.triu_indices(len(a), k=1)
    sa, sb = sign_a[upper], sign_b[upper]
    discordant = np.sum(sa * sb < 0)
    half = np.sum((sa == 0) != (sb == 0))
    return float(discordant + 0.5 * half) / math.comb(len(a), 2)


def task_rankings(board: Leaderboard) -> List[Permutation]:
    """One ranking per task column, ties broken by model index"""
    return [ranking_from_scores(board.scores[:, j]) for j in range(board.n_tasks)]


def distance_matrix(board: Leaderboard, tie_policy: str = 'break') -> DistanceMatrix:
    """
    Vygotsky distances between every pair of tasks on a leaderboard

    Args:
        board: complete (normalized) leaderboard
        tie_policy: 'break' ranks tied models by index (a true metric);
            'half' charges half a discordance for one-sided ties
    """
    if tie_policy not in ('break', 'half'):
        raise BenchmarkDataError(f'unknown tie policy {tie_policy!r}')
    if not board.normalized:
        logger.warning(f"{board.name}: computing distances on un-normalized scores")

    n = board.n_tasks
    values = np.zeros((n, n))
    rankings = task_rankings(board) if tie_policy == 'break' else None
    for i, j in combinations(range(n), 2):
        if rankings is not None:
            weight = vygotsky_weight(rankings[i], rankings[j])
        else:
            weight = tied_weight(board.scores[:, i], board.scores[:, j])
        values[i, j] = values[j, i] = weight

    logger.info(f"Computed {n}x{n} distance matrix for {board.name!r} ({board.n_models} models)")
    return DistanceMatrix(task_names=board.task_names, values=values, n_models=board.n_models)
