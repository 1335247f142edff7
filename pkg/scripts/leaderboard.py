"""
Leaderboard ingestion module
Parses leaderboard CSVs and evaluation-record dumps, extracts complete
task groups, validates and normalizes score matrices
"""
import io
import json
import logging
import math
import re
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from models.pydantic_schemas import EvaluationRecord, Leaderboard, MetricSpec, Orientation
from scripts.config import Config
from scripts.errors import BenchmarkDataError

logger = logging.getLogger(__name__)


def parse_leaderboard_csv(data: bytes, name: str = 'leaderboard') -> Leaderboard:
    """
    Parse a `model,<task1>,...,<taskK>` CSV into an un-normalized Leaderboard

    Args:
        data: raw file bytes (UTF-8, LF or CRLF line endings)
        name: benchmark name carried by the leaderboard

    Returns:
        Leaderboard with row/column order preserved from the file
    """
    try:
        text = data.decode('utf-8-sig')
    except UnicodeDecodeError as e:
        raise BenchmarkDataError(f'leaderboard is not valid UTF-8: {e}') from e

    try:
        frame = pd.read_csv(io.StringIO(text), header=None, dtype=str,
                            keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise BenchmarkDataError('leaderboard file is empty') from e
    except pd.errors.ParserError as e:
        raise BenchmarkDataError(f'malformed leaderboard CSV: {e}') from e

    header = [str(cell).strip() for cell in frame.iloc[0].tolist()]
    if header[0] != 'model':
        raise BenchmarkDataError(f"first header cell must be 'model', got {header[0]!r}")
    task_names = header[1:]
    body = frame.iloc[1:]

    if len(task_names) < 2 or len(body) < 2:
        raise BenchmarkDataError(
            f'need at least 2 models and 2 tasks, got {len(body)} models and {len(task_names)} tasks')
    duplicates = sorted({t for t in task_names if task_names.count(t) > 1})
    if duplicates:
        raise BenchmarkDataError(f'duplicate task: {", ".join(duplicates)}')

    model_names = [str(cell).strip() for cell in body.iloc[:, 0].tolist()]
    duplicates = sorted({m for m in model_names if model_names.count(m) > 1})
    if duplicates:
        raise BenchmarkDataError(f'duplicate model: {", ".join(duplicates)}')

    cells = body.iloc[:, 1:]
    if cells.isna().any().any() or (cells.apply(lambda col: col.str.strip()) == '').any().any():
        raise BenchmarkDataError('incomplete matrix: missing score cell')
    scores = cells.apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    if scores.isna().any().any():
        raise BenchmarkDataError('incomplete matrix: non-numeric score cell')
    matrix = scores.to_numpy(dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise BenchmarkDataError('incomplete matrix: non-finite score cell')

    board = Leaderboard(
        name=name,
        model_names=tuple(model_names),
        task_names=tuple(task_names),
        scores=matrix,
        metric_name_per_task=tuple(['score'] * len(task_names)),
    )
    logger.info(f"Parsed leaderboard {name!r}: {board.n_models} models x {board.n_tasks} tasks")
    return board


def leaderboard_to_csv(board: Leaderboard) -> bytes:
    """Write a leaderboard back out in the ingestion CSV format"""
    return board.to_frame().to_csv(float_format='%.12g', lineterminator='\n').encode('utf-8')


def _finite_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def parse_records_json(data: bytes) -> List[EvaluationRecord]:
    """
    Parse a JSON dump of (benchmark, task, model, metrics) entries

    Records without any finite real metric are dropped with a diagnostic;
    repeated (benchmark, task, model) triples keep their first occurrence.
    """
    try:
        document = json.loads(data.decode('utf-8-sig'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise BenchmarkDataError(f'malformed document: {e}') from e
    if not isinstance(document, list):
        raise BenchmarkDataError('malformed document: top level must be an array')

    records = []
    seen = set()
    dropped = 0
    for idx, item in enumerate(document):
        if not isinstance(item, dict) or not isinstance(item.get('metrics'), dict):
            raise BenchmarkDataError(f'malformed document: entry {idx} lacks a metrics object')
        metrics = {str(k): float(v) for k, v in item['metrics'].items() if _finite_number(v)}
        if not metrics:
            dropped += 1
            logger.warning(f"Dropped record {idx} ({item.get('benchmark')}/{item.get('task')}/"
                           f"{item.get('model')}): no finite real-valued metric")
            continue
        try:
            record = EvaluationRecord(benchmark=item.get('benchmark'), task=item.get('task'),
                                      model=item.get('model'), metrics=metrics)
        except ValidationError as e:
            raise BenchmarkDataError(f'malformed document: entry {idx}: {e}') from e

        key = (record.benchmark_id, record.task_id, record.model_id)
        if key in seen:
            logger.warning(f"Duplicate record {'/'.join(key)} ignored")
            continue
        seen.add(key)
        records.append(record)

    if not records:
        raise BenchmarkDataError('zero usable records')
    logger.info(f"Parsed {len(records)} records ({dropped} dropped)")
    return records


def _select_metric(task_frame: pd.DataFrame, models: Sequence[str],
                   metric_priority: Sequence[str]) -> Optional[str]:
    """First priority metric covering every model, else the first covering any"""
    available = {}
    for metric in metric_priority:
        if metric in task_frame.columns:
            covered = task_frame.loc[task_frame['model'].isin(models) & task_frame[metric].notna(), 'model']
            available[metric] = set(covered)
    for metric in metric_priority:
        if metric in available and available[metric] >= set(models):
            return metric
    for metric in metric_priority:
        if available.get(metric):
            return metric
    return None


def extract_task_groups(records: Sequence[EvaluationRecord],
                        min_common_models: int = None,
                        metric_priority: Sequence[str] = None) -> List[Leaderboard]:
    """
    Build one complete leaderboard per benchmark

    A benchmark is kept iff every task has a metric from `metric_priority`
    and at least `min_common_models` models carry that metric on all of its
    tasks. Benchmarks that fail are skipped with a summary diagnostic.
    """
    if min_common_models is None:
        min_common_models = Config.MIN_COMMON_MODELS
    if metric_priority is None:
        metric_priority = Config.METRIC_PRIORITY
    if min_common_models < 2:
        raise BenchmarkDataError('min_common_models must be >= 2')

    rows = [{'benchmark': r.benchmark_id, 'task': r.task_id, 'model': r.model_id, **r.metrics}
            for r in records]
    frame = pd.DataFrame(rows)
    groups = []
    skipped = []

    for benchmark, bench_frame in frame.groupby('benchmark', sort=False):
        tasks = list(dict.fromkeys(bench_frame['task']))
        models = list(dict.fromkeys(bench_frame['model']))
        per_task = {task: bench_frame[bench_frame['task'] == task] for task in tasks}
        common = [m for m in models if all(m in set(per_task[t]['model']) for t in tasks)]

        selected = {}
        for task in tasks:
            metric = _select_metric(per_task[task], common, metric_priority)
            if metric is None:
                break
            selected[task] = metric
        if len(selected) < len(tasks):
            skipped.append(f'{benchmark} (task without a real-valued priority metric)')
            continue

        survivors = [
            m for m in common
            if all(per_task[t].loc[per_task[t]['model'] == m, selected[t]].notna().any() for t in tasks)
        ]
        if len(tasks) < 2 or len(survivors) < min_common_models:
            skipped.append(f'{benchmark} ({len(survivors)} common models, {len(tasks)} tasks)')
            continue

        matrix = np.array([
            [per_task[t].loc[per_task[t]['model'] == m, selected[t]].dropna().iloc[0] for t in tasks]
            for m in survivors
        ], dtype=float)
        board = Leaderboard(
            name=str(benchmark),
            model_names=tuple(survivors),
            task_names=tuple(tasks),
            scores=matrix,
            metric_name_per_task=tuple(selected[t] for t in tasks),
        )
        assert not validate(board), f'extracted group {benchmark} violates leaderboard invariants'
        groups.append(board)

    if skipped:
        logger.warning(f"Skipped {len(skipped)} of {len(skipped) + len(groups)} benchmarks: "
                       f"{'; '.join(skipped)}")
    logger.info(f"Extracted {len(groups)} task groups")
    return groups


def default_metric_specs(board: Leaderboard, lower_better: Sequence[str] = ()) -> Dict[str, MetricSpec]:
    """Higher-better specs, percentage when every score lies in (1, 100]

    Lower-better tasks are never percentages: they are min-max scaled, then flipped.
    """
    specs = {}
    for j, task in enumerate(board.task_names):
        column = board.scores[:, j]
        lower = task in lower_better
        specs[task] = MetricSpec(
            name=board.metric_name_per_task[j] if j < len(board.metric_name_per_task) else 'score',
            orientation=Orientation.LOWER_BETTER if lower else Orientation.HIGHER_BETTER,
            is_percentage=not lower and bool(np.all((column > 1) & (column <= 100))),
        )
    return specs


def normalize_and_orient(board: Leaderboard,
                         specs: Optional[Mapping[str, MetricSpec]] = None) -> Leaderboard:
    """
    Map every task onto [0, 1] with higher = better

    Percentage metrics are divided by 100, everything else is min-max scaled
    per task; lower-better tasks are flipped with s -> 1 - s afterwards. An
    already normalized board is returned unchanged.
    """
    if board.normalized:
        return board
    defaults = default_metric_specs(board)
    specs = {**defaults, **(specs or {})}

    columns = []
    transforms = {}
    for j, task in enumerate(board.task_names):
        spec = specs[task]
        raw = board.scores[:, j]
        if spec.is_percentage:
            scale, offset = 0.01, 0.0
        else:
            low, high = float(raw.min()), float(raw.max())
            if high - low <= 0:
                raise BenchmarkDataError(
                    f'task {task!r} has a degenerate score range (all scores equal {low})')
            scale, offset = 1.0 / (high - low), -low / (high - low)
        if spec.orientation == Orientation.LOWER_BETTER:
            scale, offset = -scale, 1.0 - offset
        column = scale * raw + offset
        if not spec.is_percentage:
            # round-off at the endpoints
            column = np.clip(column, 0.0, 1.0)
        columns.append(column)
        transforms[task] = (scale, offset)

    return Leaderboard(
        name=board.name,
        model_names=board.model_names,
        task_names=board.task_names,
        scores=np.column_stack(columns),
        metric_name_per_task=board.metric_name_per_task,
        normalized=True,
        transforms=transforms,
    )


def validate(board: Leaderboard) -> List[str]:
    """Human-readable diagnostics, one per violated leaderboard invariant"""
    diagnostics = []
    scores = board.scores
    if board.n_models < 2:
        diagnostics.append(f'n_models >= 2 required, got {board.n_models}')
    if board.n_tasks < 2:
        diagnostics.append(f'n_tasks >= 2 required, got {board.n_tasks}')
    if scores.shape != (board.n_models, board.n_tasks):
        diagnostics.append(f'score matrix shape {scores.shape} does not match '
                           f'{board.n_models} models x {board.n_tasks} tasks')
    if len(board.metric_name_per_task) != board.n_tasks:
        diagnostics.append('metric_name_per_task length does not match n_tasks')
    if len(set(board.model_names)) != board.n_models:
        diagnostics.append('model_names contains duplicates')
    if len(set(board.task_names)) != board.n_tasks:
        diagnostics.append('task_names contains duplicates')
    if scores.size and not np.all(np.isfinite(scores)):
        diagnostics.append(f'incomplete matrix: {int(np.sum(~np.isfinite(scores)))} missing or non-finite cells')
    elif board.normalized and scores.size and (scores.min() < 0 or scores.max() > 1):
        diagnostics.append('normalized scores must lie in [0, 1]')

    for message in diagnostics:
        logger.warning(f"{board.name}: {message}")
    return diagnostics


def load_leaderboard(path: Path, lower_better: Sequence[str] = ()) -> Leaderboard:
    """Read a leaderboard CSV from disk and normalize it"""
    board = parse_leaderboard_csv(Path(path).read_bytes(), name=Path(path).stem)
    unknown = sorted(set(lower_better) - set(board.task_names))
    if unknown:
        logger.warning(f"{board.name}: lower-better tasks not on the board: {', '.join(unknown)}")
    return normalize_and_orient(board, default_metric_specs(board, lower_better))


class TaskGroupExtractor:
    """Turns an evaluation-record dump into per-benchmark leaderboard files"""

    def __init__(self, min_common_models: int = None, metric_priority: Sequence[str] = None):
        self.config = Config()
        self.min_common_models = min_common_models or self.config.MIN_COMMON_MODELS
        self.metric_priority = list(metric_priority or self.config.METRIC_PRIORITY)

    @staticmethod
    def leaderboard_filename(board: Leaderboard) -> str:
        """Filesystem-safe CSV name for a benchmark id"""
        return re.sub(r'[^A-Za-z0-9._-]+', '_', board.name).strip('_') + '.csv'

    def ingest_pipeline(self, input_file: Path, output_dir: Path = None) -> Dict:
        """
        Complete ingestion pipeline

        Returns:
            Dictionary with the extracted groups and the written files
        """
        logger.info("=" * 60)
        logger.info("Starting Task Group Extraction")
        logger.info("=" * 60)
        start_time = time.time()

        output_dir = Path(output_dir or self.config.LEADERBOARD_DIR)
        records = parse_records_json(Path(input_file).read_bytes())
        groups = extract_task_groups(records, self.min_common_models, self.metric_priority)

        files = {}
        if groups:
            output_dir.mkdir(parents=True, exist_ok=True)
        for board in groups:
            path = output_dir / self.leaderboard_filename(board)
            path.write_bytes(leaderboard_to_csv(board))
            files[board.name] = path.name

        logger.info("=" * 60)
        logger.info("Task Group Extraction Completed")
        logger.info(f"Records: {len(records)}")
        logger.info(f"Task groups: {len(groups)}")
        logger.info(f"Duration: {time.time() - start_time:.2f}s")
        logger.info("=" * 60)

        return {
            'success': True,
            'record_count': len(records),
            'groups': groups,
            'files': files,
        }
