"""
Command-line interface
ingest / dist / mst / nearest / compress / minset / profile subcommands

Usage:
    python -m scripts.cli dist --in board.csv --out results/
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Sequence

from pydantic import ValidationError

from models.pydantic_schemas import Leaderboard, PredictorSpec, RunConfig
from scripts.compression import CompressionExperiment, RowPolicy
from scripts.config import Config, configure_logging
from scripts.errors import BenchmarkDataError, UsageError
from scripts.graph import export_dot, mst, nearest_tasks, task_novelty, tree_to_json
from scripts.leaderboard import TaskGroupExtractor, load_leaderboard
from scripts.metrics import REGRESSION_METRICS
from scripts.ranking import distance_matrix
from scripts.report import ReportWriter, write_report

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
COMMANDS = ('ingest', 'dist', 'mst', 'nearest', 'compress', 'minset', 'profile')


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting on bad input"""

    def error(self, message):
        raise UsageError(f'{self.prog}: {message}\n{self.format_usage()}')


def _comma_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='vygotsky', description='Benchmark graphs and benchmark compression')
    commands = parser.add_subparsers(dest='command', required=True, metavar='{' + ','.join(COMMANDS) + '}')

    common = ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--in', dest='inputs', action='append', type=Path,
                        help='input file (repeat for several leaderboards)')
    common.add_argument('--out', type=Path, help='output directory')
    common.add_argument('--config', type=Path, help='JSON run config; flags override it')
    common.add_argument('--seed', type=int)
    common.add_argument('--lower-better', dest='lower_better', type=_comma_list,
                        help='comma-separated tasks whose metric is lower-is-better')
    common.add_argument('--tie-policy', dest='tie_policy', choices=('break', 'half'))

    experiment = ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    experiment.add_argument('--ratio', type=float, help='training share of model rows')
    experiment.add_argument('--repeats', type=int, help='row splits per evaluation')
    experiment.add_argument('--predictors', type=_comma_list, help='comma-separated: svm,gp,mlp')
    experiment.add_argument('--metric')
    experiment.add_argument('--samples-per-rate', dest='samples_per_rate', type=int)

    ingest = commands.add_parser('ingest', parents=[common], argument_default=argparse.SUPPRESS,
                                 help='evaluation dump -> task-group leaderboards')
    ingest.add_argument('--min-models', dest='min_common_models', type=int)
    ingest.add_argument('--metric-priority', dest='metric_priority', type=_comma_list)

    commands.add_parser('dist', parents=[common], help='leaderboard -> distance matrix JSON')
    commands.add_parser('mst', parents=[common], help='leaderboard -> spanning tree DOT + JSON')

    nearest = commands.add_parser('nearest', parents=[common], argument_default=argparse.SUPPRESS,
                                  help='closest tasks to a task, or task novelty')
    nearest.add_argument('--task')
    nearest.add_argument('--k', type=int)
    nearest.add_argument('--novelty', action='store_true')

    compress = commands.add_parser('compress', parents=[common, experiment],
                                   argument_default=argparse.SUPPRESS,
                                   help='best split under a compression bound')
    compress.add_argument('--max-compression', dest='max_compression', type=float)

    minset = commands.add_parser('minset', parents=[common, experiment], argument_default=argparse.SUPPRESS,
                                 help='smallest public set reaching a threshold')
    minset.add_argument('--threshold', type=float)

    profile = commands.add_parser('profile', parents=[common, experiment], argument_default=argparse.SUPPRESS,
                                  help='per-rate confidence profile')
    profile.add_argument('--pooling', choices=('pool', 'benchmark'))
    return parser


def _defaults() -> Dict:
    return {
        'metric_priority': list(Config.METRIC_PRIORITY),
        'min_common_models': Config.MIN_COMMON_MODELS,
        'ratio': Config.ROW_SPLIT_RATIO,
        'seed': Config.SEED,
        'repeats': Config.ROW_SPLIT_REPEATS,
        'predictors': list(Config.PREDICTOR_FAMILIES),
        'max_compression': Config.MAX_COMPRESSION,
        'samples_per_rate': Config.SAMPLES_PER_RATE,
    }


def _flag(field: str) -> str:
    return {'inputs': '--in'}.get(field, '--' + field.replace('_', '-'))


def resolve_run_config(flags: Dict) -> RunConfig:
    """
    Config defaults, then the --config JSON file, then command-line flags

    Raises:
        UsageError: a flag or config value fails validation
        ValidationError: an input file does not exist
    """
    values = _defaults()
    config_path = flags.pop('config', None)
    if config_path is not None:
        try:
            file_values = json.loads(Path(config_path).read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise BenchmarkDataError(f'config file {config_path} is not valid JSON: {e}') from e
        if not isinstance(file_values, dict):
            raise BenchmarkDataError(f'config file {config_path} must hold a JSON object')
        values.update(file_values)
    values.update(flags)
    try:
        return RunConfig(**values)
    except ValidationError as e:
        bad_values = [error for error in e.errors() if not error['loc'] or error['loc'][0] != 'inputs']
        if not bad_values:
            raise
        raise UsageError('; '.join(
            f"invalid {_flag(str(error['loc'][0])) if error['loc'] else 'options'}: {error['msg']}"
            for error in bad_values)) from e


def _require(run: RunConfig, command: str, *fields: str):
    for field in fields:
        value = getattr(run, field)
        if value is None or value == []:
            raise UsageError(f'vygotsky {command}: {_flag(field)} is required')


def _load_boards(run: RunConfig) -> List[Leaderboard]:
    return [load_leaderboard(path, run.lower_better) for path in run.inputs]


def _specs(run: RunConfig, problems: Sequence[str]) -> List[PredictorSpec]:
    return [PredictorSpec(family=family, problem=problem, seed=run.seed)
            for problem in problems for family in run.predictors]


def _problem(metric: str) -> str:
    return 'regression' if metric in REGRESSION_METRICS else 'classification'


def _experiment(run: RunConfig, problems: Sequence[str]) -> CompressionExperiment:
    return CompressionExperiment(_specs(run, problems),
                                 RowPolicy(ratio=run.ratio, seed=run.seed, repeats=run.repeats),
                                 run.samples_per_rate)


def _run_ingest(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'ingest', 'inputs', 'out')
    extractor = TaskGroupExtractor(run.min_common_models, run.metric_priority)
    groups = {}
    for path in run.inputs:
        result = extractor.ingest_pipeline(path, writer.out_dir)
        for board in result['groups']:
            name = result['files'][board.name]
            writer.register(name)
            groups[board.name] = {'file': name, 'n_models': board.n_models, 'n_tasks': board.n_tasks,
                                  'tasks': list(board.task_names), 'metrics': list(board.metric_name_per_task)}
    return {'groups.json': groups}


def _run_dist(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'dist', 'inputs', 'out')
    board = _load_boards(run)[0]
    return {'distances.json': distance_matrix(board, run.tie_policy).to_json_dict()}


def _run_mst(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'mst', 'inputs', 'out')
    board = _load_boards(run)[0]
    tree = mst(distance_matrix(board, run.tie_policy))
    return {'tree.dot': export_dot(tree), 'tree.json': tree_to_json(tree)}


def _run_nearest(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'nearest', 'inputs')
    dm = distance_matrix(_load_boards(run)[0], run.tie_policy)
    if run.novelty:
        rows = [{'task': task, 'nearest': other, 'distance': distance}
                for task, other, distance in task_novelty(dm)]
        name = 'novelty.json'
    else:
        _require(run, 'nearest', 'task')
        rows = [{'task': task, 'distance': distance} for task, distance in nearest_tasks(dm, run.task, run.k)]
        name = 'nearest.json'
    for row in rows:
        print('\t'.join(str(value) for value in row.values()))
    return {name: rows}


def _run_compress(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'compress', 'inputs', 'out')
    result = _experiment(run, [_problem(run.metric)]).search_pipeline(
        _load_boards(run), run.max_compression, run.metric)
    results = {'best_split.json': {name: best.to_json_dict() for name, best in result['best'].items()}}
    if result['table'] is not None:
        results['best_split_table.json'] = result['table']
    return results


def _run_minset(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'minset', 'inputs', 'out', 'threshold')
    boards = _load_boards(run)
    experiment = _experiment(run, [_problem(run.metric)])
    found = {}
    for board in boards:
        result = experiment.threshold_pipeline(board, run.metric, run.threshold)
        found[board.name] = {spec_id: (split.to_json_dict() if split else {'found': False})
                             for spec_id, split in result['found'].items()}
    return {'minset.json': found}


def _run_profile(run: RunConfig, writer: ReportWriter) -> Dict[str, Any]:
    _require(run, 'profile', 'inputs', 'out')
    result = _experiment(run, ['classification', 'regression']).profile_pipeline(_load_boards(run), run.pooling)
    return {'profile.json': result['profile']}


HANDLERS = {
    'ingest': _run_ingest,
    'dist': _run_dist,
    'mst': _run_mst,
    'nearest': _run_nearest,
    'compress': _run_compress,
    'minset': _run_minset,
    'profile': _run_profile,
}


def run_command(argv: Sequence[str]) -> int:
    """
    Run one subcommand

    Returns:
        0 on success, 1 on a usage error, 2 on a data or I/O error
    """
    configure_logging()
    parser = build_parser()
    try:
        args = vars(parser.parse_args(list(argv)))
        command = args.pop('command')
        run = resolve_run_config(args)
        writer = ReportWriter(run.out or Path('.'), run)
        results = HANDLERS[command](run, writer)
        if run.out is not None:
            write_report(results, run.out, run, writer=writer)
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except UsageError as e:
        message = str(e)
        print(message if 'usage:' in message else f'{message}\n{parser.format_usage()}', file=sys.stderr)
        return EXIT_USAGE
    except (BenchmarkDataError, ValidationError) as e:
        logger.error(str(e).splitlines()[0] if isinstance(e, ValidationError) else str(e))
        if isinstance(e, ValidationError):
            for error in e.errors():
                logger.error(f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
