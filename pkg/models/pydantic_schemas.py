"""
Pydantic models for data validation
Defines the leaderboard, ranking, graph, predictor and compression schemas
"""

import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, field_serializer,
                      field_validator, model_validator)

TOLERANCE = 1e-12


def round_sig(value: float, digits: int = 12) -> float:
    """Round to a fixed number of significant digits for report output"""
    return float(f"{value:.{digits}g}")


def _frozen_matrix(value, ndim: int = 2) -> np.ndarray:
    matrix = np.array(value, dtype=float)
    if matrix.ndim != ndim:
        raise ValueError(f'expected a {ndim}-D array, got shape {matrix.shape}')
    matrix.setflags(write=False)
    return matrix


# ---------------------------------------------------------------------------
# Leaderboard ingestion
# ---------------------------------------------------------------------------

class Orientation(str, Enum):
    HIGHER_BETTER = 'higher_better'
    LOWER_BETTER = 'lower_better'


class MetricSpec(BaseModel):
    """How a task's metric is oriented and scaled"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    orientation: Orientation = Orientation.HIGHER_BETTER
    is_percentage: bool = False


class EvaluationRecord(BaseModel):
    """One (benchmark, task, model) row of an evaluation dump"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, protected_namespaces=())

    benchmark_id: str = Field(..., min_length=1, alias='benchmark')
    task_id: str = Field(..., min_length=1, alias='task')
    model_id: str = Field(..., min_length=1, alias='model')
    metrics: Dict[str, float] = Field(..., min_length=1)

    @field_validator('metrics')
    @classmethod
    def validate_metrics(cls, v):
        """Metric names non-empty, values finite"""
        for name, value in v.items():
            if not name:
                raise ValueError('metric name must be non-empty')
            if not math.isfinite(value):
                raise ValueError(f'metric {name!r} is not finite: {value}')
        return v


class Leaderboard(BaseModel):
    """
    Score matrix of a benchmark: one row per model, one column per task.

    The model checks only that `scores` is a 2-D float matrix; the
    leaderboard invariants (completeness, sizes, uniqueness, range) are
    reported by `scripts.leaderboard.validate` so that broken boards can
    still be inspected.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, protected_namespaces=())

    name: str = 'leaderboard'
    model_names: Tuple[str, ...]
    task_names: Tuple[str, ...]
    scores: np.ndarray
    metric_name_per_task: Tuple[str, ...]
    normalized: bool = False
    # task -> (scale, offset) with normalized = scale * raw + offset
    transforms: Dict[str, Tuple[float, float]] = Field(default_factory=dict)

    @field_validator('scores', mode='before')
    @classmethod
    def as_matrix(cls, v):
        return _frozen_matrix(v)

    @field_serializer('scores')
    def serialize_scores(self, v):
        return v.tolist()

    @property
    def n_models(self) -> int:
        return len(self.model_names)

    @property
    def n_tasks(self) -> int:
        return len(self.task_names)

    def to_frame(self):
        """Scores as a pandas DataFrame indexed by model name"""
        import pandas as pd
        frame = pd.DataFrame(self.scores, index=list(self.model_names), columns=list(self.task_names))
        frame.index.name = 'model'
        return frame


# ---------------------------------------------------------------------------
# Rankings and the benchmark graph
# ---------------------------------------------------------------------------

class Permutation(BaseModel):
    """ranks[i] is the rank of model i on one task (0 = best)"""
    model_config = ConfigDict(frozen=True)

    ranks: Tuple[int, ...]

    @field_validator('ranks')
    @classmethod
    def validate_bijection(cls, v):
        if len(v) < 2:
            raise ValueError('need >= 2 models')
        if sorted(v) != list(range(len(v))):
            raise ValueError(f'ranks are not a bijection on 0..{len(v) - 1}')
        return v

    @property
    def n(self) -> int:
        return len(self.ranks)

    def order(self) -> Tuple[int, ...]:
        """Model indices from best to worst (the inverse permutation)"""
        inverse = [0] * self.n
        for model, rank in enumerate(self.ranks):
            inverse[rank] = model
        return tuple(inverse)


class DistanceMatrix(BaseModel):
    """Pairwise Vygotsky distances between the tasks of one benchmark"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    task_names: Tuple[str, ...]
    values: np.ndarray
    n_models: int = Field(..., ge=1)

    @field_validator('values', mode='before')
    @classmethod
    def as_matrix(cls, v):
        return _frozen_matrix(v)

    @model_validator(mode='after')
    def validate_metric(self):
        """Square, symmetric, zero diagonal, entries in [0, 1], triangle inequality"""
        n = len(self.task_names)
        d = self.values
        if d.shape != (n, n):
            raise ValueError(f'matrix shape {d.shape} does not match {n} tasks')
        if len(set(self.task_names)) != n:
            raise ValueError('duplicate task names')
        if not np.all(np.isfinite(d)):
            raise ValueError('matrix has non-finite entries')
        if np.max(np.abs(d - d.T), initial=0.0) > TOLERANCE:
            raise ValueError('matrix is not symmetric')
        if np.max(np.abs(np.diag(d)), initial=0.0) > TOLERANCE:
            raise ValueError('diagonal is not zero')
        if d.min(initial=0.0) < -TOLERANCE or d.max(initial=0.0) > 1 + TOLERANCE:
            raise ValueError('entries must lie in [0, 1]')
        # d[i, j] <= d[i, k] + d[k, j] for every k
        via = d[:, :, None] + d[None, :, :]
        if np.any(d[:, None, :] > via + TOLERANCE):
            raise ValueError('triangle inequality violated')
        return self

    @field_serializer('values')
    def serialize_values(self, v):
        return v.tolist()

    def index(self, task: str) -> int:
        return self.task_names.index(task)

    def weight(self, u: str, v: str) -> float:
        return float(self.values[self.index(u), self.index(v)])

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            'tasks': list(self.task_names),
            'n_models': self.n_models,
            'matrix': [[round_sig(x) for x in row] for row in self.values.tolist()],
        }


class SpanningTree(BaseModel):
    """Minimum weight spanning tree of a benchmark graph"""
    model_config = ConfigDict(frozen=True)

    task_names: Tuple[str, ...]
    edges: Tuple[Tuple[str, str, float], ...]

    @model_validator(mode='after')
    def validate_tree(self):
        """n-1 edges with u < v that connect every task without a cycle"""
        names = set(self.task_names)
        if len(self.edges) != len(self.task_names) - 1:
            raise ValueError(f'{len(self.task_names)} tasks need {len(self.task_names) - 1} edges, '
                             f'got {len(self.edges)}')
        parent = {name: name for name in names}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v, weight in self.edges:
            if u not in names or v not in names:
                raise ValueError(f'edge ({u}, {v}) references an unknown task')
            if not u < v:
                raise ValueError(f'edge ({u}, {v}) is not ordered u < v')
            if weight < 0:
                raise ValueError(f'edge ({u}, {v}) has negative weight')
            ru, rv = find(u), find(v)
            if ru == rv:
                raise ValueError(f'edge ({u}, {v}) closes a cycle')
            parent[ru] = rv
        return self

    @property
    def total_weight(self) -> float:
        return float(sum(weight for _, _, weight in self.edges))


class PathBounds(BaseModel):
    """Tree-path bounds on the distance between two tasks"""
    model_config = ConfigDict(frozen=True)

    lower: float = Field(..., ge=0)
    upper: float = Field(..., ge=0)

    @model_validator(mode='after')
    def validate_order(self):
        if self.lower > self.upper + TOLERANCE:
            raise ValueError(f'lower bound {self.lower} exceeds upper bound {self.upper}')
        return self


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------

class PredictorSpec(BaseModel):
    """Which predictor to train, on which problem, with which settings"""
    model_config = ConfigDict(frozen=True)

    family: Literal['svm', 'gp', 'mlp']
    problem: Literal['classification', 'regression']
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(0, ge=0)

    @property
    def spec_id(self) -> str:
        return f'{self.family}-{self.problem}'


class TrainedPredictor(BaseModel):
    """A fitted predictor: its spec plus the family's learned arrays"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: PredictorSpec
    feature_dim: int = Field(..., ge=1)
    hyperparameters: Dict[str, Any]
    state: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        """Model dump for report reproducibility (not an interchange format)"""
        def plain(value):
            if isinstance(value, np.ndarray):
                return value.tolist()
            if isinstance(value, (list, tuple)):
                return [plain(item) for item in value]
            if isinstance(value, np.generic):
                return value.item()
            return value

        return {
            'spec': self.spec.model_dump(),
            'feature_dim': self.feature_dim,
            'hyperparameters': plain(self.hyperparameters),
            'state': {key: plain(value) for key, value in self.state.items()},
        }


# ---------------------------------------------------------------------------
# Evaluation metrics
# ---------------------------------------------------------------------------

class ClassificationReport(BaseModel):
    """Comparison-problem quality on the validation pairs"""
    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    precision: float = Field(..., ge=0, le=1)
    recall: float = Field(..., ge=0, le=1)
    roc_auc: float = Field(..., ge=0, le=1)

    @model_validator(mode='after')
    def validate_f1(self):
        denominator = self.precision + self.recall
        if denominator > 0:
            harmonic = 2 * self.precision * self.recall / denominator
            if abs(self.f1 - harmonic) > 1e-9:
                raise ValueError(f'f1 {self.f1} is not the harmonic mean of precision and recall')
        return self


class RegressionReport(BaseModel):
    """Score-estimation quality on the validation rows"""
    model_config = ConfigDict(frozen=True)

    mse: float = Field(..., ge=0)
    rmse: float = Field(..., ge=0)
    mae: float = Field(..., ge=0)
    max_error: float = Field(..., ge=0)
    r2: float
    r2_clamped: float = Field(..., ge=0, le=1)

    @model_validator(mode='after')
    def validate_consistency(self):
        """rmse^2 = mse and mae <= rmse <= max_error"""
        if not math.isclose(self.rmse ** 2, self.mse, rel_tol=TOLERANCE, abs_tol=TOLERANCE):
            raise ValueError(f'rmse^2 = {self.rmse ** 2} differs from mse = {self.mse}')
        if self.mae > self.rmse + TOLERANCE or self.rmse > self.max_error + TOLERANCE:
            raise ValueError('expected mae <= rmse <= max_error')
        if self.r2 > 1 + TOLERANCE:
            raise ValueError(f'r2 {self.r2} exceeds 1')
        return self


# ---------------------------------------------------------------------------
# Benchmark compression
# ---------------------------------------------------------------------------

class SplitSpec(BaseModel):
    """Partition of task indices into public and private leaderboards"""
    model_config = ConfigDict(frozen=True)

    public_tasks: Tuple[int, ...]
    private_tasks: Tuple[int, ...]

    @model_validator(mode='after')
    def validate_partition(self):
        public, private = set(self.public_tasks), set(self.private_tasks)
        if not public or not private:
            raise ValueError('public and private parts must both be non-empty')
        if public & private:
            raise ValueError('public and private parts overlap')
        if public | private != set(range(self.n_tasks)):
            raise ValueError('public and private parts do not cover every task')
        if len(public) != len(self.public_tasks) or len(private) != len(self.private_tasks):
            raise ValueError('repeated task index')
        return self

    @property
    def n_tasks(self) -> int:
        return len(self.public_tasks) + len(self.private_tasks)

    @property
    def public_size(self) -> int:
        return len(self.public_tasks)

    @property
    def compression_rate(self) -> float:
        return len(self.public_tasks) / self.n_tasks

    @property
    def bitmask(self) -> int:
        return sum(1 << index for index in self.public_tasks)


class RowSplit(BaseModel):
    """Partition of model rows into training and validation rows"""
    model_config = ConfigDict(frozen=True)

    train_rows: Tuple[int, ...]
    val_rows: Tuple[int, ...]

    @model_validator(mode='after')
    def validate_partition(self):
        train, val = set(self.train_rows), set(self.val_rows)
        if len(train) < 2 or len(val) < 2:
            raise ValueError('train and validation rows need at least 2 models each')
        if train & val:
            raise ValueError('train and validation rows overlap')
        if train | val != set(range(len(train) + len(val))):
            raise ValueError('train and validation rows do not cover every model')
        return self

    @property
    def n_models(self) -> int:
        return len(self.train_rows) + len(self.val_rows)


class PairDataset(BaseModel):
    """Model-comparison dataset built from pairs(R_train) and pairs(R_val)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    X_tr: np.ndarray
    y_tr: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    pairs_tr: Tuple[Tuple[int, int], ...]
    pairs_val: Tuple[Tuple[int, int], ...]

    @model_validator(mode='after')
    def validate_sizes(self):
        if len(self.X_tr) != len(self.pairs_tr) or len(self.y_tr) != len(self.pairs_tr):
            raise ValueError('training features, labels and pairs differ in length')
        if len(self.X_val) != len(self.pairs_val) or len(self.y_val) != len(self.pairs_val):
            raise ValueError('validation features, labels and pairs differ in length')
        if not (np.all(np.isfinite(self.X_tr)) and np.all(np.isfinite(self.X_val))):
            raise ValueError('features must be finite')
        return self


class RegDataset(BaseModel):
    """Score-estimation dataset: public rows -> mean of private rows"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    X_tr: np.ndarray
    y_tr: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    rows_tr: Tuple[int, ...]
    rows_val: Tuple[int, ...]


class SplitResult(BaseModel):
    """Validation metrics of one predictor on one public/private split"""
    model_config = ConfigDict(frozen=True)

    split: SplitSpec
    predictor: PredictorSpec
    public_task_names: Tuple[str, ...]
    compression_rate: float = Field(..., gt=0, lt=1)
    classification: Optional[ClassificationReport] = None
    regression: Optional[RegressionReport] = None
    n_val: int = 0
    skipped_reason: Optional[str] = None

    @model_validator(mode='after')
    def validate_rate(self):
        if abs(self.compression_rate - self.split.compression_rate) > TOLERANCE:
            raise ValueError('compression_rate must equal |public| / n_tasks')
        return self

    @property
    def degenerate(self) -> bool:
        return self.skipped_reason is not None

    def metric(self, name: str) -> Optional[float]:
        """Value of a named metric, None when this result does not carry it"""
        for report in (self.classification, self.regression):
            if report is not None and name in type(report).model_fields:
                return getattr(report, name)
        return None

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            'public_tasks': list(self.public_task_names),
            'bitmask': self.split.bitmask,
            'compression_rate': self.compression_rate,
            'predictor': self.predictor.model_dump(),
            'classification': self.classification.model_dump() if self.classification else None,
            'regression': self.regression.model_dump() if self.regression else None,
            'n_val': self.n_val,
            'skipped_reason': self.skipped_reason,
        }


class MetricSummary(BaseModel):
    """Mean and 95% intervals of one metric over many splits"""
    model_config = ConfigDict(frozen=True)

    count: int = Field(..., ge=1)
    mean: float
    ci_low: float
    ci_high: float
    parametric_low: float
    parametric_high: float

    @model_validator(mode='after')
    def validate_interval(self):
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError(f'mean {self.mean} outside [{self.ci_low}, {self.ci_high}]')
        return self


class RateSummary(BaseModel):
    """Aggregated metrics of every split with one public size"""
    model_config = ConfigDict(frozen=True)

    rate: float = Field(..., gt=0, lt=1)
    public_size: int = Field(..., ge=1)
    n_evaluated: int = Field(..., ge=0)
    n_skipped: int = Field(..., ge=0)
    # predictor id -> metric name -> summary
    metrics: Dict[str, Dict[str, MetricSummary]] = Field(default_factory=dict)


class CompressionProfile(BaseModel):
    """Per compression rate confidence summaries"""
    model_config = ConfigDict(frozen=True)

    n_tasks: int = Field(..., ge=2)
    rates: Tuple[RateSummary, ...]

    @model_validator(mode='after')
    def validate_rates(self):
        for summary in self.rates:
            if abs(summary.rate - summary.public_size / self.n_tasks) > TOLERANCE:
                raise ValueError(f'rate {summary.rate} is not k / {self.n_tasks}')
            if not 1 <= summary.public_size <= self.n_tasks - 1:
                raise ValueError(f'public size {summary.public_size} out of range')
        return self


# ---------------------------------------------------------------------------
# Command-line runs
# ---------------------------------------------------------------------------

class RunConfig(BaseModel):
    """Everything a CLI run depends on; its hash names the run in the manifest"""
    model_config = ConfigDict(frozen=True)

    inputs: List[Path] = Field(default_factory=list)
    out: Optional[Path] = None
    metric_priority: List[str] = Field(default_factory=lambda: ['accuracy', 'f1', 'exact_match'])
    min_common_models: int = Field(10, ge=2)
    ratio: float = Field(0.7, gt=0, lt=1)
    seed: int = Field(0, ge=0)
    repeats: int = Field(1, ge=1)
    predictors: List[Literal['svm', 'gp', 'mlp']] = Field(default_factory=lambda: ['svm', 'gp', 'mlp'])
    max_compression: float = Field(0.4, gt=0, le=1)
    metric: str = 'accuracy'
    threshold: Optional[float] = None
    samples_per_rate: Optional[int] = Field(None, ge=1)
    tie_policy: Literal['break', 'half'] = 'break'
    lower_better: List[str] = Field(default_factory=list)
    pooling: Literal['pool', 'benchmark'] = 'pool'
    task: Optional[str] = None
    k: int = Field(3, ge=1)
    novelty: bool = False

    @field_validator('inputs')
    @classmethod
    def validate_inputs(cls, v):
        """All referenced input paths exist at launch"""
        missing = [str(path) for path in v if not Path(path).exists()]
        if missing:
            raise ValueError(f'input paths do not exist: {", ".join(missing)}')
        return v

    @field_validator('predictors')
    @classmethod
    def validate_predictors(cls, v):
        if not v:
            raise ValueError('at least one predictor family is required')
        return v

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode='json'), sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
