"""
Configuration management for the Vygotsky benchmark toolkit
Handles environment variables, run defaults and logging setup
"""

import logging
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_list(name: str, default: str) -> list:
    return [item.strip() for item in os.getenv(name, default).split(',') if item.strip()]


def _env_optional_int(name: str):
    value = os.getenv(name)
    return int(value) if value else None


class Config:
    """Configuration class for pipeline settings"""

    # Project paths
    BASE_DIR = Path(__file__).parent.parent
    DATA_DIR = BASE_DIR / "data"
    LEADERBOARD_DIR = DATA_DIR / "leaderboards"

    # Task group extraction
    MIN_COMMON_MODELS = int(os.getenv('VYGOTSKY_MIN_COMMON_MODELS', 10))
    METRIC_PRIORITY = _env_list('VYGOTSKY_METRIC_PRIORITY', 'accuracy,f1,exact_match')

    # Public/private split experiments
    SEED = int(os.getenv('VYGOTSKY_SEED', 0))
    ROW_SPLIT_RATIO = float(os.getenv('VYGOTSKY_ROW_SPLIT_RATIO', 0.7))
    ROW_SPLIT_REPEATS = int(os.getenv('VYGOTSKY_ROW_SPLIT_REPEATS', 1))
    MAX_COMPRESSION = float(os.getenv('VYGOTSKY_MAX_COMPRESSION', 0.4))
    ENUMERATION_CAP = 20  # 2^20 - 2 splits is the most we enumerate
    SAMPLES_PER_RATE = _env_optional_int('VYGOTSKY_SAMPLES_PER_RATE')
    FALLBACK_SAMPLES_PER_RATE = 100  # used above the enumeration cap when no budget is set
    PREDICTOR_FAMILIES = _env_list('VYGOTSKY_PREDICTORS', 'svm,gp,mlp')

    # Predictor defaults
    SVM_C = 1.0
    SVM_TOL = 1e-3
    SVR_EPSILON = 0.1
    GP_LENGTH_SCALE = 1.0
    GP_NOISE = 1e-2
    GP_MAX_NEWTON_STEPS = 50
    GP_MODE_TOL = 1e-6
    GP_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
    GP_HERMITE_POINTS = 20
    MLP_HIDDEN_SIZES = (16, 16, 16)
    MLP_LEARNING_RATE = 1e-3
    MLP_BATCH_SIZE = 32
    MLP_EPOCHS = 10

    # Logging
    LOG_LEVEL = os.getenv('VYGOTSKY_LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(levelname)s: %(message)s'

    @classmethod
    def default_hyperparameters(cls, family: str, problem: str) -> dict:
        """Default hyperparameters for a predictor family/problem pair"""
        if family == 'svm':
            params = {'C': cls.SVM_C, 'tol': cls.SVM_TOL}
            if problem == 'regression':
                params['epsilon'] = cls.SVR_EPSILON
            return params
        if family == 'gp':
            params = {'length_scale': cls.GP_LENGTH_SCALE}
            if problem == 'regression':
                params['noise'] = cls.GP_NOISE
            return params
        return {
            'hidden_sizes': list(cls.MLP_HIDDEN_SIZES),
            'learning_rate': cls.MLP_LEARNING_RATE,
            'batch_size': cls.MLP_BATCH_SIZE,
            'epochs': cls.MLP_EPOCHS,
        }


def configure_logging(level: str = None):
    """Send diagnostics to stderr as 'WARN: ...' / 'ERROR: ...' lines"""
    logging.addLevelName(logging.WARNING, 'WARN')
    logging.basicConfig(
        level=level or Config.LOG_LEVEL,
        format=Config.LOG_FORMAT,
        force=True
    )
