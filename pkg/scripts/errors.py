"""Exceptions shared by the pipeline stages"""


class BenchmarkDataError(ValueError):
    """Input data violates a leaderboard, ranking or dataset invariant"""


class UsageError(Exception):
    """Bad subcommand, flag or flag value on the command line"""
