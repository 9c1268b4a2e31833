# helper_functions.py
import os
import sys
import time

import numpy as np

# --- Configuration (read at call time, so callers may set env vars late) ---
DEFAULT_DATABASE_URL = 'sqlite:///tsms_results.db'
LOG_LEVELS = {'DEBUG': 10, 'INFO': 20, 'WARNING': 30, 'ERROR': 40}


def get_log_level():
    level = os.environ.get('TSMS_LOG_LEVEL', 'INFO').upper()
    return LOG_LEVELS.get(level, LOG_LEVELS['INFO'])


def get_worker_count(task_count=None):
    """ Worker processes for replications: TSMS_THREADS, else machine parallelism. """
    raw = os.environ.get('TSMS_THREADS')
    workers = os.cpu_count() or 1
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            log('WARNING', f"TSMS_THREADS '{raw}' is not an integer. Using {workers} workers.")
    workers = max(1, workers)
    if task_count is not None:
        workers = max(1, min(workers, task_count))
    return workers


def get_database_url():
    database_url = os.environ.get('DATABASE_URL')
    if not database_url:
        return DEFAULT_DATABASE_URL
    if database_url.startswith("postgres://"):
        database_url = database_url.replace("postgres://", "postgresql://", 1)
    return database_url


def running_under_pytest():
    return 'PYTEST_CURRENT_TEST' in os.environ


# --- Console logging ---
def log(level, message):
    """ Prints `LEVEL: message` to stderr when the level passes TSMS_LOG_LEVEL. """
    if LOG_LEVELS.get(level, 20) < get_log_level():
        return
    print(f"{level}: {message}", file=sys.stderr, flush=True)


class Stopwatch:
    def __init__(self):
        self.start_time = time.time()

    def elapsed(self):
        return round(time.time() - self.start_time, 2)


# --- Errors ---
class TSMSError(Exception):
    """ Base class for every error raised by this package. """


class ValidationError(TSMSError):
    pass


class DimensionError(ValidationError):
    pass


class DatasetFormatError(ValidationError):
    def __init__(self, message, rows=None):
        self.rows = list(rows or [])
        if self.rows:
            shown = ', '.join(str(r) for r in self.rows[:20])
            more = f" (+{len(self.rows) - 20} more)" if len(self.rows) > 20 else ""
            message = f"{message} (rows: {shown}{more})"
        super().__init__(message)


class EvaluationError(TSMSError):
    pass


class QuadratureError(TSMSError):
    def __init__(self, message, achieved_tolerance):
        self.achieved_tolerance = achieved_tolerance
        super().__init__(f"{message} (achieved tolerance {achieved_tolerance:.3g})")


class UnsupportedError(TSMSError):
    pass


class ExperimentError(TSMSError):
    pass


def require(condition, message, error=ValidationError):
    if not condition:
        raise error(message)


# --- Seeds and number formatting ---
def derive_seed(base_seed, *keys):
    """ 64-bit seed mixed from the base seed and integer keys (e.g. n, replication). """
    state = np.random.SeedSequence([int(base_seed), *[int(k) for k in keys]]).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def format_float(value):
    """ 17 significant digits: enough for an exact float64 round trip. """
    return format(float(value), '.17g')
