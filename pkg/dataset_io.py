# dataset_io.py
# CSV datasets, flat key = value config files, and experiment output files.
import json
import re

import numpy as np
import pandas as pd

from dgp import Dataset, ErrorSpec, LinkSpec, MultiDataset
from experiments import ExperimentSpec
from helper_functions import DatasetFormatError, ValidationError, log
from optimizer import OptimizerConfig

SINGLE_COLUMN = re.compile(r'^x(\d+)$')
MULTI_COLUMN = re.compile(r'^x(\d+)_(\d+)$')
FLOAT_FORMAT = '%.17g'


# --- Datasets ---
def _layout_from_header(columns):
    """ ('single', d, None) or ('multi', d, J); raises on anything else. """
    columns = [c.strip() for c in columns]
    if len(columns) < 3 or columns[0] != 'y':
        raise DatasetFormatError(f"malformed header {columns}: expected 'y,x1,...,xd' or 'y,x1_1,...,xJ_d'")
    rest = columns[1:]
    if all(SINGLE_COLUMN.match(c) for c in rest):
        d = len(rest)
        if rest != [f"x{k}" for k in range(1, d + 1)]:
            raise DatasetFormatError(f"malformed header {columns}: covariates must be x1..x{d} in order")
        return 'single', d, None
    matches = [MULTI_COLUMN.match(c) for c in rest]
    if all(matches):
        J = max(int(m.group(1)) for m in matches)
        d = max(int(m.group(2)) for m in matches)
        expected = [f"x{j}_{k}" for j in range(1, J + 1) for k in range(1, d + 1)]
        if rest != expected or J < 2:
            raise DatasetFormatError(f"malformed header {columns}: expected blocks x1_1..x{J}_{d} with J >= 2")
        return 'multi', d, J
    raise DatasetFormatError(f"malformed header {columns}: mixed or unknown covariate columns")


def load_dataset_csv(path):
    try:
        frame = pd.read_csv(path, float_precision='round_trip', skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetFormatError(f"cannot parse {path}: {e}")
    layout, d, J = _layout_from_header(list(frame.columns))

    numeric = frame.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        raise DatasetFormatError(f"{path}: non-numeric or missing cells", rows=list(np.flatnonzero(bad) + 1))
    values = numeric.to_numpy(dtype=float)
    y = values[:, 0]
    if len(y) == 0:
        raise DatasetFormatError(f"{path}: no data rows")

    if layout == 'single':
        X = values[:, 1:]
        outside = np.flatnonzero(~(np.linalg.norm(X, axis=1) < 1.0))
        if outside.size:
            raise DatasetFormatError(f"{path}: covariates outside the open unit ball", rows=list(outside + 1))
        not_binary = np.flatnonzero(~np.isin(y, (0.0, 1.0)))
        if not_binary.size:
            raise DatasetFormatError(f"{path}: outcomes must be 0 or 1", rows=list(not_binary + 1))
        data = Dataset(y, X)
    else:
        X = values[:, 1:].reshape(-1, J, d)
        outside = np.flatnonzero(~np.all(np.linalg.norm(X, axis=2) < 1.0, axis=1))
        if outside.size:
            raise DatasetFormatError(f"{path}: covariate blocks outside the open unit ball", rows=list(outside + 1))
        data = MultiDataset(y, X)
    log('DEBUG', f"loaded {type(data).__name__} from {path}: n={data.n}, d={data.d}")
    return data


def dataset_frame(data):
    if isinstance(data, MultiDataset):
        columns = [f"x{j}_{k}" for j in range(1, data.J + 1) for k in range(1, data.d + 1)]
        X = data.flat()
    else:
        columns = [f"x{k}" for k in range(1, data.d + 1)]
        X = data.X
    return pd.DataFrame(np.column_stack([data.y, X]), columns=['y'] + columns)


def write_dataset_csv(data, path):
    dataset_frame(data).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


# --- Config files ---
def parse_config_file(path):
    """ `key = value` per line, `#` starts a comment. """
    config = {}
    with open(path, encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            text = line.split('#', 1)[0].strip()
            if not text:
                continue
            if '=' not in text:
                raise ValidationError(f"{path}:{number}: expected 'key = value', got '{text}'")
            key, value = (part.strip() for part in text.split('=', 1))
            if not key:
                raise ValidationError(f"{path}:{number}: empty key")
            if key in config:
                raise ValidationError(f"{path}:{number}: duplicate key '{key}'")
            config[key] = value
    return config


def _floats(value):
    return tuple(float(v) for v in value.split(',') if v.strip())


def _bool(value):
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: '{value}'")


SPEC_KEYS = {
    'estimator': str, 'd': int, 'J': int, 'p': int, 'noise_sd': float,
    'replications': int, 'bandwidth_rule': str, 'bandwidth': float,
    'base_seed': int, 'seed': int, 'split_sample': _bool, 'sup_grid_size': int,
    'theta0': _floats, 'n_grid': lambda v: tuple(int(x) for x in v.split(',') if x.strip()),
    'error': str, 'error_scale': float, 'error_slope': _floats, 'link_scale': float,
    'resolution': int, 'rounds': int, 'shrink': float, 'multistart': int, 'probes': int,
}
OPTIMIZER_KEYS = ('resolution', 'rounds', 'shrink', 'multistart', 'probes')


def experiment_spec_from_config(config):
    unknown = sorted(set(config) - set(SPEC_KEYS))
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
    parsed = {}
    for key, raw in config.items():
        try:
            parsed[key] = SPEC_KEYS[key](raw)
        except ValueError as e:
            raise ValidationError(f"config key '{key}': cannot parse '{raw}' ({e})")

    kwargs = {k: parsed[k] for k in ('estimator', 'd', 'J', 'p', 'noise_sd', 'replications', 'bandwidth_rule',
                                     'bandwidth', 'base_seed', 'split_sample', 'sup_grid_size', 'theta0', 'n_grid')
              if k in parsed}
    if 'seed' in parsed:
        kwargs.setdefault('base_seed', parsed['seed'])
    if 'error' in parsed or 'error_scale' in parsed or 'error_slope' in parsed:
        kwargs['error'] = ErrorSpec(parsed.get('error', 'logistic'), parsed.get('error_scale', 1.0),
                                    parsed.get('error_slope', ()))
    if 'link_scale' in parsed:
        kwargs['link'] = LinkSpec(parsed['link_scale'])
    overrides = {k: parsed[k] for k in OPTIMIZER_KEYS if k in parsed}
    if overrides:
        kwargs['optimizer'] = OptimizerConfig.default_for(kwargs.get('d', 2), **overrides)
    return ExperimentSpec(**kwargs)


# --- Outputs ---
def write_json(payload, path):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write('\n')


def write_experiment_outputs(result, json_path, csv_path):
    write_json(result.to_dict(), json_path)
    pd.DataFrame(result.summary_rows(), columns=['n', 'median', 'q25', 'q75', 'mean']).to_csv(
        csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    log('INFO', f"wrote {json_path} and {csv_path}")
