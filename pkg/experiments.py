# experiments.py
# Monte Carlo harness: rate recovery, slope fitting, normality diagnostics and
# empirical-process probes.
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from functools import partial

import numpy as np
import pytz
from scipy import stats

from criteria import CriterionSpec
from dgp import (ErrorSpec, LinkSpec, default_theta0, sample_covariates_ball, simulate_binary,
                 simulate_multi_index, true_h0)
from firststage import OracleFit, fit_first_stage, interior_grid, sup_norm_error
from geometry import Direction, change_basis, coords_of, sphere_point_at_distance, tangent_project
from helper_functions import (DimensionError, ExperimentError, Stopwatch, ValidationError, derive_seed,
                              get_worker_count, log, make_rng, require)
from optimizer import OptimizerConfig, estimate
from rates import classify_regime, first_stage_optimal_bandwidth, optimal_bandwidth

ESTIMATOR_KINDS = ('ms', 'sms', 'tsms', 'tsms-oracle', 'tsms-mmi', 'first-stage')
BANDWIDTH_RULES = ('theorem1-optimal', 'first-stage-optimal', 'fixed')
MAX_FAILURE_SHARE = 0.05


# --- Specs and results ---
@dataclass(frozen=True)
class ExperimentSpec:
    estimator: str = 'tsms'
    d: int = 2
    J: int = 2
    p: int = 2
    theta0: Direction = None
    error: ErrorSpec = field(default_factory=ErrorSpec)
    link: LinkSpec = field(default_factory=LinkSpec)
    noise_sd: float = 0.25
    n_grid: tuple = (250, 500, 1000, 2000, 4000, 8000)
    replications: int = 200
    bandwidth_rule: str = 'theorem1-optimal'
    bandwidth: float = None
    base_seed: int = 0
    split_sample: bool = False
    optimizer: OptimizerConfig = None
    sup_grid_size: int = 21

    def __post_init__(self):
        require(self.estimator in ESTIMATOR_KINDS, f"unknown estimator '{self.estimator}'")
        require(self.bandwidth_rule in BANDWIDTH_RULES, f"unknown bandwidth rule '{self.bandwidth_rule}'")
        require(self.d >= 2, f"dimension must be >= 2, got d={self.d}")
        n_grid = tuple(int(n) for n in self.n_grid)
        require(len(n_grid) >= 4, f"n-grid needs at least 4 sizes, got {len(n_grid)}")
        require(all(b > a for a, b in zip(n_grid, n_grid[1:])), f"n-grid must be strictly increasing: {n_grid}")
        require(n_grid[0] >= 2, "n-grid sizes must be >= 2")
        object.__setattr__(self, 'n_grid', n_grid)
        require(self.replications >= 50, f"replications must be >= 50, got {self.replications}")
        if self.bandwidth_rule == 'fixed':
            require(self.bandwidth is not None and self.bandwidth > 0, "fixed bandwidth rule needs a bandwidth > 0")
        if self.estimator == 'tsms-mmi':
            require(self.J >= 2, f"multi-index experiments need J >= 2, got J={self.J}")
        require(self.noise_sd >= 0, f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.error.family == 'heteroskedastic-logistic':
            require(len(self.error.slope) == self.d,
                    f"error slope has length {len(self.error.slope)}, expected d={self.d}", DimensionError)
        classify_regime(self.regression_dim(), self.p)
        if self.uses_bandwidth and self.bandwidth_rule == 'theorem1-optimal':
            require(self.p == 2, f"the theorem1-optimal bandwidth rule needs p=2, got p={self.p}")
        theta0 = self.theta0 if self.theta0 is not None else default_theta0(self.d)
        if not isinstance(theta0, Direction):
            theta0 = Direction.from_vector(theta0)
        require(theta0.d == self.d, f"theta0 has dimension {theta0.d}, expected {self.d}")
        object.__setattr__(self, 'theta0', theta0)

    @property
    def metric(self):
        return 'sup_norm_error' if self.estimator == 'first-stage' else 'tangent_error'

    @property
    def uses_bandwidth(self):
        return self.estimator not in ('ms', 'tsms-oracle')

    def regression_dim(self):
        """ Dimension the first stage smooths over. """
        return self.J * self.d if self.estimator == 'tsms-mmi' else self.d

    def bandwidth_for(self, n):
        if self.bandwidth_rule == 'fixed':
            return float(self.bandwidth)
        if self.bandwidth_rule == 'first-stage-optimal':
            return first_stage_optimal_bandwidth(self.regression_dim(), n)
        return optimal_bandwidth(self.regression_dim(), n, self.p)

    def to_dict(self):
        out = asdict(self)
        out['theta0'] = self.theta0.tolist()
        out['n_grid'] = list(self.n_grid)
        out['error']['slope'] = list(self.error.slope)
        out['optimizer'] = asdict(self.optimizer) if self.optimizer is not None else None
        return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    per_n: list
    slope: float
    slope_stderr: float
    records: list
    failures: list
    metadata: dict

    @property
    def raw_errors(self):
        return [r['error'] for r in self.records]

    def summary_rows(self):
        return [{k: row[k] for k in ('n', 'median', 'q25', 'q75', 'mean')} for row in self.per_n]

    def to_dict(self):
        return {
            'spec': self.spec.to_dict(),
            'metric': self.spec.metric,
            'per_n': self.per_n,
            'slope': self.slope,
            'slope_stderr': self.slope_stderr,
            'records': self.records,
            'failures': self.failures,
            'metadata': self.metadata,
        }


# --- Slopes ---
def fit_loglog_slope(points):
    """ OLS of log(error) on log(n); returns (slope, standard error). """
    points = list(points)
    require(len(points) >= 3, f"slope fit needs at least 3 points, got {len(points)}")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    bad = [i for i in range(len(points)) if not (x[i] > 0 and y[i] > 0)]
    if bad:
        raise ValidationError(f"log-log fit needs positive values, offending points {bad}")
    fit = stats.linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


# --- Replications ---
def _estimate_once(spec, n, rng):
    t0 = spec.theta0
    b = spec.bandwidth_for(n) if spec.uses_bandwidth else None
    if spec.estimator == 'tsms-mmi':
        data = simulate_multi_index(n, spec.J, spec.d, t0, spec.link, spec.noise_sd, rng)
        crit = CriterionSpec('tsms-mmi', bandwidth=b, split_sample=spec.split_sample)
    else:
        data = simulate_binary(n, spec.d, t0, spec.error, rng)
        if spec.estimator == 'tsms-oracle':
            crit = CriterionSpec('tsms', first_stage=OracleFit(partial(true_h0, theta0=t0, err=spec.error)))
        elif spec.estimator == 'ms':
            crit = CriterionSpec('ms')
        else:
            crit = CriterionSpec(spec.estimator, bandwidth=b,
                                 split_sample=spec.split_sample and spec.estimator == 'tsms')
    cfg = spec.optimizer or OptimizerConfig.default_for(spec.d)
    result = estimate(data, crit, cfg, rng)
    theta_hat = result.argmax
    return {
        'error': float(np.linalg.norm(tangent_project(t0, theta_hat))),
        'raw_error': float(np.linalg.norm(theta_hat.coords - t0.coords)),
        'theta_hat': theta_hat.tolist(),
        'value': result.value,
        'bandwidth': b,
    }


def _first_stage_once(spec, n, rng):
    b = spec.bandwidth_for(n)
    data = simulate_binary(n, spec.d, spec.theta0, spec.error, rng)
    fit = fit_first_stage(data, b)
    grid = interior_grid(spec.d, spec.sup_grid_size)
    oracle = partial(true_h0, theta0=spec.theta0, err=spec.error)
    error = sup_norm_error(fit, oracle, grid)
    return {'error': error, 'raw_error': error, 'theta_hat': None, 'value': None, 'bandwidth': b}


def _run_replication(task):
    """ One (n, replication) cell; module level so worker processes can unpickle it. """
    spec, n, r = task
    seed = derive_seed(spec.base_seed, n, r)
    record = {'n': n, 'replication': r, 'seed': seed}
    watch = Stopwatch()
    try:
        rng = np.random.default_rng(seed)
        body = _first_stage_once if spec.estimator == 'first-stage' else _estimate_once
        record.update(body(spec, n, rng))
        record['failure'] = None
    except Exception as e:
        record['failure'] = f"{type(e).__name__}: {e}"
    record['elapsed'] = watch.elapsed()
    return record


def _map_replications(tasks, workers):
    if workers <= 1:
        return [_run_replication(t) for t in tasks]
    chunksize = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_replication, tasks, chunksize=chunksize))


def _summarize(values):
    v = np.sort(np.asarray(values, dtype=float))
    q25, median, q75 = np.quantile(v, [0.25, 0.5, 0.75])
    return {'median': float(median), 'q25': float(q25), 'q75': float(q75), 'mean': float(np.mean(v))}


def run_rate_experiment(spec, workers=None):
    """
    Runs every (n, replication) cell, aggregates per n and fits the log-log
    slope of median error against n. Deterministic given the spec.
    """
    tasks = [(spec, n, r) for n in spec.n_grid for r in range(spec.replications)]
    workers = workers or get_worker_count(len(tasks))
    started_at = datetime.now(pytz.utc)
    watch = Stopwatch()
    log('INFO', f"running {spec.estimator} experiment: d={spec.d}, n-grid={list(spec.n_grid)}, "
                f"R={spec.replications}, {workers} worker(s)")

    outcomes = _map_replications(tasks, workers)
    records = [o for o in outcomes if o['failure'] is None]
    failures = [{k: o[k] for k in ('n', 'replication', 'seed', 'failure')} for o in outcomes if o['failure']]
    for f in failures:
        log('DEBUG', f"replication n={f['n']} r={f['replication']} failed: {f['failure']}")
    if len(failures) > MAX_FAILURE_SHARE * len(tasks):
        raise ExperimentError(f"{len(failures)} of {len(tasks)} replications failed; first: {failures[0]['failure']}")

    per_n = []
    for n in spec.n_grid:
        cell = [o for o in records if o['n'] == n]
        if not cell:
            raise ExperimentError(f"every replication failed at n={n}")
        row = {'n': n, **_summarize([o['error'] for o in cell])}
        row['raw_median'] = _summarize([o['raw_error'] for o in cell])['median']
        row['count'] = len(cell)
        row['failures'] = sum(1 for f in failures if f['n'] == n)
        row['bandwidth'] = cell[0]['bandwidth']
        per_n.append(row)

    slope, stderr = fit_loglog_slope([(row['n'], row['median']) for row in per_n])
    elapsed = watch.elapsed()
    log('INFO', f"{spec.estimator} experiment finished in {elapsed} seconds: slope {slope:.4f} ± {stderr:.4f}, "
                f"{len(failures)} failure(s)")
    metadata = {'started_at': started_at.isoformat(), 'elapsed_seconds': elapsed,
                'workers': workers, 'metric': spec.metric, 'base_seed': spec.base_seed}
    return ExperimentResult(spec, per_n, slope, stderr, records, failures, metadata)


def run_first_stage_experiment(spec, workers=None):
    """ Sup-norm error of the kernel first stage on an interior grid, across the n-grid. """
    if spec.estimator != 'first-stage':
        raise ValidationError(f"first-stage experiment needs estimator 'first-stage', got '{spec.estimator}'")
    return run_rate_experiment(spec, workers)


# --- Normality ---
def normality_diagnostic(errors, theta0=None, ks_level=0.01, skew_threshold=0.35):
    """
    Standardizes each tangent coordinate and compares it with N(0, 1).
    With theta0 the vectors are rotated into the tangent frame first.
    Without it, d-vectors (d >= 2) are rotated onto their d - 1 leading
    principal axes, which span the tangent plane; a single column is used as is.
    """
    E = np.asarray(errors, dtype=float)
    E = E.reshape(-1, 1) if E.ndim == 1 else E
    require(E.shape[0] >= 200, f"normality diagnostic needs >= 200 vectors, got {E.shape[0]}")
    if theta0 is not None:
        E = E @ change_basis(theta0).columns[:, 1:]
    elif E.shape[1] >= 2:
        _, _, vt = np.linalg.svd(E - E.mean(axis=0), full_matrices=False)
        E = E @ vt[:E.shape[1] - 1].T

    coordinates = []
    for k in range(E.shape[1]):
        c = E[:, k]
        sd = float(np.std(c, ddof=1))
        if not sd > 1e-14 * max(1.0, float(np.max(np.abs(c)))):
            coordinates.append({'coordinate': k, 'degenerate': True, 'passed': False})
            continue
        z = (c - c.mean()) / sd
        ks = stats.kstest(z, 'norm')
        skewness = float(stats.skew(z))
        coordinates.append({
            'coordinate': k,
            'degenerate': False,
            'ks_statistic': float(ks.statistic),
            'ks_pvalue': float(ks.pvalue),
            'skewness': skewness,
            'excess_kurtosis': float(stats.kurtosis(z)),
            'passed': bool(ks.pvalue >= ks_level and abs(skewness) < skew_threshold),
        })
    degenerate = any(c['degenerate'] for c in coordinates)
    return {'count': int(E.shape[0]), 'coordinates': coordinates, 'degenerate': degenerate,
            'passed': bool(not degenerate and all(c['passed'] for c in coordinates))}


def tangent_errors(result):
    """ Tangent-projected error vectors of every successful replication, per n. """
    t0 = result.spec.theta0
    out = {}
    for rec in result.records:
        if rec['theta_hat'] is not None:
            out.setdefault(rec['n'], []).append(tangent_project(t0, rec['theta_hat']))
    return {n: np.array(v) for n, v in out.items()}


# --- Probes ---
def _exponent(rows, x_key, y_key):
    points = [(r[x_key], r[y_key]) for r in rows if r[x_key] > 0 and r[y_key] > 0]
    if len(points) < 3:
        return None, None
    return fit_loglog_slope(points)


def h0_gradient_bound(theta0, err, grid_size=None, step=1e-5):
    """ Max ‖∇h0‖ over a lattice in the ball, by central differences. """
    t0 = coords_of(theta0)
    d = t0.size
    grid_size = grid_size or (113 if d == 2 else max(5, int(round(12_000 ** (1.0 / d)))))
    axis = np.linspace(-1.0, 1.0, grid_size)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    points = mesh[np.linalg.norm(mesh, axis=1) < 1.0 - step]
    grad = np.empty_like(points)
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        grad[:, k] = (true_h0(points + e, t0, err) - true_h0(points - e, t0, err)) / (2 * step)
    return float(np.max(np.linalg.norm(grad, axis=1)))


def smoothing_envelope_probe(theta0, err, delta_list, m, rng):
    """
    For each δ: a random θ at chord distance δ, m uniform points, and h0
    restricted to the set where the indicators at θ and θ0 disagree.
    """
    require(m >= 10_000, f"envelope probe needs m >= 10^4, got {m}")
    t0 = coords_of(theta0)
    rng = make_rng(rng)
    rows = []
    for delta in delta_list:
        require(0 <= delta <= 0.5, f"δ must lie in [0, 1/2], got {delta}")
        theta = sphere_point_at_distance(t0, delta, rng).coords
        X = sample_covariates_ball(m, t0.size, rng)
        disagree = (X @ theta >= 0) != (X @ t0 >= 0)
        h = true_h0(X, t0, err)
        empty = not disagree.any()
        rows.append({
            'delta': float(delta),
            'max_abs_h0': 0.0 if empty else float(np.max(np.abs(h[disagree]))),
            'mean_sq_h0': float(np.mean(h ** 2 * disagree)),
            'disagreements': int(disagree.sum()),
            'empty': bool(empty),
        })
    exponent, stderr = _exponent(rows, 'delta', 'mean_sq_h0')
    return {'rows': rows, 'exponent': exponent, 'exponent_stderr': stderr}


def _theta_ball(t0, delta, points, rng):
    """ θ-grid inside the chord-δ ball around θ0, θ0 itself excluded. """
    require(0 <= delta <= 2, f"δ must lie in [0, 2], got {delta}")
    if delta == 0:
        return np.empty((0, t0.size))
    if t0.size == 2:
        base = np.arctan2(t0[1], t0[0])
        phi = 2 * np.arcsin(delta / 2)
        angles = base + np.linspace(-phi, phi, points)
        angles = angles[angles != base]
        return np.column_stack([np.cos(angles), np.sin(angles)])
    distances = np.linspace(delta / points, delta, points)
    return np.array([sphere_point_at_distance(t0, r, rng).coords for r in distances])


def empirical_process_probe(theta0, err, n, delta_list, reps, rng, weight='h0', grid_points=16,
                            oracle_draws=1_000_000):
    """
    Mean over replications of sup_θ |√n (P_n - P)(w·(1{x'θ >= 0} - 1{x'θ0 >= 0}))|
    over a θ-grid in each δ-ball; w is h0 or the constant 1.
    """
    require(reps >= 100, f"empirical-process probe needs reps >= 100, got {reps}")
    require(weight in ('h0', 'unit'), f"unknown weight '{weight}'")
    t0 = coords_of(theta0)
    d = t0.size
    rng = make_rng(rng)

    def weights(X):
        return true_h0(X, t0, err) if weight == 'h0' else np.ones(X.shape[0])

    grids = [_theta_ball(t0, delta, grid_points, rng) for delta in delta_list]
    oracle = sample_covariates_ball(oracle_draws, d, rng)
    w_oracle = weights(oracle)
    base_oracle = oracle @ t0 >= 0
    P = [np.array([np.mean(w_oracle * ((oracle @ th >= 0).astype(float) - base_oracle)) for th in grid])
         for grid in grids]
    del oracle

    sups = np.zeros((reps, len(delta_list)))
    for r in range(reps):
        X = sample_covariates_ball(n, d, rng)
        w = weights(X)
        base = X @ t0 >= 0
        for k, grid in enumerate(grids):
            if grid.shape[0] == 0:
                continue
            Pn = (w[:, None] * ((X @ grid.T >= 0).astype(float) - base[:, None])).mean(axis=0)
            sups[r, k] = np.max(np.abs(np.sqrt(n) * (Pn - P[k])))
    rows = [{'delta': float(delta), 'mean_sup': float(sups[:, k].mean())} for k, delta in enumerate(delta_list)]
    exponent, stderr = _exponent(rows, 'delta', 'mean_sup')
    return {'rows': rows, 'exponent': exponent, 'exponent_stderr': stderr, 'weight': weight}


def first_stage_process_probe(theta0, err, n, delta_list, reps, rng, bandwidth=None, grid_points=16,
                              oracle_draws=20_000):
    """
    Mean sup over the δ-ball of |𝔾_n((ĥ - h0)(1{x'θ >= 0} - 1{x'θ0 >= 0}))|,
    ĥ fitted on an independent sample of the same size.
    """
    require(reps >= 20, f"first-stage probe needs reps >= 20, got {reps}")
    t0 = coords_of(theta0)
    d = t0.size
    rng = make_rng(rng)
    b = first_stage_optimal_bandwidth(d, n) if bandwidth is None else bandwidth
    require(b > 0, f"bandwidth must be > 0, got {b}")
    grids = [_theta_ball(t0, delta, grid_points, rng) for delta in delta_list]
    oracle = sample_covariates_ball(oracle_draws, d, rng)
    h_oracle = true_h0(oracle, t0, err)
    base_oracle = oracle @ t0 >= 0
    ind_oracle = [(oracle @ grid.T >= 0).astype(float) - base_oracle[:, None] for grid in grids]

    sups = np.zeros((reps, len(delta_list)))
    for r in range(reps):
        fit = fit_first_stage(simulate_binary(n, d, t0, err, rng), b)
        X = sample_covariates_ball(n, d, rng)
        diff = fit.evaluate(X) - true_h0(X, t0, err)
        diff_oracle = fit.evaluate(oracle) - h_oracle
        base = X @ t0 >= 0
        for k, grid in enumerate(grids):
            if grid.shape[0] == 0:
                continue
            Pn = (diff[:, None] * ((X @ grid.T >= 0).astype(float) - base[:, None])).mean(axis=0)
            P = (diff_oracle[:, None] * ind_oracle[k]).mean(axis=0)
            sups[r, k] = np.max(np.abs(np.sqrt(n) * (Pn - P)))
    rows = [{'delta': float(delta), 'mean_sup': float(sups[:, k].mean())} for k, delta in enumerate(delta_list)]
    exponent, stderr = _exponent(rows, 'delta', 'mean_sup')
    return {'rows': rows, 'exponent': exponent, 'exponent_stderr': stderr, 'bandwidth': b}
