# dgp.py
# Simulation designs: binary choice on the unit ball and the multi-index
# single-crossing model, each with its analytic h0.
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtr

from geometry import Direction, coords_of
from helper_functions import (DimensionError, ValidationError, log, make_rng, require,
                              running_under_pytest)

ERROR_FAMILIES = ('logistic', 'gaussian', 'heteroskedastic-logistic', 'degenerate')


# --- Error and link specifications ---
@dataclass(frozen=True)
class ErrorSpec:
    """
    Median-zero error law for ε given X = x.
    logistic/gaussian use `scale` as the logistic scale / normal sd.
    heteroskedastic-logistic uses scale·exp(slope'x), bounded on the ball.
    degenerate is ε = 0 and only meant for tests.
    """
    family: str = 'logistic'
    scale: float = 1.0
    slope: tuple = field(default=())

    def __post_init__(self):
        require(self.family in ERROR_FAMILIES, f"unknown error family '{self.family}'")
        require(self.scale > 0 and np.isfinite(self.scale), f"error scale must be > 0, got {self.scale}")
        object.__setattr__(self, 'slope', tuple(float(s) for s in self.slope))
        if self.family == 'heteroskedastic-logistic':
            require(len(self.slope) > 0, "heteroskedastic-logistic needs a slope vector")
        if self.family == 'degenerate' and not running_under_pytest():
            log('WARNING', "degenerate error spec (ε = 0) violates the continuous-error assumption; use it for tests only")

    def scale_at(self, X):
        """ Scale of ε at each row of X. """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.family != 'heteroskedastic-logistic':
            return np.full(X.shape[0], self.scale)
        slope = np.asarray(self.slope)
        if slope.size != X.shape[1]:
            raise DimensionError(f"slope has length {slope.size}, covariates have d={X.shape[1]}")
        return self.scale * np.exp(X @ slope)

    def cdf(self, t, X=None):
        """ F(t | x). X is only consulted by the heteroskedastic family. """
        t = np.asarray(t, dtype=float)
        if self.family == 'degenerate':
            return np.where(t > 0, 1.0, np.where(t < 0, 0.0, 0.5))
        if self.family == 'gaussian':
            return ndtr(t / self.scale)
        if self.family == 'logistic':
            return expit(t / self.scale)
        require(X is not None, "heteroskedastic cdf needs the covariate rows")
        return expit(t / self.scale_at(X))

    def sample(self, X, rng):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        rng = make_rng(rng)
        if self.family == 'degenerate':
            return np.zeros(n)
        if self.family == 'gaussian':
            return self.scale * rng.standard_normal(n)
        return self.scale_at(X) * rng.logistic(0.0, 1.0, n)


def degenerate_errors():
    return ErrorSpec(family='degenerate')


@dataclass(frozen=True)
class LinkSpec:
    """ Multi-index link: h0(x) = G(mean_j x_j'θ0), G(t) = F_logistic(t / scale) - ½. """
    scale: float = 1.0

    def __post_init__(self):
        require(self.scale > 0, f"link scale must be > 0, got {self.scale}")

    def G(self, t):
        return expit(np.asarray(t, dtype=float) / self.scale) - 0.5


# --- Datasets ---
def _check_ball(X, label):
    norms = np.linalg.norm(X, axis=-1)
    bad = np.argwhere(~(norms < 1.0))
    if bad.size:
        rows = sorted({int(i) + 1 for i in bad[:, 0]})
        raise ValidationError(f"{label}: covariates must lie in the open unit ball (rows {rows[:20]})")


@dataclass(frozen=True, eq=False)
class Dataset:
    """ Binary outcomes with covariate rows inside the open unit ball. """
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionError(f"X must be an n x d matrix, got shape {X.shape}")
        require(X.shape[0] >= 1, "dataset needs at least one observation")
        require(X.shape[0] == y.size, f"y has {y.size} entries but X has {X.shape[0]} rows", DimensionError)
        require(X.shape[1] >= 2, f"covariate dimension must be >= 2, got d={X.shape[1]}", DimensionError)
        require(bool(np.all((y == 0) | (y == 1))), "binary outcomes must be 0 or 1")
        _check_ball(X, "Dataset")
        y.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def index_rows(self):
        """ Rows whose signs against θ drive the criterion (n x d). """
        return self.X

    def split(self, fraction=0.5):
        """ First `fraction` of rows and the rest, in order. """
        require(0 < fraction < 1, f"split fraction must lie in (0, 1), got {fraction}")
        k = int(round(self.n * fraction))
        require(0 < k < self.n, f"cannot split n={self.n} at fraction {fraction}")
        return Dataset(self.y[:k], self.X[:k]), Dataset(self.y[k:], self.X[k:])


@dataclass(frozen=True, eq=False)
class MultiDataset:
    """ Outcomes with J >= 2 covariate blocks per observation (X is n x J x d). """
    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim != 3:
            raise DimensionError(f"X must be an n x J x d tensor, got shape {X.shape}")
        require(X.shape[0] >= 1, "dataset needs at least one observation")
        require(X.shape[0] == y.size, f"y has {y.size} entries but X has {X.shape[0]} rows", DimensionError)
        require(X.shape[1] >= 2, f"multi-index data needs J >= 2, got J={X.shape[1]}", DimensionError)
        require(X.shape[2] >= 2, f"covariate dimension must be >= 2, got d={X.shape[2]}", DimensionError)
        require(bool(np.all(np.isfinite(y))), "outcomes must be finite")
        _check_ball(X, "MultiDataset")
        y.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def J(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.X.shape[2]

    @property
    def index_rows(self):
        return self.X.reshape(-1, self.d)

    def flat(self):
        """ vec(X_i) in R^{Jd}, one row per observation. """
        return self.X.reshape(self.n, self.J * self.d)

    def split(self, fraction=0.5):
        require(0 < fraction < 1, f"split fraction must lie in (0, 1), got {fraction}")
        k = int(round(self.n * fraction))
        require(0 < k < self.n, f"cannot split n={self.n} at fraction {fraction}")
        return MultiDataset(self.y[:k], self.X[:k]), MultiDataset(self.y[k:], self.X[k:])


# --- Simulation ---
def sample_covariates_ball(n, d, rng):
    """ n i.i.d. draws uniform on the open unit ball: Gaussian direction times U^{1/d}. """
    require(n >= 1, f"n must be >= 1, got {n}")
    if d < 2:
        raise DimensionError(f"covariate dimension must be >= 2, got d={d}")
    rng = make_rng(rng)
    z = rng.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radius = rng.random(n) ** (1.0 / d)
    X = z / norms * radius[:, None]
    # U can round to exactly 1.0 after the power
    return np.where(np.linalg.norm(X, axis=1, keepdims=True) < 1.0, X, X * (1.0 - 1e-12))


def simulate_binary(n, d, theta0, err, rng):
    t0 = coords_of(theta0)
    require(t0.size == d, f"theta0 has dimension {t0.size}, expected {d}", DimensionError)
    rng = make_rng(rng)
    X = sample_covariates_ball(n, d, rng)
    eps = err.sample(X, rng)
    y = (X @ t0 + eps >= 0).astype(float)
    return Dataset(y, X)


def true_h0(x, theta0, err):
    """ h0(x) = F(x'θ0 | x) - ½ for a point or a stack of points. """
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(x)
    values = err.cdf(rows @ coords_of(theta0), rows) - 0.5
    return float(values[0]) if x.ndim == 1 else values


def multi_index_h0(X, theta0, link):
    """ G of the mean index over the J blocks; X is J x d or n x J x d. """
    X = np.asarray(X, dtype=float)
    blocks = X[None] if X.ndim == 2 else X
    values = link.G((blocks @ coords_of(theta0)).mean(axis=1))
    return float(values[0]) if X.ndim == 2 else values


def simulate_multi_index(n, J, d, theta0, link, noise_sd, rng):
    if J < 2:
        raise DimensionError(f"multi-index data needs J >= 2, got J={J}")
    require(noise_sd >= 0, f"noise_sd must be >= 0, got {noise_sd}")
    t0 = coords_of(theta0)
    require(t0.size == d, f"theta0 has dimension {t0.size}, expected {d}", DimensionError)
    rng = make_rng(rng)
    X = sample_covariates_ball(n * J, d, rng).reshape(n, J, d)
    y = multi_index_h0(X, t0, link) + noise_sd * rng.standard_normal(n)
    return MultiDataset(y, X)


def default_theta0(d):
    """ (1, 1, ..., 1)/√d, the design direction used by the CLI and experiments. """
    return Direction.from_vector(np.ones(d))
