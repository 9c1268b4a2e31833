# firststage.py
# Nadaraya-Watson first stage: ĥ(x) estimates h0(x) = E[y - ½ | X = x].
import hashlib

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma

from dgp import Dataset, MultiDataset
from helper_functions import EvaluationError, ValidationError, log, require

FIRST_STAGE_MODES = ('known-density', 'estimated-density')
DENSITY_FLOOR = 1e-6
# cap on kernel matrix entries held in memory at once
MAX_KERNEL_CELLS = 4_000_000


# --- Kernel and design density ---
def gaussian_kernel(d, u):
    """ Standard d-dimensional Gaussian pdf at u (a vector, or one row per point). """
    u = np.asarray(u, dtype=float)
    value = (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * np.sum(np.atleast_1d(u) ** 2, axis=-1))
    return float(value) if u.ndim <= 1 else value


def ball_density(d):
    """ Uniform density on the unit ball in R^d: 1 / vol(B^d). """
    require(d >= 1, f"dimension must be >= 1, got d={d}")
    return float(np.pi ** (-d / 2) * gamma(d / 2 + 1))


# --- Fits ---
class FirstStageFit:
    """
    Kernel regression fitted on `support` rows with per-row `weights`.
    For binary data weights are y - ½ and the known ball density divides the
    kernel sum; for multi-index data weights are y and the kernel density
    estimate does.
    """

    def __init__(self, support, weights, bandwidth, mode='known-density', reference_density=None):
        support = np.array(support, dtype=float)
        weights = np.array(weights, dtype=float).reshape(-1)
        if support.ndim != 2 or support.shape[0] == 0:
            raise ValidationError("first stage needs a non-empty dataset")
        require(support.shape[0] == weights.size, "weights and support rows disagree in length")
        require(bandwidth > 0 and np.isfinite(bandwidth), f"bandwidth must be > 0, got {bandwidth}")
        require(mode in FIRST_STAGE_MODES, f"unknown first-stage mode '{mode}'")
        require(float(bandwidth) ** support.shape[1] > 0,
                f"bandwidth {bandwidth} is too small: b^d underflows for d={support.shape[1]}")
        support.flags.writeable = False
        weights.flags.writeable = False
        self.support = support
        self.weights = weights
        self.bandwidth = float(bandwidth)
        self.mode = mode
        self.d = support.shape[1]
        self.reference_density = float(reference_density if reference_density is not None else ball_density(self.d))
        self._cache = {}

    @property
    def n(self):
        return self.support.shape[0]

    def _kernel_sums(self, points):
        """ (Σ w_i φ, Σ φ) / (n b^d) at each point, chunked over points. """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        require(points.shape[1] == self.d, f"points have dimension {points.shape[1]}, fit has {self.d}")
        b = self.bandwidth
        norm_const = (2 * np.pi) ** (-self.d / 2) / (self.n * b ** self.d)
        chunk = max(1, MAX_KERNEL_CELLS // self.n)
        numer = np.empty(points.shape[0])
        denom = np.empty(points.shape[0])
        for start in range(0, points.shape[0], chunk):
            block = points[start:start + chunk]
            K = np.exp(-0.5 * cdist(block, self.support, 'sqeuclidean') / (b * b))
            numer[start:start + chunk] = K @ self.weights
            denom[start:start + chunk] = K.sum(axis=1)
        return numer * norm_const, denom * norm_const

    def evaluate_known_density(self, points):
        numer, _ = self._kernel_sums(points)
        return numer / self.reference_density

    def evaluate_estimated_density(self, points):
        numer, density = self._kernel_sums(points)
        floor = DENSITY_FLOOR * self.reference_density
        low = np.flatnonzero(density < floor)
        if low.size:
            raise EvaluationError(f"out-of-support point: density estimate below floor {floor:.3g} "
                                  f"at {low.size} point(s), first index {int(low[0])}")
        return numer / density

    def evaluate(self, points):
        if self.mode == 'known-density':
            return self.evaluate_known_density(points)
        return self.evaluate_estimated_density(points)

    def values_at(self, points):
        """ ĥ at a fixed point set, memoized on the bytes of the points. """
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        key = hashlib.blake2b(points.tobytes(), digest_size=16).hexdigest() + str(points.shape)
        if key not in self._cache:
            values = self.evaluate(points)
            values.flags.writeable = False
            self._cache[key] = values
        return self._cache[key]

    def __call__(self, points):
        return self.evaluate(points)

    def __repr__(self):
        return f"FirstStageFit(n={self.n}, d={self.d}, bandwidth={self.bandwidth:.6g}, mode={self.mode})"


class OracleFit:
    """ Injects a known regression function in place of the kernel estimate. """

    def __init__(self, fn, label='oracle'):
        self.fn = fn
        self.label = label
        self.bandwidth = None
        self.mode = 'oracle'
        self._cache = {}

    def evaluate(self, points):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(points, dtype=float))), dtype=float).reshape(-1)

    def values_at(self, points):
        points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        key = hashlib.blake2b(points.tobytes(), digest_size=16).hexdigest() + str(points.shape)
        if key not in self._cache:
            self._cache[key] = self.evaluate(points)
        return self._cache[key]

    def __call__(self, points):
        return self.evaluate(points)


def fit_first_stage(data, bandwidth, mode=None):
    if isinstance(data, MultiDataset):
        if mode == 'known-density':
            raise ValidationError("multi-index first stage has no known design density; use estimated-density")
        return FirstStageFit(data.flat(), data.y, bandwidth, mode='estimated-density',
                             reference_density=ball_density(data.d) ** data.J)
    if not isinstance(data, Dataset):
        raise ValidationError(f"cannot fit a first stage on {type(data).__name__}")
    fit = FirstStageFit(data.X, data.y - 0.5, bandwidth, mode=mode or 'known-density')
    log('DEBUG', f"fitted {fit!r}")
    return fit


# --- Point evaluation ---
def nw_estimate(fit, x):
    """ ĥ(x) with the known ball density. """
    if fit.mode != 'known-density':
        raise ValidationError(f"nw_estimate needs a known-density fit, got mode '{fit.mode}'")
    return float(fit.evaluate_known_density(np.asarray(x, dtype=float).reshape(1, -1))[0])


def nw_estimate_with_density(fit, x):
    """ Ratio form: kernel-weighted sum over the kernel density estimate. """
    return float(fit.evaluate_estimated_density(np.asarray(x, dtype=float).reshape(1, -1))[0])


def sup_norm_error(fit, h0_oracle, grid):
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    require(grid.shape[0] > 0, "sup-norm grid must be non-empty")
    estimate = np.asarray(fit(grid), dtype=float).reshape(-1)
    truth = np.asarray(h0_oracle(grid), dtype=float).reshape(-1)
    return float(np.max(np.abs(estimate - truth)))


def interior_grid(d, size, radius=0.5):
    """ Lattice points with per-axis `size` steps, kept inside the ball of `radius`. """
    require(size >= 1, f"grid size must be >= 1, got {size}")
    require(0 < radius < 1, f"grid radius must lie in (0, 1), got {radius}")
    axis = np.linspace(-radius, radius, size) if size > 1 else np.zeros(1)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    return mesh[np.linalg.norm(mesh, axis=1) <= radius + 1e-12]
