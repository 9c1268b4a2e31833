# criteria.py
# Sample criteria for MS, SMS, TSMS and the multi-index TSMS, plus the
# quadrature check that the smoothed population TSMS criterion equals SMS.
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from dgp import Dataset, MultiDataset
from firststage import FirstStageFit, ball_density, fit_first_stage
from geometry import change_basis, coords_of
from helper_functions import (DimensionError, QuadratureError, ValidationError, log,
                              require)

CRITERION_KINDS = ('ms', 'sms', 'tsms', 'tsms-mmi')
MAX_SCREEN_CELLS = 8_000_000


@dataclass(frozen=True)
class CriterionSpec:
    """
    Which criterion to build. TSMS kinds take either a prebuilt `first_stage`
    or a `bandwidth` to fit one; `split_sample` fits it on the first half of
    the data and evaluates the criterion on the second half.
    """
    kind: str
    bandwidth: float = None
    first_stage: object = None
    split_sample: bool = False

    def __post_init__(self):
        kind = str(self.kind).lower()
        require(kind in CRITERION_KINDS, f"unknown criterion kind '{self.kind}'")
        object.__setattr__(self, 'kind', kind)
        if self.bandwidth is not None:
            require(self.bandwidth > 0 and np.isfinite(self.bandwidth), f"bandwidth must be > 0, got {self.bandwidth}")
        if kind == 'sms':
            require(self.bandwidth is not None, "SMS needs a bandwidth")
        if kind in ('tsms', 'tsms-mmi'):
            require(self.first_stage is not None or self.bandwidth is not None,
                    f"{kind} needs a first-stage fit or a bandwidth to build one")


# --- Plain criterion functions ---
def _check_theta(data_d, theta):
    t = coords_of(theta)
    if t.size != data_d:
        raise DimensionError(f"theta has dimension {t.size}, data has d={data_d}")
    return t


def ms_criterion(data, theta):
    t = _check_theta(data.d, theta)
    w = data.y - 0.5
    return math.fsum(w[data.X @ t >= 0]) / data.n


def sms_criterion(data, theta, b):
    require(b > 0, f"bandwidth must be > 0, got {b}")
    t = _check_theta(data.d, theta)
    return math.fsum((data.y - 0.5) * ndtr(data.X @ t / b)) / data.n


def tsms_criterion(data, hhat, theta):
    t = _check_theta(data.d, theta)
    h = hhat.values_at(data.X)
    return math.fsum(h[data.X @ t >= 0]) / data.n


def _mmi_blocks(data):
    if isinstance(data, MultiDataset):
        return data.X, data.flat()
    # a binary dataset is the J = 1 case
    return data.X[:, None, :], data.X


def tsms_mmi_criterion(data, hhat, theta):
    """ Minus the average rectified sign violation; 0 when nothing is penalized. """
    blocks, flat = _mmi_blocks(data)
    t = _check_theta(blocks.shape[2], theta)
    h = hhat.values_at(flat)
    idx = blocks @ t
    all_negative = np.all(idx < 0, axis=1)
    all_positive = np.all(idx > 0, axis=1)
    penalties = np.concatenate([np.maximum(h, 0.0)[all_negative], np.maximum(-h, 0.0)[all_positive]])
    return -math.fsum(penalties) / blocks.shape[0]


# --- Evaluable criterion objects ---
class Criterion:
    """
    θ -> Q_n(θ) with exact summation for single evaluations and a vectorized
    `evaluate_many` for screening candidate sets.
    """

    def __init__(self, kind, blocks, weights, n, bandwidth=None, first_stage=None):
        self.kind = kind
        self.blocks = blocks
        self.weights = weights
        self.n = n
        self.bandwidth = bandwidth
        self.first_stage = first_stage
        self.d = blocks.shape[-1]

    @property
    def piecewise_constant(self):
        return self.kind in ('ms', 'tsms', 'tsms-mmi')

    @property
    def index_rows(self):
        """ Rows whose sign changes define the breakpoints of the criterion in θ. """
        return self.blocks.reshape(-1, self.d)

    def _terms(self, index):
        """ Per-observation contributions given index values (n x J, or n x J x m). """
        if self.kind == 'sms':
            ind = ndtr(index[:, 0] / self.bandwidth)
            return self.weights[:, None] * ind if ind.ndim == 2 else self.weights * ind
        if self.kind in ('ms', 'tsms'):
            ind = index[:, 0] >= 0
            return self.weights[:, None] * ind if ind.ndim == 2 else self.weights * ind
        pos = np.maximum(self.weights, 0.0)
        neg = np.maximum(-self.weights, 0.0)
        all_negative = np.all(index < 0, axis=1)
        all_positive = np.all(index > 0, axis=1)
        if all_negative.ndim == 2:
            return -(pos[:, None] * all_negative + neg[:, None] * all_positive)
        return -(pos * all_negative + neg * all_positive)

    def __call__(self, theta):
        t = coords_of(theta)
        if t.size != self.d:
            raise DimensionError(f"theta has dimension {t.size}, criterion has d={self.d}")
        return math.fsum(self._terms(self.blocks @ t)) / self.n

    def evaluate_many(self, thetas):
        """ Values at each row of `thetas` (float64 sums; rescore with __call__ before comparing ties). """
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty(thetas.shape[0])
        per_theta = self.blocks.shape[0] * self.blocks.shape[1]
        chunk = max(1, MAX_SCREEN_CELLS // per_theta)
        for start in range(0, thetas.shape[0], chunk):
            T = thetas[start:start + chunk]
            index = np.einsum('njd,md->njm', self.blocks, T)
            out[start:start + chunk] = self._terms(index).sum(axis=0) / self.n
        return out


def make_criterion(data, spec):
    if spec.kind in ('ms', 'sms', 'tsms') and not isinstance(data, Dataset):
        raise ValidationError(f"{spec.kind} needs a binary Dataset, got {type(data).__name__}")
    if spec.kind in ('ms', 'sms'):
        return Criterion(spec.kind, data.X[:, None, :], data.y - 0.5, data.n, bandwidth=spec.bandwidth)

    fit_data, eval_data = data.split(0.5) if spec.split_sample else (data, data)
    hhat = spec.first_stage if spec.first_stage is not None else fit_first_stage(fit_data, spec.bandwidth)
    if spec.kind == 'tsms':
        blocks, flat = eval_data.X[:, None, :], eval_data.X
    else:
        blocks, flat = _mmi_blocks(eval_data)
    weights = np.array(hhat.values_at(flat), dtype=float)
    return Criterion(spec.kind, blocks, weights, eval_data.n,
                     bandwidth=getattr(hhat, 'bandwidth', None), first_stage=hhat)


# --- Population identity ---
GL_ORDER = 20
QUAD_TOL = 1e-7


def _tensor_gl(f, a1, b1, a2, b2, panels1, panels2):
    nodes, wts = leggauss(GL_ORDER)
    e1 = np.linspace(a1, b1, panels1 + 1)
    e2 = np.linspace(a2, b2, panels2 + 1)
    h1 = np.diff(e1) / 2
    h2 = np.diff(e2) / 2
    u1 = ((e1[:-1] + e1[1:]) / 2)[:, None] + h1[:, None] * nodes[None, :]
    u2 = ((e2[:-1] + e2[1:]) / 2)[:, None] + h2[:, None] * nodes[None, :]
    w1 = (h1[:, None] * wts[None, :]).ravel()
    w2 = (h2[:, None] * wts[None, :]).ravel()
    U1, U2 = np.meshgrid(u1.ravel(), u2.ravel(), indexing='ij')
    values = f(np.column_stack([U1.ravel(), U2.ravel()])).reshape(U1.shape)
    return float(w1 @ values @ w2)


def population_identity_check(data, b, theta, max_panels=256):
    """
    Returns (lhs, rhs): lhs integrates ĥ(x)1{x'θ >= 0}p_x over the plane
    (ĥ from the kernel formula, domain truncated at radius 1 + 8b), rhs is
    the SMS sample criterion with the same bandwidth.
    """
    if data.d != 2:
        raise DimensionError(f"population identity check is two-dimensional, got d={data.d}")
    require(b > 0, f"bandwidth must be > 0, got {b}")
    t = _check_theta(2, theta)
    frame = change_basis(t)
    fit = FirstStageFit(data.X, data.y - 0.5, b, mode='known-density')
    p_x = ball_density(2)
    R = 1.0 + 8.0 * b

    def integrand(u):
        return fit.evaluate_known_density(frame.from_frame(u)) * p_x

    panels = 4
    previous = _tensor_gl(integrand, 0.0, R, -R, R, panels, 2 * panels)
    diff = np.inf
    while panels < max_panels:
        panels *= 2
        current = _tensor_gl(integrand, 0.0, R, -R, R, panels, 2 * panels)
        diff = abs(current - previous)
        previous = current
        if diff < QUAD_TOL:
            break
    else:
        raise QuadratureError("population identity quadrature did not converge", diff)
    rhs = sms_criterion(data, t, b)
    log('DEBUG', f"identity check: lhs={previous:.12g} rhs={rhs:.12g} panels={panels}")
    return previous, rhs
