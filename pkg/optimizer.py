# optimizer.py
# Global maximization of sample criteria over the unit sphere.
from dataclasses import dataclass, field

import numpy as np

from criteria import make_criterion
from geometry import (Direction, angle_of, canonical_key, direction_from_angle, grid_spacing,
                      sphere_grid, tangent_perturb)
from helper_functions import DimensionError, log, make_rng, require

SCREEN_TOL = 1e-9
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class OptimizerConfig:
    resolution: int = 720
    rounds: int = 8
    shrink: float = 0.5
    multistart: int = 8
    probes: int = 16

    def __post_init__(self):
        require(self.resolution >= 8, f"grid resolution must be >= 8, got {self.resolution}")
        require(self.rounds >= 0, f"refinement rounds must be >= 0, got {self.rounds}")
        require(0 < self.shrink < 1, f"shrink factor must lie in (0, 1), got {self.shrink}")
        require(self.multistart >= 1, f"multistart must be >= 1, got {self.multistart}")
        require(self.probes >= 1, f"probes must be >= 1, got {self.probes}")

    @classmethod
    def default_for(cls, d, **overrides):
        resolution = 720 if d == 2 else 4096 if d == 3 else 8192 * d
        return cls(**{'resolution': resolution, **overrides})

    @property
    def refinement_budget(self):
        return self.rounds * self.multistart * self.probes


@dataclass
class OptResult:
    argmax: Direction
    value: float
    evaluations: int
    method: str
    history: list = field(default_factory=list)

    def to_dict(self):
        return {'theta_hat': self.argmax.tolist(), 'value': self.value,
                'evaluations': self.evaluations, 'method': self.method}


def _screen(criterion, thetas):
    if hasattr(criterion, 'evaluate_many'):
        return np.asarray(criterion.evaluate_many(thetas), dtype=float)
    return np.array([criterion(t) for t in thetas], dtype=float)


def _exact(criterion, theta):
    return float(criterion(theta))


# --- d = 2: enumerate the arrangement of half-planes ---
def exact_argmax_2d(criterion, data_rows=None):
    """
    The criterion only changes where some x'θ crosses 0, so its maximum over
    the circle is attained at a breakpoint angle or at an arc midpoint.
    Ties go to the smallest angle in [0, 2π).
    """
    rows = np.asarray(criterion.index_rows if data_rows is None else data_rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 2:
        raise DimensionError(f"exact solver is two-dimensional, got rows of shape {rows.shape}")
    rows = rows[np.any(rows != 0, axis=1)]
    phi = np.arctan2(rows[:, 1], rows[:, 0])
    breaks = np.unique(np.mod(np.concatenate([phi + np.pi / 2, phi - np.pi / 2]), TWO_PI))
    if breaks.size == 0:
        candidates = np.array([0.0])
    else:
        nxt = np.append(breaks[1:], breaks[0] + TWO_PI)
        mids = np.mod((breaks + nxt) / 2, TWO_PI)
        candidates = np.unique(np.concatenate([breaks, mids]))
    thetas = np.column_stack([np.cos(candidates), np.sin(candidates)])
    screened = _screen(criterion, thetas)
    near = np.flatnonzero(screened >= screened.max() - SCREEN_TOL)
    best_value, best_alpha = -np.inf, None
    for i in near:
        value = _exact(criterion, thetas[i])
        # candidates are sorted, so strict improvement keeps the smallest angle
        if value > best_value:
            best_value, best_alpha = value, candidates[i]
    argmax = Direction(direction_from_angle(best_alpha))
    value = _exact(criterion, argmax.coords)
    log('DEBUG', f"exact 2-D solver: {candidates.size} candidates, value {value:.12g} at angle {angle_of(argmax):.6f}")
    return OptResult(argmax, value, int(candidates.size), 'exact2d', [value])


# --- General d: grid screen, then shrinking tangent-space pattern search ---
def _order_key(value, theta):
    return (-value, canonical_key(theta))


def maximize_on_sphere(criterion, d, cfg=None, rng=None):
    if d < 2:
        raise DimensionError(f"sphere dimension must be >= 2, got d={d}")
    cfg = cfg or OptimizerConfig.default_for(d)
    rng = make_rng(0 if rng is None else rng)
    grid = sphere_grid(d, cfg.resolution)
    screened = _screen(criterion, grid)
    shortlist = sorted(range(grid.shape[0]), key=lambda i: _order_key(screened[i], grid[i]))
    shortlist = shortlist[:max(cfg.multistart * 4, cfg.multistart)]
    starts = sorted(((_exact(criterion, grid[i]), grid[i]) for i in shortlist),
                    key=lambda vt: _order_key(*vt))[:cfg.multistart]

    history = [starts[0][0]]
    radius = grid_spacing(d, cfg.resolution)
    for _ in range(cfg.rounds):
        updated = []
        for value, theta in starts:
            probes = tangent_perturb(theta, radius, rng, cfg.probes)
            probe_values = _screen(criterion, probes)
            j = int(np.argmax(probe_values))
            candidate = _exact(criterion, probes[j])
            updated.append((candidate, probes[j]) if candidate > value else (value, theta))
        starts = updated
        history.append(max(v for v, _ in starts))
        radius *= cfg.shrink

    best_value, best_theta = min(starts, key=lambda vt: _order_key(*vt))
    argmax = Direction(best_theta)
    value = _exact(criterion, argmax.coords)
    evaluations = cfg.resolution + cfg.refinement_budget
    log('DEBUG', f"grid-refine: d={d}, {evaluations} evaluations, value {value:.12g}")
    return OptResult(argmax, value, evaluations, 'grid-refine', history)


def estimate(data, spec, cfg=None, rng=None):
    """ θ̂ = argmax of the criterion described by `spec` on `data`. """
    criterion = make_criterion(data, spec)
    if criterion.d == 2 and spec.kind in ('ms', 'tsms'):
        return exact_argmax_2d(criterion)
    return maximize_on_sphere(criterion, criterion.d, cfg or OptimizerConfig.default_for(criterion.d), rng)
