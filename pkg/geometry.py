# geometry.py
# Sphere and tangent-space primitives shared by every estimator.
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from helper_functions import DimensionError, ValidationError, make_rng, require

UNIT_NORM_TOL = 1e-12
FRAME_TOL = 1e-10


# --- Domain Types ---
@dataclass(frozen=True, eq=False)
class Direction:
    """ A unit vector on the sphere S^{d-1}. """
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if coords.size < 2:
            raise DimensionError(f"Direction needs d >= 2, got d={coords.size}")
        norm = np.linalg.norm(coords)
        if not np.isfinite(norm) or abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"Direction must have unit norm, got norm {norm!r}")
        coords.flags.writeable = False
        object.__setattr__(self, 'coords', coords)

    @classmethod
    def from_vector(cls, vector):
        v = np.asarray(vector, dtype=float).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0 or not np.isfinite(norm):
            raise ValidationError("Cannot normalize a zero or non-finite vector")
        return cls(v / norm)

    @property
    def d(self):
        return self.coords.size

    def __array__(self, dtype=None, copy=None):
        return np.array(self.coords, dtype=dtype)

    def __eq__(self, other):
        return isinstance(other, Direction) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __repr__(self):
        return f"Direction({np.array2string(self.coords, precision=6)})"

    def tolist(self):
        return [float(c) for c in self.coords]


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """ d x d orthonormal matrix whose first column is a given direction. """
    columns: np.ndarray

    def __post_init__(self):
        T = np.array(self.columns, dtype=float)
        require(T.ndim == 2 and T.shape[0] == T.shape[1], "frame must be square", DimensionError)
        d = T.shape[0]
        if not np.allclose(T.T @ T, np.eye(d), atol=FRAME_TOL, rtol=0):
            raise ValidationError("frame columns are not orthonormal")
        T.flags.writeable = False
        object.__setattr__(self, 'columns', T)

    @property
    def d(self):
        return self.columns.shape[0]

    def to_frame(self, x):
        """ Coordinates of x in the frame (T' x). """
        return np.asarray(x, dtype=float) @ self.columns

    def from_frame(self, coords):
        return np.asarray(coords, dtype=float) @ self.columns.T


def coords_of(theta):
    if isinstance(theta, Direction):
        return theta.coords
    return np.asarray(theta, dtype=float).reshape(-1)


# --- Operations ---
def unit_sphere_sample(d, rng):
    """ Uniform draw on S^{d-1}: a normalized standard Gaussian vector. """
    if d < 2:
        raise DimensionError(f"sphere dimension must be >= 2, got d={d}")
    rng = make_rng(rng)
    while True:
        z = rng.standard_normal(d)
        norm = np.linalg.norm(z)
        if norm > 0:
            return Direction(z / norm)


def tangent_project(theta0, theta):
    """ (I - θ0θ0')(θ - θ0): the component of θ - θ0 orthogonal to θ0. """
    t0 = coords_of(theta0)
    t = coords_of(theta)
    if t0.shape != t.shape:
        raise DimensionError(f"dimension mismatch: {t0.size} vs {t.size}")
    diff = t - t0
    return diff - t0 * (t0 @ diff)


def change_basis(theta0):
    """
    Orthonormal frame T with T[:, 0] = θ0, completed by Gram-Schmidt against
    the canonical basis. The canonical vector most parallel to θ0 is skipped.
    """
    t0 = coords_of(theta0)
    d = t0.size
    if d < 2:
        raise DimensionError(f"frame dimension must be >= 2, got d={d}")
    pivot = int(np.argmax(np.abs(t0)))
    columns = [t0 / np.linalg.norm(t0)]
    for k in range(d):
        if k == pivot:
            continue
        v = np.zeros(d)
        v[k] = 1.0
        # two passes of modified Gram-Schmidt
        for _ in range(2):
            for q in columns:
                v = v - (q @ v) * q
        v = v / np.linalg.norm(v)
        columns.append(v)
    return OrthonormalFrame(np.column_stack(columns))


def direction_from_angle(alpha):
    return np.array([np.cos(alpha), np.sin(alpha)])


def angle_of(theta):
    """ Angle of a 2-D direction in [0, 2π). """
    t = coords_of(theta)
    if t.size != 2:
        raise DimensionError("angle_of needs a 2-D direction")
    alpha = float(np.arctan2(t[1], t[0]))
    if alpha < 0:
        alpha += 2 * np.pi
    return 0.0 if alpha >= 2 * np.pi else alpha


def _fibonacci_sphere(resolution):
    i = np.arange(resolution) + 0.5
    z = 1.0 - 2.0 * i / resolution
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(resolution)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _halton_sphere(d, resolution):
    from scipy.special import ndtri
    # the first Halton point is the origin, which ndtri maps to -inf
    u = qmc.Halton(d=d, scramble=False).random(resolution + 1)[1:]
    z = ndtri(u)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sphere_grid(d, resolution):
    """
    Deterministic quasi-uniform candidate set on S^{d-1}, returned as a
    (resolution, d) array of unit rows. d=2 is an exact angular lattice.
    """
    if d < 2:
        raise DimensionError(f"sphere dimension must be >= 2, got d={d}")
    if resolution < 4:
        raise ValidationError(f"grid resolution must be >= 4, got {resolution}")
    if d == 2:
        alphas = 2 * np.pi * np.arange(resolution) / resolution
        grid = np.column_stack([np.cos(alphas), np.sin(alphas)])
    elif d == 3:
        grid = _fibonacci_sphere(resolution)
    else:
        grid = _halton_sphere(d, resolution)
    return grid / np.linalg.norm(grid, axis=1, keepdims=True)


def grid_spacing(d, resolution):
    """ Rough covering radius of sphere_grid(d, resolution). """
    if d == 2:
        return 2 * np.pi / resolution
    # area of S^{d-1} shared out among the points, as a (d-1)-dim cell width
    from scipy.special import gamma
    area = 2 * np.pi ** (d / 2) / gamma(d / 2)
    return float((area / resolution) ** (1.0 / (d - 1)))


def random_tangent_directions(theta, count, rng):
    """ `count` unit vectors orthogonal to theta. """
    t = coords_of(theta)
    rng = make_rng(rng)
    z = rng.standard_normal((count, t.size))
    z = z - np.outer(z @ t, t)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return z / norms


def tangent_perturb(theta, radius, rng, count):
    """ Points θ + r·ρ·u re-normalized to the sphere, u tangent at θ, ρ ~ U(0, 1]. """
    t = coords_of(theta)
    rng = make_rng(rng)
    u = random_tangent_directions(t, count, rng)
    rho = 1.0 - rng.random(count)
    points = t + radius * rho[:, None] * u
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def sphere_point_at_distance(theta0, delta, rng):
    """ A random θ on the sphere with chord distance ‖θ - θ0‖ = δ (0 <= δ <= 2). """
    t0 = coords_of(theta0)
    require(0.0 <= delta <= 2.0, f"chord distance must lie in [0, 2], got {delta}")
    if delta == 0:
        return Direction(t0)
    phi = 2.0 * np.arcsin(delta / 2.0)
    u = random_tangent_directions(t0, 1, rng)[0]
    return Direction.from_vector(np.cos(phi) * t0 + np.sin(phi) * u)


def canonical_key(theta):
    """ Tie-break key: coordinates with the sign flipped so the first nonzero entry is positive. """
    t = np.asarray(theta, dtype=float)
    nonzero = np.flatnonzero(t)
    if nonzero.size and t[nonzero[0]] < 0:
        t = -t
    return tuple(float(c) for c in t)
