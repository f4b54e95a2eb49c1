"""Measures on the unit hypercube: weighted atoms, grid densities, samplers.

Only two synthetic densities are supported, ``Uniform`` and ``SineShift``.
The sine family has density ``(pi/2)^d prod_i |sin pi (x_i - c)|`` which
factorizes across coordinates, so it is sampled exactly by per-coordinate
inverse CDF.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import EmptySample, InvalidMassEstimate


def _as_points(points, dim=None):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if dim in (None, 1) else pts.reshape(-1, dim)
    if pts.ndim != 2:
        raise ValueError(f"points must be a 2D array, got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"expected {dim} coordinates per point, got {pts.shape[1]}")
    return pts


def check_in_cube(points):
    """Raise ``ValueError`` if any coordinate falls outside ``[0, 1]``."""
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("points must lie in the unit hypercube [0, 1]^d")


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite positive measure ``sum_i w_i delta_{x_i}`` on ``[0, 1]^d``.

    Parameters
    ----------
    points : array-like of shape (n, d)
    weights : array-like of shape (n,)
        Strictly positive atom masses.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] == 0:
            raise EmptySample("a DiscreteMeasure needs at least one atom")
        if w.shape[0] != pts.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} weights")
        check_in_cube(pts)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("atom weights must be finite and strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n(self):
        return self.points.shape[0]

    def total_mass(self):
        return float(np.sum(self.weights))

    def scaled(self, factor):
        """Same atoms with every weight multiplied by ``factor``."""
        return DiscreteMeasure(self.points, self.weights * float(factor))


def grid_centers(resolution, dim):
    """Cell centers of the uniform ``resolution^dim`` grid, row-major, axis 0 slowest."""
    axis = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def nearest_cell_index(points, resolution):
    """Flat row-major index of the grid cell containing each point."""
    pts = _as_points(points)
    idx = np.clip(np.floor(pts * resolution).astype(int), 0, resolution - 1)
    flat = np.zeros(pts.shape[0], dtype=int)
    for r in range(pts.shape[1]):
        flat = flat * resolution + idx[:, r]
    return flat


@dataclass(frozen=True)
class GridMeasure:
    """Piecewise-constant measure on the uniform grid of ``[0, 1]^d``.

    ``density`` is a normalized density (integrates to one against the cell
    volume); the total mass is carried separately in ``mass``.
    """

    resolution: int
    dim: int
    density: np.ndarray
    mass: float

    def __post_init__(self):
        R, d = int(self.resolution), int(self.dim)
        if R < 1 or d < 1:
            raise ValueError("resolution and dim must be positive")
        dens = np.asarray(self.density, dtype=float).ravel()
        if dens.shape[0] != R ** d:
            raise ValueError(f"density needs {R ** d} entries, got {dens.shape[0]}")
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise ValueError("density values must be finite and nonnegative")
        integral = dens.sum() * self.cell_volume_of(R, d)
        if abs(integral - 1.0) > 1e-10:
            raise ValueError(f"density integrates to {integral!r}, expected 1")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        dens.setflags(write=False)
        object.__setattr__(self, "resolution", R)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "mass", float(self.mass))

    @staticmethod
    def cell_volume_of(resolution, dim):
        return (1.0 / resolution) ** dim

    @property
    def cell_volume(self):
        return self.cell_volume_of(self.resolution, self.dim)

    def centers(self):
        return grid_centers(self.resolution, self.dim)

    def cell_masses(self):
        """Mass carried by each cell: density * cell volume * total mass."""
        return self.density * self.cell_volume * self.mass

    def to_discrete(self, drop_empty=True):
        """Atoms at cell centers; returns ``(measure, kept_flat_indices)``."""
        masses = self.cell_masses()
        keep = np.flatnonzero(masses > 0) if drop_empty else np.arange(masses.size)
        return DiscreteMeasure(self.centers()[keep], masses[keep]), keep

    def interpolate(self, points):
        """Piecewise-constant density value at arbitrary points."""
        return self.density[nearest_cell_index(points, self.resolution)]


class MassSource(str, Enum):
    KNOWN = "known"
    POISSON_COUNT = "poisson_count"
    EXTERNAL = "external"


@dataclass(frozen=True)
class MassEstimate:
    """Total-mass estimate attached to a sample.

    A zero value can only come out of an empty Poisson draw; such an estimate
    is kept so callers can see it, but ``valid`` is False and the empirical
    constructors refuse it.
    """

    value: float
    source: MassSource = MassSource.KNOWN

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"mass estimate must be finite and >= 0, got {v!r}")
        if v == 0 and self.source != MassSource.POISSON_COUNT:
            raise ValueError("only an empty Poisson draw may produce a zero mass estimate")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "source", MassSource(self.source))

    @property
    def valid(self):
        return self.value > 0

    @classmethod
    def known(cls, value):
        return cls(value, MassSource.KNOWN)

    @classmethod
    def external(cls, value):
        if not value > 0:
            raise ValueError("external mass estimates must be positive")
        return cls(value, MassSource.EXTERNAL)


# ---------------------------------------------------------------------------
# synthetic densities


@dataclass(frozen=True)
class SyntheticDensity:
    """Normalized density on ``[0, 1]^d``.

    Use :meth:`uniform` or :meth:`sine_shift` to construct.
    """

    kind: str
    dim: int
    shift: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("uniform", "sine_shift"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "sine_shift" and not 0.0 < self.shift < 1.0:
            raise ValueError("sine shift c must lie in (0, 1)")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "shift", float(self.shift))

    @classmethod
    def uniform(cls, dim=1):
        return cls("uniform", dim)

    @classmethod
    def sine_shift(cls, c, dim=1):
        return cls("sine_shift", dim, c)

    # -- pointwise evaluation ------------------------------------------------
    def pdf(self, x):
        x = _as_points(x, self.dim)
        if self.kind == "uniform":
            return np.ones(x.shape[0])
        vals = 0.5 * np.pi * np.abs(np.sin(np.pi * (x - self.shift)))
        return np.prod(vals, axis=1)

    def cdf_1d(self, t):
        """Marginal CDF of a single coordinate."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            return t
        c = self.shift
        left_mass = 0.5 * (1.0 - np.cos(np.pi * c))
        left = 0.5 * (np.cos(np.pi * (c - t)) - np.cos(np.pi * c))
        right = left_mass + 0.5 * (1.0 - np.cos(np.pi * (t - c)))
        return np.where(t <= c, left, right)

    def ppf_1d(self, u):
        """Inverse of :meth:`cdf_1d`, split at the zero ``x = c``."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            return u
        c = self.shift
        cos_c = np.cos(np.pi * c)
        left_mass = 0.5 * (1.0 - cos_c)
        left = c - np.arccos(np.clip(2.0 * u + cos_c, -1.0, 1.0)) / np.pi
        right = c + np.arccos(np.clip(1.0 - 2.0 * (u - left_mass), -1.0, 1.0)) / np.pi
        return np.clip(np.where(u <= left_mass, left, right), 0.0, 1.0)

    def peak(self):
        return 1.0 if self.kind == "uniform" else (0.5 * np.pi) ** self.dim


def _rng(seed):
    return np.random.default_rng(seed)


def sample_iid(density, n, seed=None):
    """Draw ``n`` i.i.d. points from ``density``; deterministic for a given seed."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    u = _rng(seed).random((n, density.dim))
    return density.ppf_1d(u)


def sample_ppp(density, mass, seed=None, exposure=1.0):
    """Poisson point process with intensity ``exposure * mass * density``.

    Returns ``(points, MassEstimate)`` where the estimate is ``N / exposure``.
    With the default ``exposure=1`` this is the plain count. ``N = 0`` yields an
    empty ``(0, d)`` array and an invalid estimate.
    """
    if not mass > 0:
        raise ValueError("mass must be positive")
    if not exposure > 0:
        raise ValueError("exposure must be positive")
    rng = _rng(seed)
    count = int(rng.poisson(exposure * mass))
    pts = density.ppf_1d(rng.random((count, density.dim)))
    return pts, MassEstimate(count / exposure, MassSource.POISSON_COUNT)


def weighted_empirical(points, mass_estimate):
    """Empirical measure with ``n`` atoms of weight ``M_hat / n``."""
    pts = _as_points(points)
    if pts.shape[0] == 0:
        raise EmptySample("cannot build an empirical measure from zero points")
    if not isinstance(mass_estimate, MassEstimate):
        mass_estimate = MassEstimate.known(mass_estimate)
    if not mass_estimate.valid:
        raise InvalidMassEstimate("mass estimate is zero; the sample is unusable")
    n = pts.shape[0]
    return DiscreteMeasure(pts, np.full(n, mass_estimate.value / n))


def density_to_grid(density, mass, resolution):
    """Evaluate ``density`` at cell centers and renormalize to unit integral."""
    R = int(resolution)
    if R < 2:
        raise ValueError("resolution must be >= 2")
    vals = density.pdf(grid_centers(R, density.dim))
    vals = vals / (vals.sum() * GridMeasure.cell_volume_of(R, density.dim))
    return GridMeasure(R, density.dim, vals, mass)
