"""Boundary-adapted cosine kernel density estimation on ``[0, 1]^d``.

The one-dimensional kernel is a smooth spectral truncation of the Neumann
Laplacian eigenbasis,

    kappa_L(u, v) = 1 + sum_{l >= 1} tau(pi^2 l^2 / L^2) * 2 cos(pi l u) cos(pi l v),

and the d-dimensional kernel is the product over coordinates.  ``tau`` equals
one on ``[0, 1]``, vanishes from 2 on, and is smooth in between, so only modes
with ``l < sqrt(2) L / pi`` contribute.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DegenerateDensity
from .measures import GridMeasure, MassEstimate, grid_centers
from .validation import check_fitted, check_points


def _eta(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def cutoff_tau(t):
    """Smooth cutoff: 1 on ``[0, 1]``, 0 on ``[2, inf)``, ``C^inf`` transition."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("tau is defined for t >= 0")
    num = _eta(2.0 - t)
    den = num + _eta(t - 1.0)
    out = np.where(t <= 1.0, 1.0, np.where(t >= 2.0, 0.0, num / np.where(den > 0, den, 1.0)))
    return out if out.ndim else float(out)


@lru_cache(maxsize=64)
def _active_modes(L):
    lmax = int(np.ceil(L * np.sqrt(2.0) / np.pi))
    ell = np.arange(1, lmax + 1)
    mult = cutoff_tau(np.pi ** 2 * ell ** 2 / L ** 2)
    keep = mult > 0
    ell, mult = ell[keep], mult[keep]
    ell.setflags(write=False)
    mult.setflags(write=False)
    return ell, mult


@dataclass(frozen=True)
class NeumannKernel:
    """Separable cosine kernel ``K_L(x, y) = prod_r kappa_L(x_r, y_r)``."""

    L: float
    dim: int = 1

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")

    @property
    def modes(self):
        return _active_modes(float(self.L))[0]

    @property
    def multipliers(self):
        return _active_modes(float(self.L))[1]

    def features(self, u):
        """Per-axis features ``sqrt(2 tau_l) cos(pi l u)``; shape ``u.shape + (n_modes,)``."""
        ell, mult = _active_modes(float(self.L))
        u = np.asarray(u, dtype=float)
        return np.sqrt(2.0 * mult) * np.cos(np.pi * u[..., None] * ell)

    def kappa(self, u, v):
        fu, fv = self.features(u), self.features(v)
        return 1.0 + np.sum(fu * fv, axis=-1)

    def __call__(self, x, y):
        """Kernel values for paired rows of ``x`` and ``y`` (broadcasting)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.prod(self.kappa(x, y), axis=-1)

    def matrix(self, x, y):
        """Gram matrix ``K[i, j] = K_L(x_i, y_j)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.ones((x.shape[0], y.shape[0]))
        for r in range(x.shape[1]):
            out *= 1.0 + self.features(x[:, r]) @ self.features(y[:, r]).T
        return out


def kernel_eval(kernel, x, y):
    """``K_L(x, y)``; a float for one pair of points, an array for paired rows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim <= 1 and y.ndim <= 1:
        return float(kernel(x.reshape(kernel.dim), y.reshape(kernel.dim)))
    return kernel(x.reshape(-1, kernel.dim), y.reshape(-1, kernel.dim))


class RawDensity:
    """Unclipped estimate ``p(x) = mean_i K_L(x, X_i)``; may dip below zero."""

    def __init__(self, kernel, samples):
        self.kernel = kernel
        self.samples = np.atleast_2d(samples)

    @property
    def dim(self):
        return self.samples.shape[1]

    def __call__(self, x, chunk=2048):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            out[s:s + chunk] = self.kernel.matrix(x[s:s + chunk], self.samples).mean(axis=1)
        return out


def fit_density(samples, L):
    """Kernel density estimate with the cosine kernel at resolution ``L``."""
    X = check_points(samples)
    return RawDensity(NeumannKernel(float(L), X.shape[1]), X)


def renormalize_positive(raw, resolution, mass):
    """Evaluate at cell centers, clip negatives, rescale to unit integral, attach mass."""
    R = int(resolution)
    if R < 2:
        raise ValueError("resolution must be >= 2")
    value = mass.value if isinstance(mass, MassEstimate) else float(mass)
    if isinstance(mass, MassEstimate) and not mass.valid:
        raise DegenerateDensity("mass estimate is zero")
    vals = np.maximum(raw(grid_centers(R, raw.dim)), 0.0)
    integral = vals.sum() * GridMeasure.cell_volume_of(R, raw.dim)
    if integral <= 1e-12:
        raise DegenerateDensity(f"positive part integrates to {integral:.3e}")
    return GridMeasure(R, raw.dim, vals / integral, value)


def resolution_rule(n, d, alpha=2.0, L0=10.0, n0=1000):
    """Anchor-scaled kernel resolution ``L0 (n / n0)^{1 / (d + 2 (alpha - 1))}``."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    return float(L0) * (float(n) / float(n0)) ** (1.0 / (d + 2.0 * (alpha - 1.0)))


class CosineKDE(BaseEstimator):
    """Estimator wrapper: fit on a sample, then :meth:`to_grid` gives a :class:`GridMeasure`.

    Parameters
    ----------
    L : float
        Kernel resolution.
    resolution : int
        Grid cells per axis used by :meth:`to_grid`.
    """

    def __init__(self, L=10.0, resolution=64):
        self.L = L
        self.resolution = resolution

    def fit(self, X, y=None):
        self.density_ = fit_density(X, self.L)
        self.n_features_in_ = self.density_.dim
        return self

    def score_samples(self, Q):
        check_fitted(self, "density_")
        return self.density_(check_points(Q, self.n_features_in_))

    def to_grid(self, mass=1.0):
        check_fitted(self, "density_")
        return renormalize_positive(self.density_, self.resolution, mass)
