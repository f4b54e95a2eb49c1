"""Plan-based estimator of the transport-growth pair.

Pipeline: solve discrete UOT between the weighted empirical measures, read off
per-sample barycentric targets ``T_i``, active-source factors
``a_i = sqrt(r_i / mu_i)`` and clipped growth values
``lambda_i = clip(a_i^2) exp(|X_i - T_i|^2 / 4)``, then extend to the whole
cube by nearest neighbour or Nadaraya-Watson smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator

from .measures import MassEstimate, weighted_empirical
from .uot_core import SolverConfig, TransportPlan, solve_discrete_uot
from .validation import check_fitted, check_points


@dataclass(frozen=True)
class ClipBounds:
    w_minus: float = 1e-3
    w_plus: float = 1e3

    def __post_init__(self):
        if not 0 < self.w_minus < self.w_plus:
            raise ValueError("need 0 < w_minus < w_plus")

    def clip(self, values):
        return np.clip(values, self.w_minus, self.w_plus)


class RowEstimates(NamedTuple):
    t_hat: np.ndarray
    r_hat: np.ndarray
    a_hat: np.ndarray
    lambda_hat: np.ndarray


class PairValues(NamedTuple):
    target: np.ndarray
    growth: np.ndarray
    active: np.ndarray


@dataclass(frozen=True)
class TransportGrowthPair:
    """Evaluable estimate ``x -> (T(x), lambda(x), a(x))``.

    ``backing`` is one of ``"one_nn"``, ``"nadaraya_watson"``, ``"grid_potentials"``
    and ``params`` records what the backing needs to be reproduced.
    """

    evaluator: Callable
    backing: str
    dim: int
    params: dict

    def __call__(self, queries):
        return evaluate_pair(self, queries)


def evaluate_pair(pair, queries):
    """Batch evaluation; returns :class:`PairValues` with arrays of length ``len(queries)``."""
    q = check_points(queries, pair.dim)
    return PairValues(*pair.evaluator(q))


def barycentric_rows(plan, source_points, target_points):
    """Row masses ``r_i`` and barycentric projections ``T_i = sum_j G_ij Y_j / r_i``.

    Zero rows keep ``T_i = X_i``.
    """
    G = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    X = np.atleast_2d(np.asarray(source_points, dtype=float))
    Y = np.atleast_2d(np.asarray(target_points, dtype=float))
    if G.shape != (X.shape[0], Y.shape[0]):
        raise ValueError(f"plan shape {G.shape} does not match ({X.shape[0]}, {Y.shape[0]})")
    r = G.sum(axis=1)
    t = X.copy()
    live = r > 0
    t[live] = (G[live] @ Y) / r[live, None]
    # rounding can push an average a hair outside the cube
    np.clip(t, 0.0, 1.0, out=t)
    return t, r


def growth_from_rows(r_hat, mu_weights, t_hat, source_points, clip=None):
    """Active factors ``a_i`` and growth values ``lambda_i``; only ``a_i^2`` is clipped."""
    clip = clip or ClipBounds()
    r = np.asarray(r_hat, dtype=float)
    w = np.asarray(mu_weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("mu weights must be positive")
    a = np.sqrt(r / w)
    sq = np.sum((np.asarray(source_points, float) - np.asarray(t_hat, float)) ** 2, axis=1)
    lam = clip.clip(a * a) * np.exp(0.25 * sq)
    return a, lam


def row_estimates(plan, mu, target_points, clip=None):
    t, r = barycentric_rows(plan, mu.points, target_points)
    a, lam = growth_from_rows(r, mu.weights, t, mu.points, clip)
    return RowEstimates(t, r, a, lam)


def nearest_index(queries, points, chunk=4096):
    """Index of the nearest point for each query; lowest index wins ties."""
    q = np.atleast_2d(queries)
    out = np.empty(q.shape[0], dtype=int)
    for start in range(0, q.shape[0], chunk):
        d = cdist(q[start:start + chunk], points, "sqeuclidean")
        out[start:start + chunk] = np.argmin(d, axis=1)
    return out


def extend_1nn(rows, source_points):
    """Piecewise-constant extension over the Voronoi cells of the source sample."""
    X = np.array(source_points, dtype=float, ndmin=2)
    if X.shape[0] == 0:
        raise ValueError("need at least one source point")
    t, a, lam = (np.array(v, copy=True) for v in (rows.t_hat, rows.a_hat, rows.lambda_hat))

    def evaluator(q):
        idx = nearest_index(q, X)
        return t[idx], lam[idx], a[idx]

    return TransportGrowthPair(evaluator, "one_nn", X.shape[1], {})


def _gaussian(sq):
    return -0.5 * sq


def _epanechnikov(sq):
    with np.errstate(divide="ignore"):
        return np.where(sq < 1.0, np.log(np.maximum(1.0 - sq, 0.0)), -np.inf)


_NW_KERNELS = {"gaussian": _gaussian, "epanechnikov": _epanechnikov}


def extend_nw(rows, source_points, kernel="gaussian", bandwidth=0.05):
    """Nadaraya-Watson smoothing of the per-sample estimates.

    Queries whose kernel weights all vanish (outside every Epanechnikov
    window, or a Gaussian underflow) fall back to the nearest sample.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    try:
        log_k = _NW_KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(_NW_KERNELS)}") from None
    X = np.array(source_points, dtype=float, ndmin=2)
    t, a, lam = (np.array(v, copy=True) for v in (rows.t_hat, rows.a_hat, rows.lambda_hat))
    h = float(bandwidth)

    def evaluator(q, chunk=2048):
        T = np.empty((q.shape[0], X.shape[1]))
        L = np.empty(q.shape[0])
        A = np.empty(q.shape[0])
        for s in range(0, q.shape[0], chunk):
            sq = cdist(q[s:s + chunk], X, "sqeuclidean")
            logw = log_k(sq / (h * h))
            # shift by the row max so the normalized weights survive small bandwidths
            top = logw.max(axis=1, keepdims=True)
            dead = ~np.isfinite(top[:, 0])
            with np.errstate(invalid="ignore"):
                w = np.exp(logw - np.where(np.isfinite(top), top, 0.0))
            if np.any(dead):
                nn = np.argmin(sq[dead], axis=1)
                w[dead] = 0.0
                w[np.flatnonzero(dead), nn] = 1.0
            w /= w.sum(axis=1, keepdims=True)
            T[s:s + chunk] = w @ t
            L[s:s + chunk] = w @ lam
            A[s:s + chunk] = w @ a
        return T, L, A

    return TransportGrowthPair(evaluator, "nadaraya_watson", X.shape[1],
                               {"kernel": kernel, "bandwidth": h})


class PlanBasedEstimator(BaseEstimator):
    """Plan-based transport-growth estimator.

    Parameters
    ----------
    extension : {"1nn", "nw"}
        How per-sample estimates are extended to the cube.
    kernel : {"gaussian", "epanechnikov"}
        Nadaraya-Watson kernel, ignored for ``"1nn"``.
    bandwidth : float
        Nadaraya-Watson bandwidth.
    w_minus, w_plus : float
        Clip bounds applied to the squared active factor.
    solver : SolverConfig, optional

    Attributes
    ----------
    rows_ : RowEstimates
    pair_ : TransportGrowthPair
    solution_ : UOTResult
    """

    def __init__(self, extension="1nn", kernel="gaussian", bandwidth=0.05,
                 w_minus=1e-3, w_plus=1e3, solver=None):
        self.extension = extension
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.w_minus = w_minus
        self.w_plus = w_plus
        self.solver = solver

    def fit(self, X, Y, mass_x=1.0, mass_y=1.0):
        """Fit from source sample ``X`` and target sample ``Y``.

        ``mass_x`` / ``mass_y`` are total-mass estimates (floats or
        :class:`MassEstimate`); each atom gets ``mass / sample_size``.
        """
        X = check_points(X)
        Y = check_points(Y, X.shape[1])
        mu = weighted_empirical(X, _as_mass(mass_x))
        nu = weighted_empirical(Y, _as_mass(mass_y))
        return self.fit_measures(mu, nu)

    def fit_measures(self, mu, nu):
        if self.extension not in ("1nn", "nw"):
            raise ValueError(f"extension must be '1nn' or 'nw', got {self.extension!r}")
        clip = ClipBounds(self.w_minus, self.w_plus)
        self.solution_ = solve_discrete_uot(mu, nu, self.solver or SolverConfig())
        self.rows_ = row_estimates(self.solution_.plan, mu, nu.points, clip)
        if self.extension == "1nn":
            self.pair_ = extend_1nn(self.rows_, mu.points)
        else:
            self.pair_ = extend_nw(self.rows_, mu.points, self.kernel, self.bandwidth)
        self.n_features_in_ = mu.dim
        return self

    def predict(self, Q):
        """Transported points ``T(q)``."""
        return self.evaluate(Q).target

    def predict_growth(self, Q):
        return self.evaluate(Q).growth

    def evaluate(self, Q):
        check_fitted(self, "pair_")
        return evaluate_pair(self.pair_, Q)


def _as_mass(m):
    return m if isinstance(m, MassEstimate) else MassEstimate.known(m)


__all__ = [
    "ClipBounds", "RowEstimates", "PairValues", "TransportGrowthPair", "evaluate_pair",
    "barycentric_rows", "growth_from_rows", "row_estimates", "extend_1nn", "extend_nw",
    "PlanBasedEstimator",
]
