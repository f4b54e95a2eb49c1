"""Risk functionals, exact 1D Wasserstein distance, log-log rate fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .exceptions import DegenerateFit, MassMismatch
from .measures import DiscreteMeasure
from .plan_estimator import evaluate_pair


@dataclass
class RiskReport:
    map_mse: float
    growth_mse: float
    n: int
    estimator_id: str
    seed: int

    def __post_init__(self):
        for name in ("map_mse", "growth_mse"):
            v = getattr(self, name)
            if not (np.isnan(v) or v >= 0):
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self):
        return asdict(self)


def map_risk(pair, oracle, mu_grid, oracle_values=None):
    """Weighted squared errors of ``pair`` against ``oracle`` under a grid measure.

    Integrates ``|T - T0|^2`` and ``|lambda - lambda0|^2`` by midpoint
    quadrature over ``mu_grid`` (cell weights are density * volume * mass).
    ``oracle_values`` may carry precomputed oracle evaluations at the cell
    centers, which saves the oracle argmin in sweeps.
    """
    Z = mu_grid.centers()
    w = mu_grid.cell_masses()
    est = evaluate_pair(pair, Z)
    ref = oracle_values if oracle_values is not None else evaluate_pair(oracle, Z)
    map_mse = float(np.dot(w, np.sum((est.target - ref.target) ** 2, axis=1)))
    growth_mse = float(np.dot(w, (est.growth - ref.growth) ** 2))
    return map_mse, growth_mse


def map_risk_monte_carlo(pair, oracle, density, mass, n_eval=10_000, seed=0):
    """Held-out Monte Carlo version of :func:`map_risk`: ``mass * mean`` over draws from ``density``."""
    from .measures import sample_iid

    Z = sample_iid(density, n_eval, seed)
    est = evaluate_pair(pair, Z)
    ref = evaluate_pair(oracle, Z)
    map_mse = float(mass * np.mean(np.sum((est.target - ref.target) ** 2, axis=1)))
    growth_mse = float(mass * np.mean((est.growth - ref.growth) ** 2))
    return map_mse, growth_mse


def w2_1d_exact(alpha, beta, squared=True):
    """Exact quadratic Wasserstein distance between equal-mass measures on the line.

    Uses the monotone (quantile) coupling: both supports are sorted and the
    cumulative weights are matched segment by segment.  Returns ``W_2^2`` by
    default, ``W_2`` with ``squared=False``.
    """
    if not (isinstance(alpha, DiscreteMeasure) and isinstance(beta, DiscreteMeasure)):
        raise TypeError("w2_1d_exact expects DiscreteMeasure arguments")
    if alpha.dim != 1 or beta.dim != 1:
        raise ValueError("w2_1d_exact only handles one-dimensional measures")
    ma, mb = alpha.total_mass(), beta.total_mass()
    if abs(ma - mb) > 1e-9:
        raise MassMismatch(f"total masses differ: {ma!r} vs {mb!r}")
    ia = np.argsort(alpha.points[:, 0], kind="stable")
    ib = np.argsort(beta.points[:, 0], kind="stable")
    xa, wa = alpha.points[ia, 0], alpha.weights[ia]
    xb, wb = beta.points[ib, 0], beta.weights[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    top = min(ca[-1], cb[-1])
    cuts = np.unique(np.concatenate([[0.0], ca, cb]))
    cuts = cuts[cuts < top]
    lengths = np.diff(np.append(cuts, top))
    i = np.minimum(np.searchsorted(ca, cuts, side="right"), xa.size - 1)
    j = np.minimum(np.searchsorted(cb, cuts, side="right"), xb.size - 1)
    w2sq = float(np.sum(lengths * (xa[i] - xb[j]) ** 2))
    return w2sq if squared else float(np.sqrt(w2sq))


def loglog_rate_fit(points):
    """OLS fit of ``log(mse)`` on ``log(n)``; returns ``(slope, intercept, stderr)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (n, mse) pairs")
    n, mse = arr[:, 0], arr[:, 1]
    if np.unique(n).size < 2:
        raise DegenerateFit("need at least two distinct sample sizes")
    if np.any(mse <= 0) or np.any(n <= 0):
        raise DegenerateFit("sample sizes and errors must be positive")
    fit = stats.linregress(np.log(n), np.log(mse))
    return float(fit.slope), float(fit.intercept), float(fit.stderr)
