"""Kernel plug-in estimator: UOT between smoothed grid measures, maps from potentials.

Given optimal potentials ``(phi, psi)`` of the fitted grid problem the pair is

    T(x) = argmin_y |x - y|^2 / 2 - psi(y)          (over target cell centers)
    lambda(x) = clip(exp(-phi(x))) * exp(|x - T(x)|^2 / 4)

with ``phi`` read from the cell containing ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .kernel_density import fit_density, renormalize_positive, resolution_rule
from .measures import MassEstimate, grid_centers, nearest_cell_index
from .plan_estimator import ClipBounds, TransportGrowthPair, evaluate_pair
from .uot_core import FEASIBILITY_TOL, SolverConfig, c_transform, cost_matrix, solve_discrete_uot
from .validation import check_fitted, check_points


@dataclass(frozen=True)
class GridPotentials:
    """Dual potentials at the cell centers of a ``resolution^dim`` grid.

    ``psi`` is defined on every cell (the c-transform extension of the solved
    potentials); ``target_mask`` marks the cells that carried target mass and
    are eligible as transport destinations.
    """

    resolution: int
    dim: int
    phi: np.ndarray
    psi: np.ndarray
    target_mask: np.ndarray

    def __post_init__(self):
        size = int(self.resolution) ** int(self.dim)
        for name in ("phi", "psi", "target_mask"):
            if np.asarray(getattr(self, name)).shape != (size,):
                raise ValueError(f"{name} must have {size} entries")
        if not np.any(self.target_mask):
            raise ValueError("no target cells")

    def centers(self):
        return grid_centers(self.resolution, self.dim)

    def shifted(self, c):
        """``(phi - c, psi + c)``: same argmin, active factor scaled by ``e^c``."""
        return GridPotentials(self.resolution, self.dim, self.phi - c, self.psi + c,
                              self.target_mask)

    def max_violation(self, n_pairs=100_000, seed=0):
        """Largest ``phi(x_c) + psi(y_c) - |x_c - y_c|^2/2``, exhaustive or spot-checked."""
        Z = self.centers()
        size = Z.shape[0]
        if size * size <= n_pairs:
            return float(np.max(self.phi[:, None] + self.psi[None, :] - cost_matrix(Z, Z)))
        rng = np.random.default_rng(seed)
        i = rng.integers(0, size, n_pairs)
        j = rng.integers(0, size, n_pairs)
        c = 0.5 * np.sum((Z[i] - Z[j]) ** 2, axis=1)
        return float(np.max(self.phi[i] + self.psi[j] - c))


def grid_pair(potentials, clip=None, chunk=2048):
    """Build the evaluable pair defined by grid potentials."""
    clip = clip or ClipBounds()
    Z = potentials.centers()
    Y = Z[potentials.target_mask]
    psi = np.array(potentials.psi[potentials.target_mask])
    phi = np.array(potentials.phi)
    R = potentials.resolution

    def evaluator(q):
        T = np.empty_like(q)
        for s in range(0, q.shape[0], chunk):
            block = cost_matrix(q[s:s + chunk], Y) - psi[None, :]
            T[s:s + chunk] = Y[np.argmin(block, axis=1)]
        w = np.exp(-phi[nearest_cell_index(q, R)])
        lam = clip.clip(w) * np.exp(0.25 * np.sum((q - T) ** 2, axis=1))
        return T, lam, np.sqrt(w)

    return TransportGrowthPair(evaluator, "grid_potentials", potentials.dim,
                               {"potentials": potentials, "clip": clip})


def fit_kernel_pair(mu_grid, nu_grid, solver=None, clip=None, return_solution=False):
    """Solve UOT between two grid measures and return the potential-based pair.

    Empty cells are dropped before solving because KL reference weights must
    be positive; ``phi`` is then extended to every source cell by c-transform.
    """
    if (mu_grid.resolution, mu_grid.dim) != (nu_grid.resolution, nu_grid.dim):
        raise ValueError("source and target grids differ in resolution or dimension")
    mu, keep_mu = mu_grid.to_discrete()
    nu, keep_nu = nu_grid.to_discrete()
    sol = solve_discrete_uot(mu, nu, solver or SolverConfig())
    Z = mu_grid.centers()
    psi_active = sol.potentials.psi
    phi_all = c_transform(psi_active, cost_matrix(Z, Z[keep_nu]), side="target")
    psi_all = c_transform(phi_all, cost_matrix(Z, Z), side="source")
    mask = np.zeros(Z.shape[0], dtype=bool)
    mask[keep_nu] = True
    # on solved cells the extension reproduces the tightened potentials
    psi_all[keep_nu] = np.minimum(psi_all[keep_nu], psi_active)
    pots = GridPotentials(mu_grid.resolution, mu_grid.dim, phi_all, psi_all, mask)
    pair = grid_pair(pots, clip)
    return (pair, sol) if return_solution else pair


class KernelPluginEstimator(BaseEstimator):
    """Kernel plug-in transport-growth estimator on ``[0, 1]^d``.

    Parameters
    ----------
    L : float or None
        Kernel resolution used for both samples.  When None each sample gets
        ``resolution_rule(size, d, alpha, L0, n0)``.
    L0, n0, alpha : anchor of the resolution rule.
    resolution : int
        Grid cells per axis for the fitted measures.
    w_minus, w_plus : float
        Clip bounds for the squared active factor.
    solver : SolverConfig, optional

    Attributes
    ----------
    mu_grid_, nu_grid_ : GridMeasure
    potentials_ : GridPotentials
    pair_ : TransportGrowthPair
    """

    def __init__(self, L=None, L0=10.0, n0=1000, alpha=2.0, resolution=64,
                 w_minus=1e-3, w_plus=1e3, solver=None):
        self.L = L
        self.L0 = L0
        self.n0 = n0
        self.alpha = alpha
        self.resolution = resolution
        self.w_minus = w_minus
        self.w_plus = w_plus
        self.solver = solver

    def _kernel_resolution(self, size, dim):
        if self.L is not None:
            return float(self.L)
        return resolution_rule(size, dim, self.alpha, self.L0, self.n0)

    def fit(self, X, Y, mass_x=1.0, mass_y=1.0):
        X = check_points(X)
        Y = check_points(Y, X.shape[1])
        mx = mass_x if isinstance(mass_x, MassEstimate) else MassEstimate.known(mass_x)
        my = mass_y if isinstance(mass_y, MassEstimate) else MassEstimate.known(mass_y)
        d = X.shape[1]
        self.L_mu_ = self._kernel_resolution(X.shape[0], d)
        self.L_nu_ = self._kernel_resolution(Y.shape[0], d)
        self.mu_grid_ = renormalize_positive(fit_density(X, self.L_mu_), self.resolution, mx)
        self.nu_grid_ = renormalize_positive(fit_density(Y, self.L_nu_), self.resolution, my)
        return self.fit_grids(self.mu_grid_, self.nu_grid_)

    def fit_grids(self, mu_grid, nu_grid):
        clip = ClipBounds(self.w_minus, self.w_plus)
        self.mu_grid_, self.nu_grid_ = mu_grid, nu_grid
        self.pair_, self.solution_ = fit_kernel_pair(
            mu_grid, nu_grid, self.solver or SolverConfig(), clip, return_solution=True)
        self.potentials_ = self.pair_.params["potentials"]
        self.n_features_in_ = mu_grid.dim
        return self

    def predict(self, Q):
        return self.evaluate(Q).target

    def predict_growth(self, Q):
        return self.evaluate(Q).growth

    def evaluate(self, Q):
        check_fitted(self, "pair_")
        return evaluate_pair(self.pair_, Q)


def potentials_feasible(potentials, tol=FEASIBILITY_TOL, n_pairs=100_000):
    return potentials.max_violation(n_pairs) <= tol
