"""Estimation of transport-growth pairs for unbalanced optimal transport.

Quadratic cost, KL marginal penalties.  The main entry points are
:class:`PlanBasedEstimator` (discrete plan + 1NN / Nadaraya-Watson extension)
and :class:`KernelPluginEstimator` (cosine-kernel densities + grid potentials),
both built on :func:`solve_discrete_uot`.
"""

__version__ = "0.1.0"

from .exceptions import (DegenerateDensity, DegenerateFit, DimensionMismatch, EmptySample,
                         InfeasibleOracle, InvalidMassEstimate, MassMismatch, NegativeWeight,
                         NonConvergence, UOTError)
from .kernel_density import (CosineKDE, NeumannKernel, cutoff_tau, fit_density, kernel_eval,
                             renormalize_positive, resolution_rule)
from .kernel_estimator import GridPotentials, KernelPluginEstimator, fit_kernel_pair
from .measures import (DiscreteMeasure, GridMeasure, MassEstimate, MassSource,
                       SyntheticDensity, density_to_grid, sample_iid, sample_ppp,
                       weighted_empirical)
from .metrics import RiskReport, loglog_rate_fit, map_risk, w2_1d_exact
from .plan_estimator import (ClipBounds, PlanBasedEstimator, RowEstimates, TransportGrowthPair,
                             barycentric_rows, evaluate_pair, extend_1nn, extend_nw,
                             growth_from_rows)
from .uot_core import (DualPotentials, SolverConfig, TransportPlan, c_transform, cost_matrix,
                       dual_objective, excess_decomposition, kl_divergence, solve_discrete_uot,
                       verify_gap_lower_bound)

__all__ = [
    "DegenerateDensity", "DegenerateFit", "DimensionMismatch", "EmptySample",
    "InfeasibleOracle", "InvalidMassEstimate", "MassMismatch", "NegativeWeight",
    "NonConvergence", "UOTError",
    "CosineKDE", "NeumannKernel", "cutoff_tau", "fit_density", "kernel_eval",
    "renormalize_positive", "resolution_rule",
    "GridPotentials", "KernelPluginEstimator", "fit_kernel_pair",
    "DiscreteMeasure", "GridMeasure", "MassEstimate", "MassSource", "SyntheticDensity",
    "density_to_grid", "sample_iid", "sample_ppp", "weighted_empirical",
    "RiskReport", "loglog_rate_fit", "map_risk", "w2_1d_exact",
    "ClipBounds", "PlanBasedEstimator", "RowEstimates", "TransportGrowthPair",
    "barycentric_rows", "evaluate_pair", "extend_1nn", "extend_nw", "growth_from_rows",
    "DualPotentials", "SolverConfig", "TransportPlan", "c_transform", "cost_matrix",
    "dual_objective", "excess_decomposition", "kl_divergence", "solve_discrete_uot",
    "verify_gap_lower_bound",
]
