"""Discrete unbalanced OT with quadratic cost and unit-weight KL marginal penalties.

The primal problem over nonnegative ``n x m`` matrices is

    min_G  sum_ij C_ij G_ij + KL(G 1 | mu) + KL(G^T 1 | nu),    C_ij = |x_i - y_j|^2 / 2,

with the generalized divergence ``KL(r | a) = sum_i a_i F(r_i / a_i)`` and
``F(t) = t log t - t + 1``.  Its dual maximizes

    sum_i mu_i (1 - exp(-phi_i)) + sum_j nu_j (1 - exp(-psi_j))

over pairs with ``phi_i + psi_j <= C_ij``.

:func:`solve_discrete_uot` adds an entropic term ``eps * KL(G | mu x nu)`` and
anneals ``eps`` geometrically.  Each level runs log-stabilized scaling updates
(each half-step is a contraction with exponent ``1 / (1 + eps)``), followed by
a closed-form rebalancing of the constant shift ``(phi + t, psi - t)`` which
removes the slowest mode of plain unbalanced scaling.  At the last level a
few damped Newton steps on the entropic dual take the fixed point to machine
precision when the problem is small enough for a dense solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, xlogy

from .exceptions import DimensionMismatch, InfeasibleOracle, NegativeWeight, NonConvergence
from .measures import DiscreteMeasure

logger = logging.getLogger(__name__)

FLUSH_THRESHOLD = 1e-300
FEASIBILITY_TOL = 1e-9


def cost_matrix(x, y):
    """Half squared Euclidean distances ``C_ij = |x_i - y_j|^2 / 2``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dims differ: {x.shape[1]} vs {y.shape[1]}")
    return 0.5 * cdist(x, y, "sqeuclidean")


@dataclass(frozen=True)
class SolverConfig:
    eps_init: float = 1.0
    eps_final: float = 1e-3
    eps_decay: float = 0.5
    max_iters_per_eps: int = 2000
    fixed_point_tol: float = 1e-9
    # Newton refinement of the final level; skipped above this many atoms on the smaller side
    polish: bool = True
    polish_max_size: int = 2500

    def __post_init__(self):
        if not (self.eps_init > 0 and self.eps_final > 0):
            raise ValueError("eps_init and eps_final must be positive")
        if self.eps_final > self.eps_init:
            raise ValueError("eps_final must not exceed eps_init")
        if not 0.0 < self.eps_decay < 1.0:
            raise ValueError("eps_decay must lie in (0, 1)")
        if int(self.max_iters_per_eps) < 1:
            raise ValueError("max_iters_per_eps must be >= 1")
        if not self.fixed_point_tol > 0:
            raise ValueError("fixed_point_tol must be positive")

    def eps_schedule(self):
        levels = []
        eps = float(self.eps_init)
        while eps > self.eps_final * (1 + 1e-12):
            levels.append(eps)
            eps *= self.eps_decay
        levels.append(float(self.eps_final))
        return levels

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling matrix with cached marginals."""

    gamma: np.ndarray
    row_marginals: np.ndarray = field(default=None)
    col_marginals: np.ndarray = field(default=None)

    def __post_init__(self):
        G = np.asarray(self.gamma, dtype=float)
        if G.ndim != 2:
            raise ValueError("gamma must be a matrix")
        if np.any(G < 0) or not np.all(np.isfinite(G)):
            raise ValueError("gamma must be finite and nonnegative")
        G.setflags(write=False)
        object.__setattr__(self, "gamma", G)
        object.__setattr__(self, "row_marginals", G.sum(axis=1))
        object.__setattr__(self, "col_marginals", G.sum(axis=0))

    @property
    def shape(self):
        return self.gamma.shape

    def total_mass(self):
        return float(self.gamma.sum())

    @property
    def T(self):
        return TransportPlan(self.gamma.T)


@dataclass(frozen=True)
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).ravel())
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).ravel())

    def max_violation(self, cost):
        """Largest value of ``phi_i + psi_j - C_ij``; feasible when <= 0."""
        return float(np.max(self.phi[:, None] + self.psi[None, :] - cost))

    def is_feasible(self, cost, tol=FEASIBILITY_TOL):
        return self.max_violation(cost) <= tol

    def shifted(self, c):
        """``(phi - c, psi + c)``: same feasibility, same transport."""
        return DualPotentials(self.phi - c, self.psi + c)


class UOTResult(NamedTuple):
    plan: TransportPlan
    potentials: DualPotentials
    primal_value: float
    dual_value: float
    info: dict


# ---------------------------------------------------------------------------
# elementary functionals


def kl_divergence(eta, ref):
    """Generalized KL ``sum_i ref_i F(eta_i / ref_i)`` with ``0 log 0 = 0``.

    Parameters
    ----------
    eta : array-like
        Nonnegative masses.
    ref : array-like
        Strictly positive reference masses, same shape as ``eta``.
    """
    eta = np.asarray(eta, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if eta.shape != ref.shape:
        raise ValueError(f"shape mismatch {eta.shape} vs {ref.shape}")
    if np.any(eta < 0):
        raise NegativeWeight("eta has negative entries")
    if np.any(ref <= 0):
        raise NegativeWeight("reference weights must be strictly positive")
    # split log so subnormal eta / ref cannot underflow to log(0)
    return float(np.sum(xlogy(eta, eta) - xlogy(eta, ref) - eta + ref))


def dual_objective(potentials, mu, nu):
    """``sum mu_i (1 - e^{-phi_i}) + sum nu_j (1 - e^{-psi_j})``.

    ``phi = +inf`` contributes the full atom mass.
    """
    a = _weights(mu)
    b = _weights(nu)
    with np.errstate(over="ignore"):
        ea = np.exp(-potentials.phi)
        eb = np.exp(-potentials.psi)
    return float(np.dot(a, 1.0 - ea) + np.dot(b, 1.0 - eb))


def primal_objective(gamma, cost, mu, nu):
    G = gamma.gamma if isinstance(gamma, TransportPlan) else np.asarray(gamma, dtype=float)
    a, b = _weights(mu), _weights(nu)
    return float(np.sum(cost * G) + kl_divergence(G.sum(1), a) + kl_divergence(G.sum(0), b))


def _weights(m):
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def c_transform(values, cost, side="target"):
    """Exact discrete c-transform.

    ``side="target"``: ``values`` live on the columns, returns
    ``min_j C_ij - values_j`` on the rows.  ``side="source"``: the reverse.
    """
    C = np.asarray(cost, dtype=float)
    v = np.asarray(values, dtype=float)
    if side == "target":
        return np.min(C - v[None, :], axis=1)
    if side == "source":
        return np.min(C - v[:, None], axis=0)
    raise ValueError("side must be 'source' or 'target'")


def c_transform_argmin(values, cost, side="target"):
    """Minimizing index of :func:`c_transform` (lowest index on ties)."""
    C = np.asarray(cost, dtype=float)
    v = np.asarray(values, dtype=float)
    if side == "target":
        return np.argmin(C - v[None, :], axis=1)
    if side == "source":
        return np.argmin(C - v[:, None], axis=0)
    raise ValueError("side must be 'source' or 'target'")


def tighten(potentials, cost):
    """Double c-transform ``phi <- psi^c``, ``psi <- phi^c``; output is feasible."""
    phi = c_transform(potentials.psi, cost, side="target")
    psi = c_transform(phi, cost, side="source")
    return DualPotentials(phi, psi)


# ---------------------------------------------------------------------------
# solver


class _Kernel:
    """Absorbed Gibbs kernel ``exp((fbar_i + gbar_j - C_ij) / eps)``."""

    def __init__(self, C, f, g, eps):
        self.eps = eps
        self.fbar = f.copy()
        self.gbar = g.copy()
        with np.errstate(under="ignore"):
            self.K = np.exp((f[:, None] + g[None, :] - C) / eps)


def _entropic_update_f(C, lb, g, eps):
    return -(eps / (1.0 + eps)) * logsumexp(lb[None, :] + (g[None, :] - C) / eps, axis=1)


def _entropic_update_g(C, la, f, eps):
    return -(eps / (1.0 + eps)) * logsumexp(la[:, None] + (f[:, None] - C) / eps, axis=0)


def _lse1(v):
    # scipy's logsumexp carries array-API overhead that dominates on the per-iteration rebalance
    top = np.max(v)
    return top + np.log(np.sum(np.exp(v - top)))


def _rebalance(la, lb, f, g):
    t = 0.5 * (_lse1(la - f) - _lse1(lb - g))
    return f + t, g - t


def _scaling_level(C, a, b, la, lb, f, g, eps, max_iters, tol):
    """Run stabilized scaling updates at a fixed ``eps``; returns ``(f, g, iters, residual)``."""
    ker = _Kernel(C, f, g, eps)
    residual = np.inf
    it = 0
    absorb_limit = 50.0
    for it in range(1, max_iters + 1):
        f_old, g_old = f, g

        with np.errstate(over="ignore", under="ignore"):
            s = ker.K @ (b * np.exp((g - ker.gbar) / eps))
        if np.all(np.isfinite(s)) and np.all(s > 0):
            f = (ker.fbar - eps * np.log(s)) / (1.0 + eps)
        else:
            f = _entropic_update_f(C, lb, g, eps)
            ker = _Kernel(C, f, g, eps)

        with np.errstate(over="ignore", under="ignore"):
            t = ker.K.T @ (a * np.exp((f - ker.fbar) / eps))
        if np.all(np.isfinite(t)) and np.all(t > 0):
            g = (ker.gbar - eps * np.log(t)) / (1.0 + eps)
        else:
            g = _entropic_update_g(C, la, f, eps)
            ker = _Kernel(C, f, g, eps)

        f, g = _rebalance(la, lb, f, g)
        residual = max(np.max(np.abs(f - f_old)), np.max(np.abs(g - g_old)))
        if residual < tol:
            break
        drift = max(np.max(np.abs(f - ker.fbar)), np.max(np.abs(g - ker.gbar))) / eps
        if drift > absorb_limit:
            ker = _Kernel(C, f, g, eps)
    return f, g, it, float(residual)


def _log_plan(C, la, lb, f, g, eps):
    return la[:, None] + lb[None, :] + (f[:, None] + g[None, :] - C) / eps


def _entropic_dual(C, a, b, la, lb, f, g, eps):
    P = np.exp(_log_plan(C, la, lb, f, g, eps))
    return float(np.dot(a, 1 - np.exp(-f)) + np.dot(b, 1 - np.exp(-g)) - eps * P.sum()), P


def _newton_polish(C, a, b, la, lb, f, g, eps, tol, max_steps=30):
    """Damped Newton ascent on the entropic dual; returns ``(f, g, steps, step_norm)``."""
    n, m = C.shape
    value, P = _entropic_dual(C, a, b, la, lb, f, g, eps)
    step_norm = np.inf
    for k in range(1, max_steps + 1):
        r, s = P.sum(1), P.sum(0)
        ea, eb = a * np.exp(-f), b * np.exp(-g)
        gf, gg = ea - r, eb - s
        d1 = ea + r / eps
        d2 = eb + s / eps
        B = P / eps
        if n >= m:
            S = np.diag(d2) - B.T @ (B / d1[:, None])
            dg = scipy.linalg.solve(S, gg - B.T @ (gf / d1), assume_a="pos")
            df = (gf - B @ dg) / d1
        else:
            S = np.diag(d1) - B @ (B.T / d2[:, None])
            df = scipy.linalg.solve(S, gf - B @ (gg / d2), assume_a="pos")
            dg = (gg - B.T @ df) / d2
        step = 1.0
        while True:
            f_new, g_new = f + step * df, g + step * dg
            with np.errstate(over="ignore"):
                new_value, P_new = _entropic_dual(C, a, b, la, lb, f_new, g_new, eps)
            if np.isfinite(new_value) and new_value >= value - 1e-14 * max(1.0, abs(value)):
                break
            step *= 0.5
            if step < 1e-8:
                return f, g, k, step_norm
        step_norm = step * max(np.max(np.abs(df)), np.max(np.abs(dg)))
        f, g, value, P = f_new, g_new, new_value, P_new
        if step_norm < tol:
            return f, g, k, float(step_norm)
    return f, g, max_steps, float(step_norm)


def solve_discrete_uot(mu, nu, config=None, cost=None):
    """Solve the KL-penalized discrete UOT problem between two weighted point sets.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        Source and target measures in the same dimension.
    config : SolverConfig, optional
    cost : ndarray of shape (n, m), optional
        Precomputed :func:`cost_matrix`; computed when omitted.

    Returns
    -------
    UOTResult
        ``(plan, potentials, primal_value, dual_value, info)``.  The plan is the
        entropic plan at ``eps_final`` and ``primal_value`` its unregularized
        objective; the potentials are tightened by a double c-transform so they
        are exactly feasible, and ``dual_value`` is their dual objective.

    Raises
    ------
    NonConvergence
        If the last level misses ``fixed_point_tol``.
    DimensionMismatch
    """
    config = config or SolverConfig()
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"source dim {mu.dim} != target dim {nu.dim}")
    C = cost_matrix(mu.points, nu.points) if cost is None else np.asarray(cost, dtype=float)
    if C.shape != (mu.n, nu.n):
        raise DimensionMismatch(f"cost shape {C.shape} != ({mu.n}, {nu.n})")
    a, b = np.asarray(mu.weights), np.asarray(nu.weights)
    la, lb = np.log(a), np.log(b)
    f = np.zeros(mu.n)
    g = np.zeros(nu.n)

    schedule = config.eps_schedule()
    total_iters = 0
    residual = np.inf
    for level, eps in enumerate(schedule):
        f, g, iters, residual = _scaling_level(
            C, a, b, la, lb, f, g, eps, int(config.max_iters_per_eps), config.fixed_point_tol)
        total_iters += iters
        logger.debug("eps=%.3g iters=%d residual=%.3g", eps, iters, residual)

    eps = schedule[-1]
    newton_steps = 0
    if config.polish and min(mu.n, nu.n) <= config.polish_max_size:
        f, g, newton_steps, step_norm = _newton_polish(
            C, a, b, la, lb, f, g, eps, config.fixed_point_tol)
        residual = min(residual, step_norm)
    if not residual < config.fixed_point_tol:
        raise NonConvergence(
            f"scaling iterations stalled at eps={eps:g} with residual {residual:.3e}",
            residual=residual, eps=eps)

    with np.errstate(under="ignore"):
        gamma = np.exp(_log_plan(C, la, lb, f, g, eps))
    gamma[gamma < FLUSH_THRESHOLD] = 0.0
    plan = TransportPlan(gamma)
    primal = primal_objective(plan, C, a, b)
    potentials = tighten(DualPotentials(f, g), C)
    dual = dual_objective(potentials, a, b)
    info = {
        "eps_final": eps,
        "iterations": total_iters,
        "newton_steps": newton_steps,
        "residual": residual,
        "entropic_potentials": DualPotentials(f, g),
        "cost": C,
    }
    return UOTResult(plan, potentials, primal, dual, info)


# ---------------------------------------------------------------------------
# identities used as diagnostics


class ExcessTerms(NamedTuple):
    slack_term: float
    kl_row: float
    kl_col: float
    lhs: float


def excess_decomposition(plan, oracle, cost, mu, nu, tol=FEASIBILITY_TOL):
    """Split the primal-minus-dual excess of ``plan`` against feasible ``oracle`` potentials.

    ``lhs = primal(plan) - dual(oracle)`` equals
    ``sum G_ij (C_ij - phi_i - psi_j) + KL(G 1 | e^{-phi} mu) + KL(G^T 1 | e^{-psi} nu)``.
    """
    C = np.asarray(cost, dtype=float)
    viol = oracle.max_violation(C)
    if viol > tol:
        raise InfeasibleOracle(f"oracle violates phi + psi <= C by {viol:.3e}")
    a, b = _weights(mu), _weights(nu)
    G = plan.gamma
    slack = float(np.sum(G * (C - oracle.phi[:, None] - oracle.psi[None, :])))
    kl_row = kl_divergence(plan.row_marginals, np.exp(-oracle.phi) * a)
    kl_col = kl_divergence(plan.col_marginals, np.exp(-oracle.psi) * b)
    lhs = primal_objective(plan, C, a, b) - dual_objective(oracle, a, b)
    return ExcessTerms(slack, kl_row, kl_col, lhs)


def verify_gap_lower_bound(phi, psi, x, y, t0_x, kappa):
    """Largest violation of ``|x-y|^2/2 - phi(x) - psi(y) >= (kappa/2) |y - T0(x)|^2``.

    Arguments are evaluated over sampled pairs: ``phi`` and ``t0_x`` at the
    points ``x``, ``psi`` at the points ``y``; row ``k`` of each array forms a pair.
    Returns ``max_k (kappa/2)|y_k - T0(x_k)|^2 - gap_k`` (nonpositive when the
    bound holds).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    t0 = np.atleast_2d(np.asarray(t0_x, dtype=float))
    gap = 0.5 * np.sum((x - y) ** 2, 1) - np.asarray(phi, float) - np.asarray(psi, float)
    bound = 0.5 * kappa * np.sum((y - t0) ** 2, 1)
    return float(np.max(bound - gap))
