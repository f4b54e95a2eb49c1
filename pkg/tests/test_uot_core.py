import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from uotpair import (DimensionMismatch, DiscreteMeasure, DualPotentials, InfeasibleOracle,
                     NegativeWeight, NonConvergence, SolverConfig, TransportPlan, c_transform,
                     cost_matrix, density_to_grid, dual_objective, excess_decomposition,
                     kl_divergence, solve_discrete_uot, verify_gap_lower_bound, SyntheticDensity)
from uotpair.uot_core import c_transform_argmin, primal_objective, tighten

from conftest import dirac, random_measure

# ``dist`` is realized by opposite corners in enough dimensions to stay inside the cube
CORNERS = {0.0: (np.zeros(1), np.zeros(1)), 0.5: (np.zeros(1), np.full(1, 0.5)),
           1.0: (np.zeros(1), np.ones(1)), 2.0: (np.zeros(4), np.ones(4))}


def two_dirac_value(a, b, dist):
    return a + b - 2 * np.sqrt(a * b) * np.exp(-dist ** 2 / 4)


def scalar_oracle(a, b, cost):
    # brute 1-D minimization over the transported mass
    f = lambda m: cost * m + m * np.log(m / a) - m + a + m * np.log(m / b) - m + b  # noqa: E731
    res = optimize.minimize_scalar(f, bounds=(1e-12, 10 * (a + b)), method="bounded",
                                   options={"xatol": 1e-12})
    return res.fun, res.x


def test_cost_matrix_half_squared_distance():
    x = np.array([[0.0, 0.0], [1.0, 0.5]])
    y = np.array([[0.0, 1.0]])
    np.testing.assert_allclose(cost_matrix(x, y), [[0.5], [0.625]])


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps_init=1e-3, eps_final=1.0)
    with pytest.raises(ValueError):
        SolverConfig(eps_decay=1.5)
    sched = SolverConfig().eps_schedule()
    assert sched[0] == 1.0 and sched[-1] == pytest.approx(1e-3)
    assert all(x > y for x, y in zip(sched, sched[1:]))


# -- closed forms ---------------------------------------------------------------

def test_coincident_unit_diracs():
    res = solve_discrete_uot(dirac(0.0, 1), dirac(0.0, 1))
    assert res.primal_value == pytest.approx(0.0, abs=1e-12)
    assert res.plan.total_mass() == pytest.approx(1.0, rel=1e-9)


def test_coincident_diracs_unequal_mass():
    res = solve_discrete_uot(dirac(0.0, 1), dirac(0.0, 4))
    ref_val, ref_m = scalar_oracle(1, 4, 0.0)
    assert ref_val == pytest.approx(1.0, abs=1e-9)
    assert res.primal_value == pytest.approx(1.0, rel=1e-3)
    assert res.plan.total_mass() == pytest.approx(2.0, rel=1e-3)


def test_unit_diracs_at_distance_two():
    x, y = CORNERS[2.0]
    res = solve_discrete_uot(dirac(x, 1), dirac(y, 1))
    assert res.primal_value == pytest.approx(2 - 2 / np.e, rel=1e-3)
    assert res.primal_value == pytest.approx(1.264241, abs=2e-3)
    assert res.plan.total_mass() == pytest.approx(np.exp(-1), rel=1e-2)
    assert res.dual_value == pytest.approx(2 - 2 / np.e, rel=1e-3)


@pytest.mark.parametrize("a,b,dist", list(itertools.product([0.5, 1, 2, 4], [0.5, 1, 2, 4],
                                                             [0.0, 0.5, 1.0, 2.0])))
def test_two_dirac_family(a, b, dist):
    x, y = CORNERS[dist]
    res = solve_discrete_uot(dirac(x, a), dirac(y, b))
    closed = two_dirac_value(a, b, dist)
    brute, _ = scalar_oracle(a, b, dist ** 2 / 2)
    assert closed == pytest.approx(brute, rel=1e-8, abs=1e-10)
    # closed value is exactly 0 when a == b at distance 0; there the error is
    # measured against the total input mass instead
    assert res.primal_value == pytest.approx(closed, rel=1e-3, abs=1e-6 * (a + b))


def test_uniform_grid_value(uniform_grids_32):
    mu, nu = (g.to_discrete()[0] for g in uniform_grids_32)
    res = solve_discrete_uot(mu, nu)
    assert res.primal_value == pytest.approx((1 - np.sqrt(2.5)) ** 2, abs=1e-2)
    assert res.dual_value <= res.primal_value + 1e-9


# -- c-transform ----------------------------------------------------------------

def test_c_transform_midpoint():
    C = cost_matrix(np.array([[0.5]]), np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(c_transform(np.zeros(2), C, side="target"), [0.125])


def test_c_transform_identity_support(rng):
    X = rng.random((15, 2))
    np.testing.assert_allclose(c_transform(np.zeros(15), cost_matrix(X, X)), 0.0, atol=0)


def test_c_transform_brute_force(rng):
    X, Y = rng.random((8, 2)), rng.random((11, 2))
    psi = rng.normal(size=11)
    ref = [min(0.5 * np.sum((x - y) ** 2) - p for y, p in zip(Y, psi)) for x in X]
    np.testing.assert_allclose(c_transform(psi, cost_matrix(X, Y)), ref, rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 25), m=st.integers(1, 25), seed=st.integers(0, 2**31))
def test_double_c_transform_idempotent(n, m, seed):
    rng = np.random.default_rng(seed)
    C = cost_matrix(rng.random((n, 2)), rng.random((m, 2)))
    psi = rng.normal(scale=0.3, size=m)
    phi = c_transform(psi, C, "target")
    phi3 = c_transform(c_transform(phi, C, "source"), C, "target")
    np.testing.assert_allclose(phi3, phi, rtol=0, atol=1e-12)
    pots = tighten(DualPotentials(rng.normal(size=n), psi), C)
    assert pots.max_violation(C) <= 1e-12


def test_c_transform_argmin_lowest_index():
    C = cost_matrix(np.array([[0.5]]), np.array([[0.0], [1.0]]))
    assert c_transform_argmin(np.zeros(2), C).tolist() == [0]


# -- KL ------------------------------------------------------------------------

def test_kl_examples(rng):
    ref = rng.uniform(0.1, 1, 9)
    assert kl_divergence(ref, ref) == 0.0
    ref /= ref.sum()
    assert kl_divergence(2 * ref, ref) == pytest.approx(2 * np.log(2) - 1, abs=1e-14)
    assert kl_divergence(2 * ref, ref) == pytest.approx(0.386294, abs=1e-6)


def test_kl_zero_mass_convention():
    assert kl_divergence(np.array([0.0, 1.0]), np.array([0.5, 1.0])) == pytest.approx(0.5)


def test_kl_subnormal_mass_stays_finite():
    # eta / ref underflows to 0 here; the value is essentially ref
    assert kl_divergence([5e-324], [2.0]) == pytest.approx(2.0)


def test_kl_rejects_negative():
    with pytest.raises(NegativeWeight):
        kl_divergence(np.array([-0.1]), np.array([1.0]))
    with pytest.raises(NegativeWeight):
        kl_divergence(np.array([0.1]), np.array([0.0]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(1e-3, 1e3))
def test_kl_scaling_identity(seed, alpha):
    rng = np.random.default_rng(seed)
    eta = rng.exponential(size=12) * (rng.random(12) > 0.2)
    ref = rng.exponential(size=12) + 1e-3
    lhs = kl_divergence(eta, alpha * ref)
    rhs = kl_divergence(eta, ref) - eta.sum() * np.log(alpha) + (alpha - 1) * ref.sum()
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * max(1.0, abs(alpha) * ref.sum()))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    assert kl_divergence(rng.exponential(size=7), rng.exponential(size=7) + 1e-6) >= 0


# -- dual objective -----------------------------------------------------------------

def test_dual_objective_examples():
    a, b = np.array([0.3, 0.7]), np.array([2.0])
    assert dual_objective(DualPotentials(np.zeros(2), np.zeros(1)), a, b) == 0.0
    big = DualPotentials(np.full(2, 1e6), np.zeros(1))
    assert dual_objective(big, a, b) == pytest.approx(a.sum())


# -- excess identity ----------------------------------------------------------------

def test_excess_identity_random_plans(rng):
    for _ in range(20):
        mu, nu = random_measure(rng, 6), random_measure(rng, 9)
        C = cost_matrix(mu.points, nu.points)
        G = TransportPlan(rng.exponential(size=C.shape) * 0.1)
        oracle = tighten(DualPotentials(rng.normal(size=6), rng.normal(size=9)), C)
        t = excess_decomposition(G, oracle, C, mu, nu)
        assert t.lhs == pytest.approx(t.slack_term + t.kl_row + t.kl_col, abs=1e-9)
        assert min(t.slack_term, t.kl_row, t.kl_col) >= -1e-12
        assert t.lhs >= -1e-12


def test_excess_equal_uniform_zero_oracle():
    g = density_to_grid(SyntheticDensity.uniform(1), 1.0, 16)
    mu, _ = g.to_discrete()
    res = solve_discrete_uot(mu, mu)
    C = res.info["cost"]
    zero = DualPotentials(np.zeros(16), np.zeros(16))
    t = excess_decomposition(res.plan, zero, C, mu, mu)
    assert t.lhs == pytest.approx(res.primal_value, abs=1e-12)
    assert t.lhs == pytest.approx(t.slack_term + t.kl_row + t.kl_col, abs=1e-9)


def test_excess_constant_oracle_nearly_zero(uniform_grids_32):
    mu, nu = (g.to_discrete()[0] for g in uniform_grids_32)
    res = solve_discrete_uot(mu, nu, SolverConfig(eps_final=1e-4, max_iters_per_eps=20000))
    C = res.info["cost"]
    c = 0.5 * np.log(1 / 2.5)
    oracle = DualPotentials(np.full(mu.n, c), np.full(nu.n, -c))
    t = excess_decomposition(res.plan, oracle, C, mu, nu)
    assert t.lhs == pytest.approx(t.slack_term + t.kl_row + t.kl_col, abs=1e-9)
    # the entropic plan spreads over neighbouring cells, so the terms are small, not zero
    assert max(t.slack_term, t.kl_row, t.kl_col) < 5e-3


def test_excess_rejects_infeasible_oracle(rng):
    mu, nu = random_measure(rng, 3), random_measure(rng, 3)
    C = cost_matrix(mu.points, nu.points)
    with pytest.raises(InfeasibleOracle):
        excess_decomposition(TransportPlan(np.ones((3, 3))), DualPotentials(np.ones(3), np.ones(3)),
                             C, mu, nu)


# -- solver invariants ----------------------------------------------------------------

def mass_bound_ok(res, mu, nu):
    return res.plan.total_mass() <= np.e * np.sqrt(mu.total_mass() * nu.total_mass()) * (1 + 1e-6)


def test_duality_gap_shrinks_with_eps():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        mu, nu = random_measure(rng, 20), random_measure(rng, 20, mass=2.0)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3):
            res = solve_discrete_uot(mu, nu, SolverConfig(eps_final=eps))
            gaps.append(res.primal_value - res.dual_value)
            assert res.potentials.max_violation(res.info["cost"]) <= 1e-12
        assert gaps[0] >= -1e-9 and all(g >= -1e-9 for g in gaps)
        assert gaps[0] > gaps[1] > gaps[2]


def test_primal_matches_brute_force_lp_free_instance():
    # small instance: compare against a direct constrained minimization of the primal
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 3), random_measure(rng, 3, mass=1.7)
    C = cost_matrix(mu.points, nu.points)
    obj = lambda z: primal_objective(np.exp(z).reshape(3, 3), C, mu, nu)  # noqa: E731
    brute = optimize.minimize(obj, np.zeros(9), method="BFGS", options={"gtol": 1e-10}).fun
    res = solve_discrete_uot(mu, nu, SolverConfig(eps_final=1e-4, max_iters_per_eps=20000))
    assert res.primal_value == pytest.approx(brute, abs=2e-3)
    assert res.dual_value <= brute + 1e-9


def test_mass_bound_adversarial():
    for a, b in [(1e-3, 1e3), (5.0, 5.0), (0.01, 0.02)]:
        mu = DiscreteMeasure(np.zeros((5, 3)), np.full(5, a / 5))
        nu = DiscreteMeasure(np.ones((4, 3)), np.full(4, b / 4))
        res = solve_discrete_uot(mu, nu)
        assert mass_bound_ok(res, mu, nu)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 30), m=st.integers(1, 30), seed=st.integers(0, 2**31),
       ma=st.floats(0.05, 20), mb=st.floats(0.05, 20))
def test_solver_properties(n, m, seed, ma, mb):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, n, 2, ma), random_measure(rng, m, 2, mb)
    res = solve_discrete_uot(mu, nu)
    G = res.plan
    assert np.all(G.gamma >= 0)
    np.testing.assert_allclose(G.row_marginals, G.gamma.sum(1), rtol=1e-12)
    assert mass_bound_ok(res, mu, nu)
    assert res.potentials.is_feasible(res.info["cost"])
    assert res.primal_value >= res.dual_value - 1e-9


def test_symmetry(rng):
    mu, nu = random_measure(rng, 12, 2), random_measure(rng, 17, 2, mass=2.5)
    fwd = solve_discrete_uot(mu, nu)
    bwd = solve_discrete_uot(nu, mu)
    assert fwd.primal_value == pytest.approx(bwd.primal_value, abs=1e-9)
    np.testing.assert_allclose(fwd.plan.gamma, bwd.plan.gamma.T, atol=1e-9)


def test_permutation_equivariance(rng):
    mu, nu = random_measure(rng, 10, 2), random_measure(rng, 8, 2)
    perm = rng.permutation(10)
    res = solve_discrete_uot(mu, nu)
    resp = solve_discrete_uot(DiscreteMeasure(mu.points[perm], mu.weights[perm]), nu)
    np.testing.assert_allclose(resp.plan.gamma, res.plan.gamma[perm], atol=1e-10)


def test_plan_flush_and_log_domain():
    # far apart supports with tiny eps: no NaNs, plan entries either 0 or >= flush threshold
    mu = DiscreteMeasure(np.zeros((2, 4)), np.array([0.5, 0.5]))
    nu = DiscreteMeasure(np.ones((2, 4)), np.array([1.0, 1.0]))
    res = solve_discrete_uot(mu, nu, SolverConfig(eps_final=1e-4, max_iters_per_eps=20000))
    assert np.all(np.isfinite(res.plan.gamma))
    assert np.isfinite(res.primal_value)


def test_nonconvergence_raises(rng):
    mu, nu = random_measure(rng, 30), random_measure(rng, 30, mass=3.0)
    cfg = SolverConfig(max_iters_per_eps=2, polish=False)
    with pytest.raises(NonConvergence) as exc:
        solve_discrete_uot(mu, nu, cfg)
    assert exc.value.residual > cfg.fixed_point_tol


def test_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        solve_discrete_uot(random_measure(rng, 3, 1), random_measure(rng, 3, 2))


# -- gap lower bound ------------------------------------------------------------------

def test_gap_bound_identity_oracle(rng):
    x, y = rng.random((500, 3)), rng.random((500, 3))
    zeros = np.zeros(500)
    for kappa in (0.0, 0.3, 1.0):
        assert verify_gap_lower_bound(zeros, zeros, x, y, x, kappa) <= 1e-15


def test_gap_bound_detects_violation():
    x = np.array([[0.5]])
    y = np.array([[0.5]])
    assert verify_gap_lower_bound([0.1], [0.0], x, y, x, 0.5) == pytest.approx(0.1)
