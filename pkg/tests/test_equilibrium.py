"""
Test suite for the KKT oracle and the eps-equilibrium solvers.
"""

import numpy as np
import pytest

import core.equilibrium as equilibrium_module
from adapters.costs import QuadraticCost, QuarticCost
from core.domain.entities import Agent, ResourceProblem, WeightedDigraph
from core.domain.exceptions import ConvergenceError, GraphAssumptionError, InvalidParameterError, NonContractionError
from core.domain.value_objects import EquilibriumMethod
from core.equilibrium import (
    equilibrium_residual,
    phi_map,
    solve_equilibrium,
    solve_equilibrium_closed_form,
    solve_equilibrium_newton,
    solve_equilibrium_phi,
    solve_kkt,
    suboptimality_gap,
)
from core.graph import laplacian
from core.problem import total_cost, total_gradient
from tests.conftest import (
    MU_STAR,
    X_STAR,
    closed_form_equilibrium,
    random_balanced_graph,
    random_quadratic_problem,
)

EPS_VALUES = [1.0, 0.1, 0.01]


def quartic_three_agent_problem(alpha=0.05):
    """The three-agent example with a small quartic term added to every cost."""
    weights = (1.0, 0.25, 1.0)
    return ResourceProblem(
        agents=tuple(Agent(cost=QuarticCost([[q]], alpha=alpha), b=[1.0 / 3.0]) for q in weights)
    )


def test_kkt_of_three_agent_problem(problem):
    """x* = (1/6, 2/3, 1/6), mu* = -1/6."""
    kkt = solve_kkt(problem)
    np.testing.assert_allclose(kkt.x_star, X_STAR, atol=1e-9)
    np.testing.assert_allclose(kkt.mu_star, [MU_STAR], atol=1e-9)
    np.testing.assert_allclose(kkt.lambda_star, np.full(3, MU_STAR), atol=1e-9)
    assert kkt.kkt_residual < 1e-9


def test_identical_costs_share_equally(rng):
    """f_i = 1/2 |x_i|^2 gives x_i* = d / N for any split of d."""
    b = rng.standard_normal((4, 2))
    p = ResourceProblem(agents=tuple(Agent(QuadraticCost(np.eye(2)), bi) for bi in b))
    kkt = solve_kkt(p)
    np.testing.assert_allclose(kkt.x_star.reshape(4, 2), np.tile(b.sum(axis=0) / 4, (4, 1)), atol=1e-12)


def test_kkt_beats_random_feasible_points(rng):
    """No feasible point has a lower objective than x*."""
    p = random_quadratic_problem(rng, 5, 2)
    kkt = solve_kkt(p)
    best = total_cost(p, kkt.x_star)
    for _ in range(1000):
        y = rng.standard_normal((5, 2)) * 3.0
        y -= (y.sum(axis=0) - p.d) / 5
        assert total_cost(p, y.ravel()) >= best - 1e-9


def test_kkt_for_non_quadratic_costs():
    """Damped Newton solves the KKT system of quartic costs."""
    p = quartic_three_agent_problem(alpha=0.5)
    kkt = solve_kkt(p)
    assert kkt.kkt_residual < 1e-9
    gradients = total_gradient(p, kkt.x_star)
    np.testing.assert_allclose(gradients, -kkt.mu_star[0], atol=1e-9)
    assert abs(kkt.x_star.sum() - 1.0) < 1e-10


@pytest.mark.parametrize("eps", EPS_VALUES)
def test_newton_matches_closed_form(problem, cycle_laplacian, eps):
    """x_bar(eps) = x* + eps / (6 (4 eps^2 + 9 eps + 6)) (4 eps + 9, -8 eps - 12, 4 eps + 3)."""
    eq = solve_equilibrium_newton(problem, cycle_laplacian, eps)
    x_bar, lambda_bar = closed_form_equilibrium(eps)
    np.testing.assert_allclose(eq.x_bar, x_bar, atol=1e-8)
    np.testing.assert_allclose(eq.lambda_bar, lambda_bar, atol=1e-8)
    assert eq.method is EquilibriumMethod.NEWTON
    assert eq.residual < 1e-11


def test_equilibrium_values_at_tenth(problem, cycle_laplacian):
    """Numerical values at eps = 0.1 and eps = 1."""
    eq = solve_equilibrium_newton(problem, cycle_laplacian, 0.1)
    np.testing.assert_allclose(eq.x_bar, [0.189241, 0.635927, 0.174832], atol=2e-6)
    eq = solve_equilibrium_newton(problem, cycle_laplacian, 1.0)
    np.testing.assert_allclose(eq.x_bar, X_STAR + np.array([13.0, -20.0, 7.0]) / 114.0, atol=1e-12)


@pytest.mark.parametrize("eps", EPS_VALUES)
@pytest.mark.parametrize("method", list(EquilibriumMethod))
def test_reference_allocation_at_optimum_is_exact(reference_problem, cycle_laplacian, eps, method):
    """With b = x* every solver returns x* and lambda*."""
    kkt = solve_kkt(reference_problem)
    eq = solve_equilibrium(reference_problem, cycle_laplacian, eps, method, kkt=kkt)
    gap = suboptimality_gap(eq, kkt)
    assert gap.x_gap < 1e-9
    assert gap.lambda_gap < 1e-9


def test_gap_at_tenth(problem, cycle_laplacian):
    """|x_bar(0.1) - x*| is about 0.039."""
    kkt = solve_kkt(problem)
    gap = suboptimality_gap(solve_equilibrium_newton(problem, cycle_laplacian, 0.1, kkt=kkt), kkt)
    assert gap.x_gap == pytest.approx(0.039002, abs=1e-5)
    assert gap.lambda_gap > 0


def test_gaps_shrink_with_eps(problem, cycle_laplacian):
    """Gaps decrease monotonically along eps = 0.1, 0.01, 0.001."""
    kkt = solve_kkt(problem)
    gaps = [
        suboptimality_gap(solve_equilibrium_newton(problem, cycle_laplacian, eps, kkt=kkt), kkt)
        for eps in (0.1, 0.01, 0.001)
    ]
    assert gaps[0].x_gap > gaps[1].x_gap > gaps[2].x_gap
    assert gaps[0].lambda_gap > gaps[1].lambda_gap > gaps[2].lambda_gap
    # linear in eps: gap / eps approaches a positive constant
    ratios = [g.x_gap / g.eps for g in gaps]
    assert ratios[2] == pytest.approx(ratios[1], rel=0.05)


def test_constraint_is_met_exactly_on_random_problems(rng):
    """sum_i x_bar_i = d on balanced graphs for every eps."""
    for _ in range(20):
        n_agents, n = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        p = random_quadratic_problem(rng, n_agents, n)
        lap = laplacian(random_balanced_graph(rng, n_agents))
        kkt = solve_kkt(p)
        for eps in (0.5, 0.1, 0.02):
            eq = solve_equilibrium_newton(p, lap, eps, kkt=kkt)
            np.testing.assert_allclose(p.blocks(eq.x_bar).sum(axis=0), p.d, rtol=0, atol=1e-9)
            np.testing.assert_allclose(eq.lambda_bar, -total_gradient(p, eq.x_bar), atol=1e-10)


@pytest.mark.parametrize("eps", EPS_VALUES)
def test_solvers_agree_on_three_agent_problem(problem, cycle_laplacian, eps):
    """Newton, fixed-point and closed-form equilibria coincide."""
    kkt = solve_kkt(problem)
    newton = solve_equilibrium_newton(problem, cycle_laplacian, eps, kkt=kkt)
    phi = solve_equilibrium_phi(problem, cycle_laplacian, eps, kkt=kkt)
    closed = solve_equilibrium_closed_form(problem, cycle_laplacian, eps)
    np.testing.assert_allclose(phi.x_bar, newton.x_bar, atol=1e-9)
    np.testing.assert_allclose(closed.x_bar, newton.x_bar, atol=1e-9)
    np.testing.assert_allclose(phi.lambda_bar, newton.lambda_bar, atol=1e-9)
    assert phi.iterations == 1
    assert phi.method is EquilibriumMethod.PHI_ITERATION


def test_solvers_agree_on_random_quadratics(rng):
    """Fixed-point iteration needs one application on quadratics and matches Newton."""
    for _ in range(10):
        n_agents = int(rng.integers(2, 7))
        p = random_quadratic_problem(rng, n_agents, int(rng.integers(1, 3)))
        lap = laplacian(random_balanced_graph(rng, n_agents))
        kkt = solve_kkt(p)
        newton = solve_equilibrium_newton(p, lap, 0.1, kkt=kkt)
        phi = solve_equilibrium_phi(p, lap, 0.1, kkt=kkt)
        np.testing.assert_allclose(phi.x_bar, newton.x_bar, atol=1e-8)
        assert phi.iterations == 1


def test_phi_map_is_constant_for_quadratics(problem, cycle_laplacian, rng):
    """r(z) = 0, so Phi(z) = eps (eps I + L H)^-1 (b - x*) = x_bar - x*."""
    kkt = solve_kkt(problem)
    x_bar, _ = closed_form_equilibrium(0.1)
    for _ in range(3):
        z = rng.standard_normal(3)
        np.testing.assert_allclose(phi_map(problem, cycle_laplacian, 0.1, kkt, z), x_bar - X_STAR, atol=1e-12)


def test_phi_iteration_contracts_on_quartic_costs(cycle_laplacian):
    """Non-quadratic costs need several applications with ratio below one."""
    p = quartic_three_agent_problem(alpha=0.05)
    kkt = solve_kkt(p)
    phi = solve_equilibrium_phi(p, cycle_laplacian, 0.05, kkt=kkt)
    newton = solve_equilibrium_newton(p, cycle_laplacian, 0.05, kkt=kkt)
    assert phi.iterations > 1
    assert phi.contraction_ratio is not None and phi.contraction_ratio < 1.0
    np.testing.assert_allclose(phi.x_bar, newton.x_bar, atol=1e-8)
    assert equilibrium_residual(p, cycle_laplacian, 0.05, phi.x_bar, phi.lambda_bar) < 1e-9


def test_non_contraction_is_detected(problem, cycle_laplacian, monkeypatch):
    """Growing steps three times in a row abort the iteration."""
    monkeypatch.setattr(equilibrium_module._PhiOperator, "__call__", lambda self, z: 2.0 * z + 1.0)
    with pytest.raises(NonContractionError) as excinfo:
        solve_equilibrium_phi(problem, cycle_laplacian, 0.1)
    assert all(ratio >= 1.0 for ratio in excinfo.value.ratios)


def test_phi_iteration_budget(problem, cycle_laplacian, monkeypatch):
    """A slowly contracting map exhausts max_iter."""
    monkeypatch.setattr(equilibrium_module._PhiOperator, "__call__", lambda self, z: 0.99 * z + 1.0)
    with pytest.raises(ConvergenceError):
        solve_equilibrium_phi(problem, cycle_laplacian, 0.1, max_iter=5)


def test_solvers_refuse_unbalanced_graphs(problem):
    """The equilibrium solvers check the graph assumptions."""
    lap = laplacian(WeightedDigraph.from_edges(3, [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (1, 3, 1.0)]))
    for method in EquilibriumMethod:
        with pytest.raises(GraphAssumptionError):
            solve_equilibrium(problem, lap, 0.1, method)


def test_closed_form_needs_quadratic_costs(cycle_laplacian):
    """The direct solve is only valid for linear equilibrium equations."""
    with pytest.raises(InvalidParameterError):
        solve_equilibrium_closed_form(quartic_three_agent_problem(), cycle_laplacian, 0.1)


@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_non_positive_eps_is_rejected(problem, cycle_laplacian, eps):
    """eps must be positive for every solver."""
    with pytest.raises(InvalidParameterError):
        solve_equilibrium_newton(problem, cycle_laplacian, eps)


def test_residual_and_phi_never_form_the_kronecker_product(rng, monkeypatch):
    """Residuals and Phi applications use the block-wise Laplacian action."""
    p = random_quadratic_problem(rng, 4, 2)
    lap = laplacian(random_balanced_graph(rng, 4))
    kkt = solve_kkt(p)
    eq = solve_equilibrium_newton(p, lap, 0.2, kkt=kkt)
    x, lam = rng.standard_normal(8), rng.standard_normal(8)
    k = np.kron(lap.matrix, np.eye(2))
    expected = np.linalg.norm(np.concatenate([total_gradient(p, x) + lam, -0.2 * (x - p.b) + k @ lam]))
    operator = equilibrium_module._PhiOperator(p, lap, 0.2, kkt)

    def refuse(*args, **kwargs):
        raise AssertionError("Kronecker product formed")

    monkeypatch.setattr(np, "kron", refuse)
    assert equilibrium_residual(p, lap, 0.2, x, lam) == pytest.approx(expected, rel=1e-12)
    assert equilibrium_residual(p, lap, 0.2, eq.x_bar, eq.lambda_bar) < 1e-9
    np.testing.assert_allclose(operator(rng.standard_normal(8)), eq.x_bar - kkt.x_star, atol=1e-9)
