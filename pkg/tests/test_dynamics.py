"""
Test suite for the vector fields of the allocation dynamics.
"""

import numpy as np
import pytest

from core.domain.entities import NetworkState, PiState, ReducedState, SingularState, WeightedDigraph
from core.domain.exceptions import InvalidDimensionError, InvalidParameterError
from core.domain.value_objects import IntegratorMethod, IntegratorOptions, PiConfig
from core.dynamics import (
    PiField,
    PrimalDualField,
    SingularField,
    SuboptimalField,
    from_singular_coords,
    pi_rhs,
    primal_dual_rhs,
    singular_rhs,
    suboptimal_rhs,
    to_singular_coords,
)
from core.graph import build_consensus_transform, laplacian, symmetrized
from core.integrate import integrate_to_times
from tests.conftest import (
    MU_STAR,
    X_STAR,
    closed_form_equilibrium,
    random_balanced_graph,
    random_quadratic_problem,
)


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_suboptimal_rhs_vanishes_at_equilibrium(problem, cycle_laplacian, eps):
    """The closed-form equilibrium is a rest point."""
    x_bar, lambda_bar = closed_form_equilibrium(eps)
    derivative = suboptimal_rhs(problem, cycle_laplacian, NetworkState(x=x_bar, lam=lambda_bar), eps)
    np.testing.assert_allclose(derivative.to_vector(), 0.0, atol=1e-12)


def test_suboptimal_rhs_values(problem, cycle_laplacian):
    """x' = -grad f(x) - lambda and lambda' = -(1/eps) L lambda + x - b."""
    s = NetworkState(x=np.array([1.0, 0.0, 0.0]), lam=np.array([0.0, 1.0, 0.0]))
    derivative = suboptimal_rhs(problem, cycle_laplacian, s, 0.5)
    np.testing.assert_allclose(derivative.x, [-1.0, -1.0, 0.0])
    # L lambda = (0, 1, -1)
    np.testing.assert_allclose(derivative.lam, np.array([0.0, -2.0, 2.0]) + s.x - 1.0 / 3.0)


def test_suboptimal_rhs_at_reference_allocation(problem, cycle_laplacian):
    """At x = b, lambda = 0: x' = -(1/3, 1/12, 1/3) and lambda' = 0."""
    s = NetworkState(x=np.array(problem.b), lam=np.zeros(3))
    derivative = suboptimal_rhs(problem, cycle_laplacian, s, 0.1)
    np.testing.assert_allclose(derivative.x, [-1.0 / 3.0, -1.0 / 12.0, -1.0 / 3.0], atol=1e-15)
    np.testing.assert_allclose(derivative.lam, 0.0, atol=1e-15)
    reduced = primal_dual_rhs(problem, ReducedState(x=np.array(problem.b), mu=np.zeros(1)))
    np.testing.assert_allclose(reduced.x, derivative.x, atol=1e-15)
    np.testing.assert_allclose(reduced.mu, 0.0, atol=1e-15)


@pytest.mark.parametrize("eps", [1.0, 0.01])
def test_consensual_multipliers_leave_only_the_residual(eps, rng):
    """lambda = 1 kron c cancels the Laplacian term: lambda' = x - b for any eps."""
    p = random_quadratic_problem(rng, 5, 2)
    lap = laplacian(random_balanced_graph(rng, 5))
    x = rng.standard_normal(10)
    c = rng.standard_normal(2)
    derivative = suboptimal_rhs(p, lap, NetworkState(x=x, lam=np.tile(c, 5)), eps)
    np.testing.assert_allclose(derivative.lam, x - p.b, atol=1e-12)
    shifted = suboptimal_rhs(p, lap, NetworkState(x=x, lam=np.tile(c, 5) + 3.0), eps)
    np.testing.assert_allclose(shifted.lam, derivative.lam, atol=1e-12)


def test_pi_rhs_with_consensual_multipliers_and_integrators(problem, cycle_laplacian, rng):
    """Consensual lambda and z: lambda'_i = x_i - b_i and z' = 0."""
    s = PiState(x=rng.standard_normal(3), lam=np.full(3, 0.7), z=np.full(3, -1.2))
    derivative = pi_rhs(problem, cycle_laplacian, s, PiConfig(k_p=2.0, k_i=3.0))
    np.testing.assert_allclose(derivative.lam, s.x - problem.b, atol=1e-14)
    np.testing.assert_allclose(derivative.z, 0.0, atol=1e-14)


@pytest.mark.parametrize("eps", [0.0, -0.1])
def test_suboptimal_rhs_rejects_non_positive_eps(problem, cycle_laplacian, eps):
    """eps must be positive."""
    s = NetworkState(x=np.zeros(3), lam=np.zeros(3))
    with pytest.raises(InvalidParameterError):
        suboptimal_rhs(problem, cycle_laplacian, s, eps)


def test_graph_size_must_match(problem):
    """A 2-node Laplacian cannot drive three agents."""
    lap = laplacian(WeightedDigraph.from_edges(2, [(1, 2, 1.0), (2, 1, 1.0)]))
    with pytest.raises(InvalidDimensionError):
        SuboptimalField(problem, lap, 0.1)


def test_primal_dual_rhs_vanishes_at_optimum(problem):
    """(x*, mu*) is the rest point of the centralized flow."""
    derivative = primal_dual_rhs(problem, ReducedState(x=X_STAR.copy(), mu=np.array([MU_STAR])))
    np.testing.assert_allclose(derivative.to_vector(), 0.0, atol=1e-15)


def test_primal_dual_dual_gain_scales_multiplier_update(problem):
    """mu' = gain * (sum_i x_i - d)."""
    s = ReducedState(x=np.array([1.0, 1.0, 1.0]), mu=np.zeros(1))
    np.testing.assert_allclose(primal_dual_rhs(problem, s).mu, [2.0])
    np.testing.assert_allclose(primal_dual_rhs(problem, s, dual_gain=1 / 3).mu, [2.0 / 3.0])


def test_pi_rhs_vanishes_at_its_rest_point(problem, cycle):
    """With L z = (x* - b) / k_i on the undirected cycle, (x*, lambda*, z) is at rest."""
    lap = laplacian(symmetrized(cycle))
    cfg = PiConfig(k_p=1.0, k_i=2.0)
    z, *_ = np.linalg.lstsq(lap.matrix, (X_STAR - problem.b) / cfg.k_i, rcond=None)
    s = PiState(x=X_STAR.copy(), lam=np.full(3, MU_STAR), z=z)
    np.testing.assert_allclose(pi_rhs(problem, lap, s, cfg).to_vector(), 0.0, atol=1e-12)


def test_singular_coordinates_round_trip(rng):
    """(x, lambda) -> (x, mu, theta) -> (x, lambda) is the identity."""
    tr = build_consensus_transform(4)
    s = NetworkState(x=rng.standard_normal(8), lam=rng.standard_normal(8))
    back = from_singular_coords(to_singular_coords(s, tr), tr)
    np.testing.assert_allclose(back.x, s.x)
    np.testing.assert_allclose(back.lam, s.lam, atol=1e-12)


def test_mu_is_the_mean_multiplier(rng):
    """The consensus coordinate is the average of the agents' multipliers."""
    tr = build_consensus_transform(3)
    lam = rng.standard_normal(6)
    s = to_singular_coords(NetworkState(x=np.zeros(6), lam=lam), tr)
    np.testing.assert_allclose(s.mu, lam.reshape(3, 2).mean(axis=0))


@pytest.mark.parametrize(
    "edges",
    [
        [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)],
        [(1, 2, 1.0), (2, 3, 2.0), (3, 1, 0.5), (1, 3, 1.0)],
    ],
)
def test_singular_rhs_is_the_transformed_field(edges, rng):
    """(T kron I) applied to lambda' equals (mu', theta'), balanced or not."""
    p = random_quadratic_problem(rng, 3, 2)
    lap = laplacian(WeightedDigraph.from_edges(3, edges))
    tr = build_consensus_transform(3)
    s = NetworkState(x=rng.standard_normal(6), lam=rng.standard_normal(6))
    eps = 0.3
    direct = suboptimal_rhs(p, lap, s, eps)
    transformed = singular_rhs(p, lap, tr, to_singular_coords(s, tr), eps)
    expected = to_singular_coords(direct, tr)
    np.testing.assert_allclose(transformed.x, direct.x, atol=1e-12)
    np.testing.assert_allclose(transformed.mu, expected.mu, atol=1e-12)
    np.testing.assert_allclose(transformed.theta, expected.theta, atol=1e-12)


def test_slow_part_on_fast_manifold_is_reduced_model(problem, cycle_laplacian, rng):
    """With theta = 0 the (x, mu) part of the field is the primal-dual flow with gain 1/N."""
    tr = build_consensus_transform(3)
    s = SingularState(x=rng.standard_normal(3), mu=rng.standard_normal(1), theta=np.zeros(2))
    full = singular_rhs(problem, cycle_laplacian, tr, s, 0.1)
    reduced = primal_dual_rhs(problem, ReducedState(x=s.x, mu=s.mu), dual_gain=1 / 3)
    np.testing.assert_allclose(full.x, reduced.x, atol=1e-14)
    np.testing.assert_allclose(full.mu, reduced.mu, atol=1e-14)


def test_field_adapters(problem, cycle_laplacian):
    """Flat-vector fields report their dimension and stiffness scale."""
    tr = build_consensus_transform(3)
    assert SuboptimalField(problem, cycle_laplacian, 0.2).dimension == 6
    assert SuboptimalField(problem, cycle_laplacian, 0.2).stiffness_scale == 0.2
    assert SingularField(problem, cycle_laplacian, tr, 0.2).stiffness_scale == 0.2
    assert PiField(problem, cycle_laplacian, PiConfig()).dimension == 9
    assert PrimalDualField(problem).dimension == 4
    assert PrimalDualField(problem).stiffness_scale is None
    with pytest.raises(InvalidParameterError):
        PrimalDualField(problem, dual_gain=0.0)


def test_both_representations_give_the_same_allocation(problem, cycle_laplacian):
    """x(t) from (x, lambda) and from (x, mu, theta) coordinates agree."""
    eps = 0.1
    tr = build_consensus_transform(3)
    s0 = NetworkState(x=np.array(problem.b), lam=np.zeros(3))
    opts = IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12)
    times = np.linspace(0.0, 5.0, 51)
    direct = integrate_to_times(SuboptimalField(problem, cycle_laplacian, eps), s0.to_vector(), times, opts)
    singular = integrate_to_times(
        SingularField(problem, cycle_laplacian, tr, eps),
        to_singular_coords(s0, tr).to_vector(),
        times,
        opts,
    )
    np.testing.assert_allclose(direct.states[:, :3], singular.states[:, :3], atol=1e-8)
    recovered = from_singular_coords(SingularState.from_vector(singular.final_state, 3, 1), tr)
    np.testing.assert_allclose(recovered.lam, direct.final_state[3:], atol=1e-8)


def test_adaptive_and_fixed_step_agree(problem, cycle_laplacian):
    """RKF45 and RK4 with h = 1e-3 give the same samples."""
    field = SuboptimalField(problem, cycle_laplacian, 0.1)
    s0 = NetworkState(x=np.array(problem.b), lam=np.zeros(3)).to_vector()
    times = np.linspace(0.0, 5.0, 11)
    adaptive = integrate_to_times(field, s0, times, IntegratorOptions(rel_tol=1e-10, abs_tol=1e-12))
    fixed = integrate_to_times(field, s0, times, IntegratorOptions(method=IntegratorMethod.FIXED_RK4, h=1e-3))
    np.testing.assert_allclose(adaptive.states, fixed.states, rtol=0, atol=1e-8)
