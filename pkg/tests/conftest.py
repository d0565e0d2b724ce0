"""Shared fixtures: the three-agent cycle example and random problem generators."""

import logging

import numpy as np
import pytest

from adapters.costs import QuadraticCost
from core.domain.entities import Agent, ResourceProblem, WeightedDigraph
from core.graph import laplacian

logging.basicConfig(level=logging.DEBUG)

THIRD = 1.0 / 3.0
X_STAR = np.array([1 / 6, 2 / 3, 1 / 6])
MU_STAR = -1 / 6


def three_agent_problem(b=(THIRD, THIRD, THIRD)) -> ResourceProblem:
    """f = 1/2 (x1^2 + x2^2 / 4 + x3^2) with scalar decisions."""
    weights = (1.0, 0.25, 1.0)
    return ResourceProblem(
        agents=tuple(Agent(cost=QuadraticCost([[q]]), b=[bi]) for q, bi in zip(weights, b))
    )


def closed_form_equilibrium(eps: float):
    """x_bar(eps) and lambda_bar(eps) of the three-agent cycle."""
    denominator = 6 * (4 * eps ** 2 + 9 * eps + 6)
    x_bar = X_STAR + eps / denominator * np.array([4 * eps + 9, -8 * eps - 12, 4 * eps + 3])
    lambda_bar = MU_STAR + eps / denominator * np.array([-(4 * eps + 9), 2 * eps + 3, -(4 * eps + 3)])
    return x_bar, lambda_bar


@pytest.fixture
def problem():
    """The three-agent problem with b = 1/3 each."""
    return three_agent_problem()


@pytest.fixture
def reference_problem():
    """The three-agent problem started at its optimum (b = x*)."""
    return three_agent_problem(b=tuple(X_STAR))


@pytest.fixture
def cycle():
    """Directed 3-cycle 1 -> 2 -> 3 -> 1 with unit weights."""
    return WeightedDigraph.from_edges(3, [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)])


@pytest.fixture
def cycle_laplacian(cycle):
    """Laplacian of the 3-cycle."""
    return laplacian(cycle)


def random_quadratic_problem(rng: np.random.Generator, n_agents: int, n: int) -> ResourceProblem:
    """Random strongly convex quadratics with Q = A A^T + I/2."""
    agents = []
    for _ in range(n_agents):
        a = rng.standard_normal((n, n))
        q = a @ a.T + 0.5 * np.eye(n)
        agents.append(Agent(cost=QuadraticCost(q, rng.standard_normal(n)), b=rng.standard_normal(n)))
    return ResourceProblem(agents=tuple(agents))


def random_balanced_graph(rng: np.random.Generator, n_nodes: int) -> WeightedDigraph:
    """Sum of random weighted directed cycles; the first one is Hamiltonian."""
    weights = np.zeros((n_nodes, n_nodes))
    for k in range(rng.integers(1, 4)):
        length = n_nodes if k == 0 else int(rng.integers(2, n_nodes + 1))
        nodes = rng.permutation(n_nodes)[:length]
        w = rng.uniform(0.5, 2.0)
        for source, target in zip(nodes, np.roll(nodes, -1)):
            weights[target, source] += w
    return WeightedDigraph(n_nodes=n_nodes, weights=weights)


def random_digraph(rng: np.random.Generator, n_nodes: int, density: float = 0.4) -> WeightedDigraph:
    """Random digraph with independent edges of random weight."""
    mask = rng.random((n_nodes, n_nodes)) < density
    np.fill_diagonal(mask, False)
    return WeightedDigraph(n_nodes=n_nodes, weights=mask * rng.uniform(0.5, 2.0, (n_nodes, n_nodes)))


@pytest.fixture
def rng():
    """Seeded generator so randomized suites are reproducible."""
    return np.random.default_rng(20240607)
