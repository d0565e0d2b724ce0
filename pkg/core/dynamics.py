"""
Vector fields of the allocation dynamics.

Three algorithms are provided:

- the sub-optimal distributed dynamics
      x' = -grad f(x) - lambda
      lambda' = -(1/eps) (L kron I) lambda + (x - b)
- the proportional-integral baseline with auxiliary states z,
- the centralized primal-dual flow on a shared multiplier mu (the reduced model).

The sub-optimal dynamics can also be written in consensus/disagreement
coordinates (x, mu, theta) = (x, (T kron I) lambda), which exposes theta as the
fast variable. Each algorithm comes as a pure function on typed states and as
a VectorFieldPort adapter on flat vectors for the integrators.
"""

import logging

import numpy as np

from core.domain.entities import (
    ConsensusTransform,
    Laplacian,
    NetworkState,
    PiState,
    ReducedState,
    ResourceProblem,
    SingularState,
)
from core.domain.exceptions import InvalidDimensionError, InvalidParameterError
from core.domain.value_objects import PiConfig
from core.graph import kron_apply
from core.ports import VectorFieldPort
from core.problem import total_gradient

logger = logging.getLogger(__name__)


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")


def _check_graph(p: ResourceProblem, lap: Laplacian) -> None:
    if lap.n_nodes != p.n_agents:
        raise InvalidDimensionError("graph size", p.n_agents, lap.n_nodes)


def _check_transform(n_nodes: int, tr: ConsensusTransform) -> None:
    if tr.n_nodes != n_nodes:
        raise InvalidDimensionError("consensus transform size", n_nodes, tr.n_nodes)


def _replicate(p: ResourceProblem, mu: np.ndarray) -> np.ndarray:
    """(1_N kron I_n) mu."""
    return np.tile(mu, p.n_agents)


def suboptimal_rhs(p: ResourceProblem, lap: Laplacian, s: NetworkState, eps: float) -> NetworkState:
    """Evaluate the sub-optimal distributed dynamics.

    Args:
        p: The allocation problem
        lap: Laplacian of the communication graph
        s: Current state (x, lambda)
        eps: Time-scale parameter, > 0

    Returns:
        NetworkState: The derivative (x', lambda')
    """
    _check_eps(eps)
    _check_graph(p, lap)
    x_dot = -total_gradient(p, s.x) - s.lam
    lam_dot = -lap.apply(s.lam, p.n) / eps + (s.x - p.b)
    return NetworkState(x=x_dot, lam=lam_dot)


def pi_rhs(p: ResourceProblem, lap: Laplacian, s: PiState, cfg: PiConfig) -> PiState:
    """Evaluate the proportional-integral baseline dynamics."""
    _check_graph(p, lap)
    l_lam = lap.apply(s.lam, p.n)
    x_dot = -total_gradient(p, s.x) - s.lam
    lam_dot = -cfg.k_p * l_lam - cfg.k_i * lap.apply(s.z, p.n) + s.x - p.b
    return PiState(x=x_dot, lam=lam_dot, z=l_lam)


def primal_dual_rhs(p: ResourceProblem, s: ReducedState, dual_gain: float = 1.0) -> ReducedState:
    """Evaluate the centralized primal-dual flow.

    With ``dual_gain = 1`` this is the textbook flow mu' = sum_i x_i - d. The
    quasi-steady-state model of the sub-optimal dynamics, with mu the mean
    multiplier, uses ``dual_gain = 1/N``.
    """
    if s.x.shape != (p.size,) or s.mu.shape != (p.n,):
        raise InvalidDimensionError("reduced state", (p.size, p.n), (s.x.shape, s.mu.shape))
    x_dot = -total_gradient(p, s.x) - _replicate(p, s.mu)
    mu_dot = dual_gain * (p.blocks(s.x).sum(axis=0) - p.d)
    return ReducedState(x=x_dot, mu=mu_dot)


def to_singular_coords(s: NetworkState, tr: ConsensusTransform) -> SingularState:
    """Map (x, lambda) to (x, mu, theta) with (mu, theta) = (T kron I) lambda."""
    n = _block_size(s.lam.size, tr)
    transformed = kron_apply(tr.t_fwd, s.lam, n)
    return SingularState(x=s.x.copy(), mu=transformed[:n], theta=transformed[n:])


def from_singular_coords(s: SingularState, tr: ConsensusTransform) -> NetworkState:
    """Map (x, mu, theta) back to (x, lambda) = (x, (T^-1 kron I)(mu, theta))."""
    n = s.mu.size
    if s.theta.size != n * (tr.n_nodes - 1):
        raise InvalidDimensionError("theta", n * (tr.n_nodes - 1), s.theta.size)
    lam = kron_apply(tr.t_inv, np.concatenate([s.mu, s.theta]), n)
    return NetworkState(x=s.x.copy(), lam=lam)


def _block_size(length: int, tr: ConsensusTransform) -> int:
    if length % tr.n_nodes:
        raise InvalidDimensionError("multiplier vector", f"a multiple of {tr.n_nodes}", length)
    return length // tr.n_nodes


def singular_rhs(
    p: ResourceProblem,
    lap: Laplacian,
    tr: ConsensusTransform,
    s: SingularState,
    eps: float,
) -> SingularState:
    """Evaluate the sub-optimal dynamics in (x, mu, theta) coordinates.

    Because L 1 = 0, lambda = 1 kron mu + (M2 kron I) theta gives
    L lambda = (L M2 kron I) theta, so

        x'     = -grad f(x) - 1 kron mu - (M2 kron I) theta
        mu'    = (1/N) [ sum_i x_i - d - (1/eps) (1^T L M2 kron I) theta ]
        theta' = -(1/eps) (M1^T L M2 kron I) theta + (M1^T kron I)(x - b)

    The mu' coupling to theta vanishes on weight-balanced graphs.
    """
    _check_eps(eps)
    _check_graph(p, lap)
    _check_transform(lap.n_nodes, tr)
    n = p.n
    lm2_theta = kron_apply(lap.matrix @ tr.m2, s.theta, n)
    x_dot = -total_gradient(p, s.x) - _replicate(p, s.mu) - kron_apply(tr.m2, s.theta, n)
    residual = p.blocks(s.x).sum(axis=0) - p.d
    mu_dot = (residual - p.blocks(lm2_theta).sum(axis=0) / eps) / p.n_agents
    theta_dot = (
        -kron_apply(tr.m1.T, lm2_theta, n) / eps
        + kron_apply(tr.m1.T, s.x - p.b, n)
    )
    return SingularState(x=x_dot, mu=mu_dot, theta=theta_dot)


class SuboptimalField(VectorFieldPort):
    """Sub-optimal dynamics on flat vectors [x, lambda]."""

    def __init__(self, problem: ResourceProblem, lap: Laplacian, eps: float):
        _check_eps(eps)
        _check_graph(problem, lap)
        self.problem = problem
        self.lap = lap
        self.eps = eps

    @property
    def dimension(self) -> int:
        return 2 * self.problem.size

    @property
    def stiffness_scale(self) -> float:
        return self.eps

    def decode(self, y: np.ndarray) -> NetworkState:
        """Split a flat vector into a NetworkState."""
        return NetworkState.from_vector(y, self.problem.size)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return suboptimal_rhs(self.problem, self.lap, self.decode(y), self.eps).to_vector()


class PiField(VectorFieldPort):
    """Proportional-integral baseline on flat vectors [x, lambda, z]."""

    def __init__(self, problem: ResourceProblem, lap: Laplacian, cfg: PiConfig):
        _check_graph(problem, lap)
        self.problem = problem
        self.lap = lap
        self.cfg = cfg

    @property
    def dimension(self) -> int:
        return 3 * self.problem.size

    def decode(self, y: np.ndarray) -> PiState:
        """Split a flat vector into a PiState."""
        return PiState.from_vector(y, self.problem.size)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return pi_rhs(self.problem, self.lap, self.decode(y), self.cfg).to_vector()


class PrimalDualField(VectorFieldPort):
    """Centralized primal-dual flow on flat vectors [x, mu]."""

    def __init__(self, problem: ResourceProblem, dual_gain: float = 1.0):
        if not dual_gain > 0:
            raise InvalidParameterError(f"dual gain must be positive, got {dual_gain}")
        self.problem = problem
        self.dual_gain = dual_gain

    @property
    def dimension(self) -> int:
        return self.problem.size + self.problem.n

    def decode(self, y: np.ndarray) -> ReducedState:
        """Split a flat vector into a ReducedState."""
        return ReducedState.from_vector(y, self.problem.size, self.problem.n)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        return primal_dual_rhs(self.problem, self.decode(y), self.dual_gain).to_vector()


class SingularField(VectorFieldPort):
    """Sub-optimal dynamics on flat vectors [x, mu, theta]."""

    def __init__(
        self,
        problem: ResourceProblem,
        lap: Laplacian,
        tr: ConsensusTransform,
        eps: float,
    ):
        _check_eps(eps)
        _check_graph(problem, lap)
        _check_transform(lap.n_nodes, tr)
        self.problem = problem
        self.lap = lap
        self.tr = tr
        self.eps = eps

    @property
    def dimension(self) -> int:
        return 2 * self.problem.size

    @property
    def stiffness_scale(self) -> float:
        return self.eps

    def decode(self, y: np.ndarray) -> SingularState:
        """Split a flat vector into a SingularState."""
        return SingularState.from_vector(y, self.problem.size, self.problem.n)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        state = self.decode(y)
        return singular_rhs(self.problem, self.lap, self.tr, state, self.eps).to_vector()
