"""
Stacked cost evaluation for the resource allocation problem.

The global cost is f(x) = sum_i f_i(x_i) over the stacked vector
x = col{x_1, ..., x_N}; its gradient is block-wise and its Hessian block
diagonal. Finite-difference checks guard user-supplied derivatives.
"""

import logging
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from core.domain.entities import ResourceProblem
from core.domain.exceptions import InvalidDimensionError, InvalidParameterError
from core.ports import CostFunctionPort

logger = logging.getLogger(__name__)


def _check_stacked(p: ResourceProblem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.size,):
        raise InvalidDimensionError("stacked allocation", p.size, x.shape)
    return x.reshape(p.n_agents, p.n)


def total_cost(p: ResourceProblem, x: np.ndarray) -> float:
    """Return sum_i f_i(x_i)."""
    blocks = _check_stacked(p, x)
    return float(sum(agent.cost.evaluate(xi) for agent, xi in zip(p.agents, blocks)))


def total_gradient(p: ResourceProblem, x: np.ndarray) -> np.ndarray:
    """Return the stacked gradient col{grad f_1(x_1), ..., grad f_N(x_N)}."""
    blocks = _check_stacked(p, x)
    return np.concatenate([agent.cost.grad(xi) for agent, xi in zip(p.agents, blocks)])


def total_hessian(p: ResourceProblem, x: np.ndarray) -> np.ndarray:
    """Return the block-diagonal Hessian of the stacked cost."""
    blocks = _check_stacked(p, x)
    return block_diag(*[agent.cost.hess(xi) for agent, xi in zip(p.agents, blocks)])


def check_gradient(f: CostFunctionPort, x: np.ndarray, h: float = 1e-5) -> float:
    """Compare the analytic gradient with central differences.

    Args:
        f: The cost function
        x: Evaluation point
        h: Difference step

    Returns:
        float: Largest absolute coordinate error
    """
    if not h > 0:
        raise InvalidParameterError(f"difference step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    analytic = f.grad(x)
    numeric = np.empty_like(x)
    for k, step in enumerate(np.eye(x.size) * h):
        numeric[k] = (f.evaluate(x + step) - f.evaluate(x - step)) / (2.0 * h)
    return float(np.max(np.abs(analytic - numeric)))


def check_hessian(f: CostFunctionPort, x: np.ndarray, h: float = 1e-5) -> float:
    """Compare the analytic Hessian with central differences of the gradient."""
    if not h > 0:
        raise InvalidParameterError(f"difference step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    numeric = np.column_stack([
        (f.grad(x + step) - f.grad(x - step)) / (2.0 * h)
        for step in np.eye(x.size) * h
    ])
    return float(np.max(np.abs(f.hess(x) - numeric)))


def estimate_strong_convexity(p: ResourceProblem, sample_points: Sequence[np.ndarray]) -> float:
    """Estimate the strong convexity modulus c0 of the stacked cost.

    The Hessian is block diagonal, so its smallest eigenvalue is the smallest
    over the agents' blocks. For quadratic costs the estimate is exact.

    Args:
        p: The problem
        sample_points: Stacked points at which the Hessian is evaluated

    Returns:
        float: Minimum over samples of the smallest Hessian eigenvalue
    """
    if len(sample_points) == 0:
        raise InvalidParameterError("at least one sample point is required")
    c0 = np.inf
    for point in sample_points:
        for agent, xi in zip(p.agents, _check_stacked(p, point)):
            c0 = min(c0, float(np.linalg.eigvalsh(agent.cost.hess(xi))[0]))
    logger.debug("Strong convexity estimate c0=%.6g over %d samples", c0, len(sample_points))
    return c0
