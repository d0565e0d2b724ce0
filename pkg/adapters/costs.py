# pylint: disable=too-few-public-methods
"""
Local cost function implementations.

Provides concrete implementations of CostFunctionPort: the quadratic family
f(x) = 1/2 x^T Q x + r^T x + c and two strongly convex non-quadratic families
built on top of it. ``cost_from_config`` builds a cost from its config fragment.
"""

import logging
from typing import Any, Callable, Dict

import numpy as np

from core.domain.exceptions import ConfigValidationError, InvalidDimensionError, InvalidParameterError
from core.ports import CostFunctionPort

logger = logging.getLogger(__name__)


class QuadraticCost(CostFunctionPort):
    """Quadratic cost f(x) = 1/2 x^T Q x + r^T x + c with Q symmetric positive definite."""

    def __init__(self, q, r=None, c: float = 0.0):
        """Initialize the QuadraticCost.

        Args:
            q: n x n symmetric positive definite matrix
            r: Linear term (defaults to zero)
            c: Constant offset
        """
        q = np.atleast_2d(np.array(q, dtype=float))
        n = q.shape[0]
        if q.shape != (n, n):
            raise InvalidDimensionError("quadratic term q", (n, n), q.shape)
        if not np.allclose(q, q.T, rtol=0.0, atol=1e-12):
            raise InvalidParameterError("quadratic term q must be symmetric")
        q = 0.5 * (q + q.T)
        if np.linalg.eigvalsh(q)[0] <= 0:
            raise InvalidParameterError("quadratic term q must be positive definite")
        r = np.zeros(n) if r is None else np.array(r, dtype=float).reshape(-1)
        if r.shape != (n,):
            raise InvalidDimensionError("linear term r", n, r.shape)
        self.q = q
        self.r = r
        self.c = float(c)
        self.q.setflags(write=False)
        self.r.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.q.shape[0]

    @property
    def is_quadratic(self) -> bool:
        return True

    def evaluate(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.q @ x + self.r @ x + self.c)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.q @ x + self.r

    def hess(self, x: np.ndarray) -> np.ndarray:
        return self.q.copy()

    def to_config(self) -> Dict[str, Any]:
        return {"type": "quadratic", "q": self.q.tolist(), "r": self.r.tolist(), "c": self.c}


class QuarticCost(QuadraticCost):
    """Quadratic cost plus alpha * sum_k x_k^4 (gradient not globally Lipschitz)."""

    def __init__(self, q, r=None, c: float = 0.0, alpha: float = 0.1):
        super().__init__(q, r, c)
        if alpha < 0:
            raise InvalidParameterError(f"quartic weight alpha must be non-negative, got {alpha}")
        self.alpha = float(alpha)

    @property
    def is_quadratic(self) -> bool:
        return self.alpha == 0.0

    def evaluate(self, x: np.ndarray) -> float:
        return super().evaluate(x) + self.alpha * float(np.sum(x ** 4))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return super().grad(x) + 4.0 * self.alpha * x ** 3

    def hess(self, x: np.ndarray) -> np.ndarray:
        return super().hess(x) + np.diag(12.0 * self.alpha * x ** 2)

    def to_config(self) -> Dict[str, Any]:
        return {**super().to_config(), "type": "quartic", "alpha": self.alpha}


class ExponentialCost(QuadraticCost):
    """Quadratic cost plus sum_k w_k exp(x_k), a smooth convex penalty on high allocations."""

    def __init__(self, q, r=None, c: float = 0.0, w=None):
        super().__init__(q, r, c)
        w = np.ones(self.dimension) if w is None else np.array(w, dtype=float).reshape(-1)
        if w.shape != (self.dimension,):
            raise InvalidDimensionError("exponential weights w", self.dimension, w.shape)
        if np.any(w < 0):
            raise InvalidParameterError("exponential weights w must be non-negative")
        self.w = w
        self.w.setflags(write=False)

    @property
    def is_quadratic(self) -> bool:
        return not np.any(self.w)

    def evaluate(self, x: np.ndarray) -> float:
        return super().evaluate(x) + float(self.w @ np.exp(x))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return super().grad(x) + self.w * np.exp(x)

    def hess(self, x: np.ndarray) -> np.ndarray:
        return super().hess(x) + np.diag(self.w * np.exp(x))

    def to_config(self) -> Dict[str, Any]:
        return {**super().to_config(), "type": "exponential", "w": self.w.tolist()}


_COST_BUILDERS: Dict[str, Callable[..., CostFunctionPort]] = {
    "quadratic": QuadraticCost,
    "quartic": QuarticCost,
    "exponential": ExponentialCost,
}

_COST_KEYS = {
    "quadratic": {"type", "q", "r", "c"},
    "quartic": {"type", "q", "r", "c", "alpha"},
    "exponential": {"type", "q", "r", "c", "w"},
}


def cost_from_config(fragment: Dict[str, Any], path: str = "cost") -> CostFunctionPort:
    """Build a cost function from its config fragment.

    Args:
        fragment: Mapping such as {"type": "quadratic", "q": [[1.0]], "r": [0.0], "c": 0.0}
        path: Location of the fragment, used in error messages

    Returns:
        CostFunctionPort: The cost

    Raises:
        ConfigValidationError: On unknown types, unknown keys or invalid values.
    """
    if not isinstance(fragment, dict):
        raise ConfigValidationError("expected an object", path)
    cost_type = fragment.get("type")
    if cost_type not in _COST_BUILDERS:
        raise ConfigValidationError(
            f"unknown cost type {cost_type!r}; expected one of {sorted(_COST_BUILDERS)}",
            f"{path}.type",
        )
    unknown = set(fragment) - _COST_KEYS[cost_type]
    if unknown:
        raise ConfigValidationError(f"unknown keys {sorted(unknown)}", path)
    if "q" not in fragment:
        raise ConfigValidationError("missing required key 'q'", path)
    kwargs = {key: value for key, value in fragment.items() if key != "type"}
    try:
        return _COST_BUILDERS[cost_type](**kwargs)
    except (InvalidParameterError, InvalidDimensionError, ValueError, TypeError) as exc:
        raise ConfigValidationError(str(exc), path) from exc
