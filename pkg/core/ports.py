"""
Port interfaces for the resource allocation toolkit.

Defines abstract base classes for local cost functions, vector fields consumed
by the integrators, and report writers.
"""

import logging
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Any, Dict, Iterable, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from core.domain.entities import RunManifest


logger = logging.getLogger(__name__)


class CostFunctionPort(ABC):
    """Abstract base class for a twice differentiable local cost f_i.

    Implementations must be reentrant: evaluation never mutates the instance.
    """

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Decision dimension n of the cost."""

    @property
    def is_quadratic(self) -> bool:
        """Whether the cost is exactly quadratic (constant Hessian)."""
        return False

    @abstractmethod
    def evaluate(self, x: np.ndarray) -> float:
        """Evaluate f(x).

        Args:
            x (np.ndarray): Point of length n.

        Returns:
            float: The cost value.
        """
        # Abstract method, do not implement

    @abstractmethod
    def grad(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the gradient of f at x."""
        # Abstract method, do not implement

    @abstractmethod
    def hess(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the (symmetric) Hessian of f at x."""
        # Abstract method, do not implement

    @abstractmethod
    def to_config(self) -> Dict[str, Any]:
        """Serialize the cost back into its config fragment."""
        # Abstract method, do not implement


class VectorFieldPort(ABC):
    """Abstract base class for an autonomous ODE right-hand side y' = F(y)."""

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Length of the integrator vector."""

    @property
    def stiffness_scale(self) -> Optional[float]:
        """Fast time constant of the field, used to cap explicit steps."""
        return None

    @abstractmethod
    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        """Evaluate the field.

        Args:
            t (float): Time (unused by autonomous fields, kept for the integrator).
            y (np.ndarray): Integrator vector.

        Returns:
            np.ndarray: dy/dt.
        """
        # Abstract method, do not implement


class ReportWriterPort(ABC):
    """Abstract base class for writing run outputs."""

    @abstractmethod
    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
        """Write a CSV table and return its path."""
        # Abstract method, do not implement

    @abstractmethod
    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        """Write a JSON document and return its path."""
        # Abstract method, do not implement

    @abstractmethod
    def write_manifest(self, manifest: "RunManifest") -> str:
        """Hash every file written so far into the manifest and write manifest.json."""
        # Abstract method, do not implement
