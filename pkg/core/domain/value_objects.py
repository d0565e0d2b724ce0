"""Value objects for the resource allocation toolkit.

This module contains value objects that represent immutable concepts in the domain.
These objects are used to ensure type safety and domain constraints.
"""

from dataclasses import dataclass
from enum import Enum

from core.domain.exceptions import InvalidParameterError


class Algorithm(str, Enum):
    """Represents the dynamics selected for a simulation."""
    SUBOPTIMAL = "suboptimal"
    PI = "pi"
    PRIMAL_DUAL = "primal-dual"


class IntegratorMethod(str, Enum):
    """Represents the ODE integration scheme."""
    FIXED_RK4 = "fixed-rk4"
    ADAPTIVE_RKF45 = "adaptive-rkf45"


class EquilibriumMethod(str, Enum):
    """Represents how an equilibrium was obtained."""
    NEWTON = "newton"
    PHI_ITERATION = "phi-iteration"
    CLOSED_FORM_QUADRATIC = "closed-form-quadratic"


class InitialStateKind(str, Enum):
    """Represents how the initial network state is built."""
    ZEROS = "zeros"
    B_START = "b-start"
    EXPLICIT = "explicit"
    RANDOM = "random"


@dataclass(frozen=True)
class PiConfig:
    """Gains of the proportional-integral baseline.

    Attributes:
        k_p: Proportional gain on the multiplier disagreement
        k_i: Integral gain on the auxiliary state disagreement
    """
    k_p: float = 1.0
    k_i: float = 1.0

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_i > 0):
            raise InvalidParameterError(
                f"PI gains must be positive, got k_p={self.k_p}, k_i={self.k_i}"
            )


@dataclass(frozen=True)
class IntegratorOptions:
    """Settings shared by both integration schemes.

    Attributes:
        method: Fixed-step RK4 or adaptive RKF45
        h: Fixed step, or initial step for the adaptive scheme
        rel_tol: Relative local error tolerance (adaptive only)
        abs_tol: Absolute local error tolerance (adaptive only)
        max_step: Upper bound on any step
        t_end: Integration horizon; 0 yields the initial sample only
        record_every: Store every k-th accepted step (the final state is always stored)
        step_ratio: Fraction of a field's stiffness scale allowed as step (eta)
    """
    method: IntegratorMethod = IntegratorMethod.ADAPTIVE_RKF45
    h: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.1
    t_end: float = 10.0
    record_every: int = 1
    step_ratio: float = 0.5

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidParameterError(f"step h must be positive, got {self.h}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise InvalidParameterError("integrator tolerances must be positive")
        if not self.max_step > 0:
            raise InvalidParameterError(f"max_step must be positive, got {self.max_step}")
        if not self.t_end >= 0:
            raise InvalidParameterError(f"t_end must be non-negative, got {self.t_end}")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be at least 1")
        if not 0 < self.step_ratio <= 1:
            raise InvalidParameterError("step_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class ConvergenceCriterion:
    """Stopping rule for integrate_until_converged.

    Attributes:
        state_tol: Stop once the vector field norm drops below this value
        t_max: Hard cap on integration time
    """
    state_tol: float = 1e-8
    t_max: float = 1000.0

    def __post_init__(self):
        if not self.state_tol > 0:
            raise InvalidParameterError("state_tol must be positive")
        if not self.t_max > 0:
            raise InvalidParameterError("t_max must be positive")
