# pylint: disable=too-many-arguments,too-many-instance-attributes
"""
ODE integration engines.

Classical fixed-step RK4 and the adaptive Runge-Kutta-Fehlberg 4(5) pair with a
PI step-size controller. Both schemes share one stepper that lands exactly on
requested times, caps steps at ``max_step`` and, for fields declaring a
stiffness scale eps, at ``step_ratio * eps``. Monitors are evaluated on the
stored samples, never on interpolated values.

Example:
    opts = IntegratorOptions(t_end=5.0)
    traj = integrate(lambda t, y: -y, np.array([1.0]), opts)
"""

import logging
import math
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.domain.entities import Trajectory
from core.domain.exceptions import InvalidParameterError, NumericalBlowupError, StiffnessError
from core.domain.value_objects import ConvergenceCriterion, IntegratorMethod, IntegratorOptions

logger = logging.getLogger(__name__)

Field = Callable[[float, np.ndarray], np.ndarray]
Monitor = Callable[[np.ndarray], float]

BLOWUP_THRESHOLD = 1e100
MIN_STEP = 1e-14

# Fehlberg tableau
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_ERR = (1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55)

# PI controller
_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _check_state(y: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(y)):
        raise NumericalBlowupError(t, "non-finite values")
    if y.size and np.max(np.abs(y)) > BLOWUP_THRESHOLD:
        raise NumericalBlowupError(t, f"|state| exceeded {BLOWUP_THRESHOLD:g}")


def rk4_step(rhs: Field, s: np.ndarray, t: float, h: float) -> np.ndarray:
    """Advance one classical fourth-order Runge-Kutta step.

    Args:
        rhs: Vector field F(t, y)
        s: State at time t
        t: Current time
        h: Step size, > 0

    Returns:
        np.ndarray: State at t + h

    Raises:
        NumericalBlowupError: If the new state is non-finite or beyond BLOWUP_THRESHOLD.
    """
    if not h > 0:
        raise InvalidParameterError(f"step size must be positive, got {h}")
    k1 = rhs(t, s)
    k2 = rhs(t + h / 2, s + h / 2 * k1)
    k3 = rhs(t + h / 2, s + h / 2 * k2)
    k4 = rhs(t + h, s + h * k3)
    y = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    _check_state(y, t + h)
    return y


def rkf45_step(rhs: Field, s: np.ndarray, t: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Advance one Fehlberg step, propagating the fifth-order solution.

    Returns:
        Tuple[np.ndarray, np.ndarray]: New state and local error estimate
    """
    stages: List[np.ndarray] = []
    for c, row in zip(_C, _A):
        increment = sum((a * k for a, k in zip(row, stages)), np.zeros_like(s))
        stages.append(rhs(t + c * h, s + h * increment))
    y = s + h * sum(b * k for b, k in zip(_B5, stages))
    err = h * sum(e * k for e, k in zip(_ERR, stages))
    return y, err


def step_cap(rhs, opts: IntegratorOptions) -> float:
    """Largest admissible step for a field: max_step, and step_ratio * eps if declared."""
    cap = opts.max_step
    scale = getattr(rhs, "stiffness_scale", None)
    if scale is not None:
        cap = min(cap, opts.step_ratio * scale)
    return cap


class _Stepper:
    """Shared stepping state for both schemes."""

    def __init__(self, rhs: Field, s0: np.ndarray, opts: IntegratorOptions):
        self.rhs = rhs
        self.opts = opts
        self.t = 0.0
        self.y = np.array(s0, dtype=float)
        _check_state(self.y, 0.0)
        self.cap = step_cap(rhs, opts)
        self.h = min(opts.h, self.cap)
        self.err_prev = 1.0
        self.steps = 0
        logger.debug("Stepper %s with step cap %.3g", opts.method.value, self.cap)

    def advance_to(self, target: float) -> Iterator[Tuple[float, np.ndarray]]:
        """Yield (t, y) after each accepted step until exactly ``target``."""
        if self.opts.method is IntegratorMethod.FIXED_RK4:
            yield from self._fixed(target)
        else:
            yield from self._adaptive(target)

    def _fixed(self, target: float) -> Iterator[Tuple[float, np.ndarray]]:
        span = target - self.t
        if span <= 0:
            return
        count = max(1, math.ceil(span / self.h - 1e-9))
        h = span / count
        start = self.t
        for k in range(1, count + 1):
            self.y = rk4_step(self.rhs, self.y, self.t, h)
            self.t = target if k == count else start + k * h
            self.steps += 1
            yield self.t, self.y

    def _adaptive(self, target: float) -> Iterator[Tuple[float, np.ndarray]]:
        opts = self.opts
        while self.t < target:
            h_try = min(self.h, self.cap, target - self.t)
            landing = h_try >= target - self.t
            y_new, err = rkf45_step(self.rhs, self.y, self.t, h_try)
            if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(err))):
                logger.error("Non-finite stage values at t=%.6g", self.t)
                raise NumericalBlowupError(self.t, "non-finite values")
            scale =opts.abs_tol + opts.rel_tol * np.maximum(np.abs(self.y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2))) if err.size else 0.0
            if math.isfinite(err_norm) and err_norm <= 1.0:
                self.t = target if landing else self.t + h_try
                self.y = y_new
                _check_state(self.y, self.t)
                factor = _SAFETY * max(err_norm, 1e-10) ** -_ALPHA * self.err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                self.err_prev = max(err_norm, 1e-4)
                h_next = h_try * factor
                self.h = max(h_next, min(self.h, self.cap)) if landing else h_next
                self.steps += 1
                yield self.t, self.y
            else:
                shrink = _SAFETY * err_norm ** -0.2 if math.isfinite(err_norm) else _MIN_FACTOR
                self.h = h_try * max(_MIN_FACTOR, shrink)
                if self.h < MIN_STEP:
                    logger.error("Adaptive step underflow at t=%.6g", self.t)
                    raise StiffnessError(self.t, self.h)


class _Recorder:
    """Collects samples and evaluates monitors on the stored states."""

    def __init__(self, monitors: Optional[Dict[str, Monitor]]):
        self.monitors = dict(monitors or {})
        self.times: List[float] = []
        self.states: List[np.ndarray] = []
        self.series: Dict[str, List[float]] = {name: [] for name in self.monitors}

    def add(self, t: float, y: np.ndarray) -> None:
        """Store a copy of y and its monitor values."""
        stored = np.array(y, dtype=float)
        self.times.append(t)
        self.states.append(stored)
        for name, monitor in self.monitors.items():
            self.series[name].append(float(monitor(stored)))

    def build(self, **kwargs) -> Trajectory:
        """Assemble the Trajectory."""
        return Trajectory(
            times=np.array(self.times),
            states=np.vstack(self.states),
            monitors={name: np.array(values) for name, values in self.series.items()},
            **kwargs,
        )


def integrate(
    rhs: Field,
    s0: np.ndarray,
    opts: IntegratorOptions,
    monitors: Optional[Dict[str, Monitor]] = None,
) -> Trajectory:
    """Integrate from t = 0 to ``opts.t_end``.

    Args:
        rhs: Vector field F(t, y); a ``stiffness_scale`` attribute caps the step
        s0: Initial state
        opts: Integrator settings
        monitors: Named scalar functions of the state, sampled with the states

    Returns:
        Trajectory: Samples every ``record_every`` accepted steps plus t_end
    """
    stepper = _Stepper(rhs, s0, opts)
    recorder = _Recorder(monitors)
    recorder.add(0.0, stepper.y)
    for index, (t, y) in enumerate(stepper.advance_to(opts.t_end), 1):
        if index % opts.record_every == 0 or t >= opts.t_end:
            recorder.add(t, y)
    logger.debug("Integrated to t=%.6g in %d steps", opts.t_end, stepper.steps)
    return recorder.build(steps=stepper.steps, stop_reason="horizon")


def integrate_until_converged(
    rhs: Field,
    s0: np.ndarray,
    crit: ConvergenceCriterion,
    opts: IntegratorOptions,
    monitors: Optional[Dict[str, Monitor]] = None,
) -> Trajectory:
    """Integrate until |F(y)| < ``crit.state_tol`` or t reaches ``crit.t_max``.

    The returned trajectory is flagged ``converged`` with ``stop_reason`` set to
    "converged" or "t_max".
    """
    stepper = _Stepper(rhs, s0, opts)
    recorder = _Recorder(monitors)
    recorder.add(0.0, stepper.y)
    if np.linalg.norm(rhs(0.0, stepper.y)) < crit.state_tol:
        return recorder.build(converged=True, stop_reason="converged", steps=0)
    for index, (t, y) in enumerate(stepper.advance_to(crit.t_max), 1):
        done = np.linalg.norm(rhs(t, y)) < crit.state_tol
        if done or index % opts.record_every == 0 or t >= crit.t_max:
            recorder.add(t, y)
        if done:
            logger.debug("Converged at t=%.6g after %d steps", t, stepper.steps)
            return recorder.build(converged=True, stop_reason="converged", steps=stepper.steps)
    logger.warning("No convergence before t_max=%g", crit.t_max)
    return recorder.build(converged=False, stop_reason="t_max", steps=stepper.steps)


def integrate_to_times(
    rhs: Field,
    s0: np.ndarray,
    times: Sequence[float],
    opts: IntegratorOptions,
    monitors: Optional[Dict[str, Monitor]] = None,
) -> Trajectory:
    """Integrate and record exactly at the given strictly increasing times (from t >= 0)."""
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InvalidParameterError("sample times must be non-negative and strictly increasing")
    stepper = _Stepper(rhs, s0, opts)
    recorder = _Recorder(monitors)
    for target in times:
        for _ in stepper.advance_to(target):
            pass
        recorder.add(float(target), stepper.y)
    return recorder.build(steps=stepper.steps, stop_reason="horizon")
