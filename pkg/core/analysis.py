# pylint: disable=too-many-arguments,too-many-locals
"""
Convergence and sub-optimality analysis.

Lyapunov traces and exponential-rate fits along simulated trajectories,
sweeps of the equilibrium gap over eps, and the distance between the full
dynamics and the reduced primal-dual model.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from alive_progress import alive_bar
from scipy.stats import linregress

from core.domain.entities import (
    ConsensusTransform,
    DeviationReport,
    Equilibrium,
    KktSolution,
    Laplacian,
    LyapunovSeries,
    NetworkState,
    RateFit,
    ReducedState,
    ResourceProblem,
    SweepReport,
    Trajectory,
)
from core.domain.exceptions import (
    AlreadyConvergedError,
    InsufficientSamplesError,
    InvalidDimensionError,
    InvalidParameterError,
    NumericalError,
)
from core.domain.value_objects import EquilibriumMethod, IntegratorOptions
from core.dynamics import PrimalDualField, SingularField, to_singular_coords
from core.equilibrium import solve_equilibrium, solve_kkt, suboptimality_gap
from core.graph import kron_apply, require_assumptions
from core.integrate import integrate, integrate_to_times

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-14
MIN_FIT_SAMPLES = 10
MIN_SWEEP_POINTS = 3
EXACT_GAP = 1e-9

Monitor = Callable[[np.ndarray], float]


def lyapunov_monitor(x_ref: np.ndarray, lam_ref: np.ndarray) -> Monitor:
    """V(y) = |x - x_ref|^2 + |lambda - lam_ref|^2 on the leading entries of y.

    Works for [x, lambda], [x, lambda, z] and [x, mu] vectors alike.
    """
    reference = np.concatenate([x_ref, lam_ref])
    width = reference.size

    def monitor(y: np.ndarray) -> float:
        return float(np.sum((y[:width] - reference) ** 2))

    return monitor


def constraint_residual_monitor(p: ResourceProblem) -> Monitor:
    """|sum_i x_i - d| of the allocation at the head of the state."""
    def monitor(y: np.ndarray) -> float:
        return float(np.linalg.norm(p.blocks(y[:p.size]).sum(axis=0) - p.d))

    return monitor


def theta_norm_monitor(p: ResourceProblem, tr: ConsensusTransform) -> Monitor:
    """|theta| with theta = (M1^T kron I) lambda, for [x, lambda, ...] states."""
    def monitor(y: np.ndarray) -> float:
        return float(np.linalg.norm(kron_apply(tr.m1.T, y[p.size:2 * p.size], p.n)))

    return monitor


def lyapunov_trace(traj: Trajectory, eq: Equilibrium) -> LyapunovSeries:
    """Evaluate V(t) = |x - x_bar|^2 + |lambda - lambda_bar|^2 at every sample.

    Args:
        traj: Trajectory of the sub-optimal dynamics ([x, lambda] rows)
        eq: The equilibrium for the same eps

    Returns:
        LyapunovSeries: Values and the largest positive increment
    """
    reference = np.concatenate([eq.x_bar, eq.lambda_bar])
    if traj.states.shape[1] != reference.size:
        raise InvalidDimensionError("trajectory state", reference.size, traj.states.shape[1])
    values = np.sum((traj.states - reference) ** 2, axis=1)
    increments = np.diff(values)
    max_uptick = float(max(0.0, increments.max())) if increments.size else 0.0
    return LyapunovSeries(times=traj.times.copy(), values=values, max_uptick=max_uptick)


def fit_exponential_rate(series: LyapunovSeries, window_fraction: float = 0.5) -> RateFit:
    """Fit ln V(t) = a + rate * t on the trailing part of the usable samples.

    Samples with V <= LOG_FLOOR are excluded before the window is taken.

    Args:
        series: The Lyapunov series
        window_fraction: Trailing fraction of usable samples to fit, in (0, 1]

    Returns:
        RateFit: Slope, R^2 and window

    Raises:
        AlreadyConvergedError: If no sample lies above the floor.
        InsufficientSamplesError: If the window holds fewer than 10 samples.
    """
    if not 0 < window_fraction <= 1:
        raise InvalidParameterError(f"window_fraction must lie in (0, 1], got {window_fraction}")
    usable = np.nonzero(series.values > LOG_FLOOR)[0]
    if usable.size == 0:
        raise AlreadyConvergedError(f"every sample of V is below {LOG_FLOOR:g}")
    selected = usable[-math.ceil(window_fraction * usable.size):]
    if selected.size < MIN_FIT_SAMPLES:
        raise InsufficientSamplesError(
            f"fit window holds {selected.size} samples above {LOG_FLOOR:g}, need {MIN_FIT_SAMPLES}"
        )
    times = series.times[selected]
    fit = linregress(times, np.log(series.values[selected]))
    r_squared = float(fit.rvalue ** 2) if np.isfinite(fit.rvalue) else 0.0
    rate = float(fit.slope)
    return RateFit(
        rate=rate,
        r_squared=min(1.0, max(0.0, r_squared)),
        window=(float(times[0]), float(times[-1])),
        samples=int(selected.size),
        converging=rate < -1e-12,
    )


def _loglog_slope(eps: Sequence[float], gaps: Sequence[float]) -> Optional[float]:
    points = [(e, g) for e, g in zip(eps, gaps) if np.isfinite(g) and g > 0]
    if len(points) < 2:
        return None
    log_eps, log_gap = np.log(np.array(points)).T
    return float(linregress(log_eps, log_gap).slope)


def epsilon_sweep(
    p: ResourceProblem,
    lap: Laplacian,
    eps_grid: Sequence[float],
    method: EquilibriumMethod = EquilibriumMethod.NEWTON,
    workers: Optional[int] = None,
    progress_bar: bool = False,
    kkt: Optional[KktSolution] = None,
) -> SweepReport:
    """Solve the equilibrium over a decreasing eps grid and measure the gaps.

    Grid points are solved concurrently. A numerical failure at one eps is
    recorded in ``failures`` with NaN gaps instead of aborting the sweep.

    Args:
        p: The problem
        lap: Laplacian of a balanced, strongly connected graph
        eps_grid: Strictly decreasing positive values, at least three
        method: Equilibrium solver
        workers: Thread pool size (default: available parallelism)
        progress_bar: Show an alive_progress bar
        kkt: Precomputed KKT solution

    Returns:
        SweepReport: Gaps, constraint residuals, log-log slopes and gamma estimates
    """
    grid = [float(e) for e in eps_grid]
    if len(grid) < MIN_SWEEP_POINTS:
        raise InvalidParameterError(f"an eps sweep needs at least {MIN_SWEEP_POINTS} values, got {len(grid)}")
    if any(e <= 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError("eps grid must be positive and strictly decreasing")
    if workers is not None and workers < 1:
        raise InvalidParameterError(f"workers must be at least 1, got {workers}")
    require_assumptions(lap)
    kkt = kkt or solve_kkt(p)

    def solve_point(eps: float):
        try:
            eq = solve_equilibrium(p, lap, eps, method, kkt=kkt)
        except NumericalError as exc:
            logger.warning("Sweep point eps=%g failed: %s", eps, exc)
            return exc
        gap = suboptimality_gap(eq, kkt)
        residual = float(np.max(np.abs(p.blocks(eq.x_bar).sum(axis=0) - p.d)))
        return gap.x_gap, gap.lambda_gap, residual

    results: List = []
    with ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1) as pool:
        if progress_bar:
            with alive_bar(
                len(grid),
                title="Sweeping eps",
                bar="smooth",
                spinner="waves",
                enrich_print=False
            ) as progress:
                for eps, result in zip(grid, pool.map(solve_point, grid)):
                    progress.text(f"eps={eps:g}")
                    results.append(result)
                    progress()
        else:
            results = list(pool.map(solve_point, grid))

    x_gaps, lambda_gaps, residuals = [], [], []
    failures: Dict[str, str] = {}
    for eps, result in zip(grid, results):
        if isinstance(result, Exception):
            failures[f"{eps:g}"] = str(result)
            result = (math.nan, math.nan, math.nan)
        x_gaps.append(result[0])
        lambda_gaps.append(result[1])
        residuals.append(result[2])

    solved = [(e, g, lg) for e, g, lg in zip(grid, x_gaps, lambda_gaps) if np.isfinite(g)]
    exact = bool(solved) and all(g < EXACT_GAP for _, g, _ in solved)
    gamma1 = max((g / e for e, g, _ in solved), default=None)
    gamma2 = max((lg / e for e, _, lg in solved), default=None)
    if exact:
        logger.debug("All gaps below %g: exact case, slope fit skipped", EXACT_GAP)
    return SweepReport(
        eps_grid=grid,
        x_gaps=x_gaps,
        lambda_gaps=lambda_gaps,
        constraint_residuals=residuals,
        loglog_slope=None if exact else _loglog_slope(grid, x_gaps),
        lambda_loglog_slope=None if exact else _loglog_slope(grid, lambda_gaps),
        gamma1_hat=gamma1,
        gamma2_hat=gamma2,
        exact_case=exact,
        failures=failures,
    )


def trajectory_deviation(
    p: ResourceProblem,
    lap: Laplacian,
    tr: ConsensusTransform,
    eps: float,
    s0: NetworkState,
    horizon: float,
    boundary_cutoff: Optional[float] = None,
    opts: Optional[IntegratorOptions] = None,
) -> DeviationReport:
    """Measure how closely the full dynamics track the reduced primal-dual model.

    The reduced model starts from (x(0), mu(0)) with mu(0) the mean of lambda(0)
    and uses dual gain 1/N, its exact quasi-steady-state form under the mean
    transform. It is integrated on its own adaptive grid; the full dynamics in
    (x, mu, theta) coordinates are then integrated onto the same times.

    Args:
        p: The problem
        lap: Laplacian of a balanced, strongly connected graph
        tr: Consensus transform for N nodes
        eps: Time-scale parameter
        s0: Initial (x, lambda)
        horizon: Final time T > 0
        boundary_cutoff: Start t_b of the theta tail (default 20 eps)
        opts: Integrator settings (t_end is replaced by ``horizon``)

    Returns:
        DeviationReport: sup |(x, mu) - (x~, mu~)| over [0, T] and sup |theta| over [t_b, T]
    """
    if not horizon > 0:
        raise InvalidParameterError(f"horizon must be positive, got {horizon}")
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    cutoff = 20.0 * eps if boundary_cutoff is None else float(boundary_cutoff)
    if not 0 <= cutoff <= horizon:
        raise InvalidParameterError(f"boundary cutoff {cutoff} must lie in [0, {horizon}]")
    require_assumptions(lap)
    opts = replace(opts or IntegratorOptions(), t_end=horizon)

    initial = to_singular_coords(s0, tr)
    reduced_field = PrimalDualField(p, dual_gain=1.0 / p.n_agents)
    reduced = integrate(reduced_field, ReducedState(x=initial.x, mu=initial.mu).to_vector(), opts)
    full = integrate_to_times(SingularField(p, lap, tr, eps), initial.to_vector(), reduced.times, opts)

    slow = p.size + p.n
    sup_dev = float(np.max(np.linalg.norm(full.states[:, :slow] - reduced.states, axis=1)))
    tail = full.times >= cutoff
    theta_norms = np.linalg.norm(full.states[:, slow:], axis=1)
    sup_theta = float(np.max(theta_norms[tail])) if np.any(tail) else 0.0
    logger.debug("Deviation at eps=%g: sup (x, mu) %.3e, theta tail %.3e", eps, sup_dev, sup_theta)
    return DeviationReport(
        eps=eps,
        sup_x_mu_dev=sup_dev,
        sup_theta_tail=sup_theta,
        boundary_cutoff=cutoff,
        full=full,
        reduced=reduced,
    )
