#!/usr/bin/env python3
# pylint: disable=too-many-arguments,too-many-locals,too-many-instance-attributes
"""
Experiment orchestration.

ExperimentRunner executes one CLI command against a validated config: it builds
the initial state, runs the solvers or integrators, writes the CSV and JSON
outputs through a ReportWriterPort and finishes every run with a manifest.

Example:
    runner = ExperimentRunner(config, ReportWriter("output"), config_echo=raw)
    summary = runner.run("solve")
"""

import logging
import time
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from alive_progress import alive_bar

from core.analysis import (
    constraint_residual_monitor,
    epsilon_sweep,
    fit_exponential_rate,
    lyapunov_monitor,
    theta_norm_monitor,
    trajectory_deviation,
)
from core.domain.entities import (
    ExperimentConfig,
    LyapunovSeries,
    NetworkState,
    PiState,
    ReducedState,
    RunManifest,
    Trajectory,
)
from core.domain.exceptions import AlreadyConvergedError, InsufficientSamplesError, InvalidParameterError
from core.domain.value_objects import Algorithm, EquilibriumMethod, InitialStateKind
from core.dynamics import PiField, PrimalDualField, SuboptimalField
from core.equilibrium import solve_equilibrium, solve_kkt, suboptimality_gap
from core.graph import build_consensus_transform, is_undirected, laplacian
from core.integrate import integrate
from core.ports import ReportWriterPort
from core.problem import total_cost
from core.verifier import AssumptionVerifier

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"

COMMANDS = ("check-graph", "solve", "equilibrium", "simulate", "sweep", "compare")


def _columns(prefix: str, count: int) -> List[str]:
    return [f"{prefix}_{k}" for k in range(1, count + 1)]


class ExperimentRunner:
    """Runs CLI commands for one experiment config.

    Attributes:
        config: The validated experiment config
        writer: Destination of every output file
        config_echo: Resolved config document recorded in the manifest
        seed: Seed for random initial states
        workers: Worker pool size for sweeps
        progress_bar: Show alive_progress bars
        quiet: Suppress console reports
    """

    def __init__(
        self,
        config: ExperimentConfig,
        writer: ReportWriterPort,
        config_echo: Optional[Dict[str, Any]] = None,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        progress_bar: bool = False,
        quiet: bool = True,
    ) -> None:
        logger.debug(
            "Initializing ExperimentRunner with writer=%s, seed=%s, workers=%s",
            writer.__class__.__name__, seed, workers
        )
        self.config = config
        self.writer = writer
        self.config_echo = config_echo or {}
        self.seed = seed
        self.workers = workers
        self.progress_bar = progress_bar
        self.quiet = quiet
        self.problem = config.problem
        self.lap = laplacian(config.graph)

    def run(self, command: str, **kwargs) -> Dict[str, Any]:
        """Execute a command, then write the run manifest.

        Args:
            command: One of COMMANDS
            **kwargs: Command-specific overrides (eps, method, eps_grid, eps_values)

        Returns:
            Dict[str, Any]: The command's result summary
        """
        if command not in COMMANDS:
            raise InvalidParameterError(f"unknown command {command!r}; expected one of {list(COMMANDS)}")
        handler = getattr(self, f"cmd_{command.replace('-', '_')}")
        logger.debug("Running command %s", command)
        started_at = datetime.now().isoformat(timespec="seconds")
        start_time = time.perf_counter()
        summary = handler(**kwargs)
        elapsed = time.perf_counter() - start_time
        manifest = RunManifest(
            command=command,
            tool_version=TOOL_VERSION,
            config=self.config_echo,
            started_at=started_at,
            wall_clock_seconds=elapsed,
            summary=summary,
        )
        self.writer.write_manifest(manifest)
        logger.debug("Command %s finished in %.3f s", command, elapsed)
        return summary

    def _require_eps(self, eps: Optional[float]) -> float:
        eps = self.config.eps if eps is None else eps
        if eps is None or not eps > 0:
            raise InvalidParameterError(f"a positive eps is required, got {eps}")
        return float(eps)

    def _initial_vectors(self) -> Dict[str, np.ndarray]:
        """Initial x, lambda, z and mu as described by the config."""
        p = self.problem
        spec = self.config.initial
        zeros = np.zeros(p.size)
        if spec.kind is InitialStateKind.ZEROS:
            vectors = {"x": zeros, "lam": zeros, "z": zeros}
        elif spec.kind is InitialStateKind.B_START:
            vectors = {"x": np.array(p.b), "lam": zeros, "z": zeros}
        elif spec.kind is InitialStateKind.RANDOM:
            rng = np.random.default_rng(self.seed)
            vectors = {
                "x": p.b + rng.standard_normal(p.size),
                "lam": rng.standard_normal(p.size),
                "z": rng.standard_normal(p.size),
                "mu": rng.standard_normal(p.n),
            }
        else:
            vectors = {
                key: zeros if values is None else np.array(values)
                for key, values in (("x", spec.x), ("lam", spec.lam), ("z", spec.z))
            }
            if spec.mu is not None:
                vectors["mu"] = np.array(spec.mu)
        if "mu" not in vectors:
            vectors["mu"] = p.blocks(vectors["lam"]).mean(axis=0)
        return {key: value.copy() for key, value in vectors.items()}

    def initial_network_state(self) -> NetworkState:
        """Initial (x, lambda) for the sub-optimal dynamics."""
        vectors = self._initial_vectors()
        return NetworkState(x=vectors["x"], lam=vectors["lam"])

    def cmd_check_graph(self) -> Dict[str, Any]:
        """Check strong connectivity and weight balance of the configured graph."""
        verifier = AssumptionVerifier(self.config.graph)
        results = verifier.verify()
        if not self.quiet:
            verifier.display_results(results)
        self.writer.write_json(self.config.output.report_json, results)
        return {
            "balanced": results["balanced"],
            "strongly_connected": results["strongly_connected"],
            "assumptions_hold": results["assumptions_hold"],
        }

    def cmd_solve(self) -> Dict[str, Any]:
        """Solve the optimality conditions of the allocation problem."""
        kkt = solve_kkt(self.problem)
        report = {**kkt.to_dict(), "objective": total_cost(self.problem, kkt.x_star)}
        self.writer.write_json(self.config.output.report_json, report)
        return {"x_star": kkt.x_star.tolist(), "mu_star": kkt.mu_star.tolist(), "residual": kkt.kkt_residual}

    def cmd_equilibrium(
        self,
        eps: Optional[float] = None,
        method: Optional[EquilibriumMethod] = None,
    ) -> Dict[str, Any]:
        """Solve the eps-equilibrium and compare it with the optimum."""
        eps = self._require_eps(eps)
        method = method or self.config.equilibrium_method
        kkt = solve_kkt(self.problem)
        eq = solve_equilibrium(self.problem, self.lap, eps, method, kkt=kkt)
        gap = suboptimality_gap(eq, kkt)
        residual = np.abs(self.problem.blocks(eq.x_bar).sum(axis=0) - self.problem.d)
        report = {
            "equilibrium": eq.to_dict(),
            "gap": gap.to_dict(),
            "kkt": kkt.to_dict(),
            "constraint_residual": float(residual.max()),
        }
        self.writer.write_json(self.config.output.report_json, report)
        return {
            "eps": eps,
            "method": eq.method.value,
            "iterations": eq.iterations,
            "x_bar": eq.x_bar.tolist(),
            "x_gap": gap.x_gap,
            "lambda_gap": gap.lambda_gap,
        }

    def _simulation_setup(self, eps: Optional[float]) -> Tuple[Any, np.ndarray, List[str], Dict[str, Any], Dict[str, Any]]:
        """Field, initial vector, state columns, monitors and report extras per algorithm."""
        p = self.problem
        vectors = self._initial_vectors()
        algorithm = self.config.algorithm
        residual_monitor = constraint_residual_monitor(p)
        if algorithm is Algorithm.SUBOPTIMAL:
            eps = self._require_eps(eps)
            eq = solve_equilibrium(p, self.lap, eps, self.config.equilibrium_method)
            monitors = {"V": lyapunov_monitor(eq.x_bar, eq.lambda_bar), "constraint_residual": residual_monitor}
            if p.n_agents >= 2:
                monitors["theta_norm"] = theta_norm_monitor(p, build_consensus_transform(p.n_agents))
            field = SuboptimalField(p, self.lap, eps)
            s0 = NetworkState(x=vectors["x"], lam=vectors["lam"]).to_vector()
            columns = _columns("x", p.size) + _columns("lambda", p.size)
            return field, s0, columns, monitors, {"eps": eps, "equilibrium": eq.to_dict()}

        kkt = solve_kkt(p)
        if algorithm is Algorithm.PI:
            if not is_undirected(self.config.graph):
                logger.warning("The PI baseline is only guaranteed to converge on undirected graphs")
            field = PiField(p, self.lap, self.config.pi)
            s0 = PiState(x=vectors["x"], lam=vectors["lam"], z=vectors["z"]).to_vector()
            columns = _columns("x", p.size) + _columns("lambda", p.size) + _columns("z", p.size)
            reference = lyapunov_monitor(kkt.x_star, kkt.lambda_star)
            extras = {"pi": {"k_p": self.config.pi.k_p, "k_i": self.config.pi.k_i}}
        else:
            field = PrimalDualField(p)
            s0 = ReducedState(x=vectors["x"], mu=vectors["mu"]).to_vector()
            columns = _columns("x", p.size) + _columns("mu", p.n)
            reference = lyapunov_monitor(kkt.x_star, kkt.mu_star)
            extras = {}
        monitors = {"V": reference, "constraint_residual": residual_monitor}
        return field, s0, columns, monitors, {**extras, "kkt": kkt.to_dict()}

    def cmd_simulate(self, eps: Optional[float] = None) -> Dict[str, Any]:
        """Integrate the configured dynamics and write the trajectory CSV."""
        field, s0, columns, monitors, extras = self._simulation_setup(eps)
        traj = integrate(field, s0, self.config.integrator, monitors)
        self._write_trajectory(self.config.output.trajectory_csv, traj, columns)

        values = traj.monitors["V"]
        increments = np.diff(values)
        series = LyapunovSeries(
            times=traj.times,
            values=values,
            max_uptick=float(max(0.0, increments.max())) if increments.size else 0.0,
        )
        try:
            rate_fit = fit_exponential_rate(series).to_dict()
        except (AlreadyConvergedError, InsufficientSamplesError) as exc:
            logger.warning("Exponential rate not fitted: %s", exc)
            rate_fit = None
        report = {
            "algorithm": self.config.algorithm.value,
            "t_end": float(traj.times[-1]),
            "samples": len(traj),
            "steps": traj.steps,
            "final_state": traj.final_state,
            "initial_V": float(values[0]),
            "final_V": float(values[-1]),
            "max_uptick": series.max_uptick,
            "final_constraint_residual": float(traj.monitors["constraint_residual"][-1]),
            "rate_fit": rate_fit,
            **extras,
        }
        self.writer.write_json(self.config.output.report_json, report)
        return {
            "algorithm": self.config.algorithm.value,
            "samples": len(traj),
            "final_V": float(values[-1]),
            "max_uptick": series.max_uptick,
        }

    def _write_trajectory(self, name: str, traj: Trajectory, columns: Sequence[str]) -> str:
        """Write t, the state columns, then the monitor columns; one row per sample."""
        header = ["t", *columns, *traj.monitors]
        monitor_values = list(traj.monitors.values())
        rows = (
            [t, *state, *(series[k] for series in monitor_values)]
            for k, (t, state) in enumerate(zip(traj.times, traj.states))
        )
        return self.writer.write_csv(name, header, rows)

    def cmd_sweep(
        self,
        eps_grid: Optional[Sequence[float]] = None,
        method: Optional[EquilibriumMethod] = None,
    ) -> Dict[str, Any]:
        """Sweep the equilibrium gap over a grid of eps values."""
        grid = eps_grid if eps_grid is not None else self.config.eps_grid
        if not grid:
            raise InvalidParameterError("the sweep needs a non-empty eps grid")
        report = epsilon_sweep(
            self.problem,
            self.lap,
            grid,
            method or self.config.equilibrium_method,
            workers=self.workers,
            progress_bar=self.progress_bar,
        )
        self.writer.write_json(self.config.output.report_json, report.to_dict())
        self.writer.write_csv(
            "sweep.csv",
            ["eps", "x_gap", "lambda_gap", "constraint_residual"],
            zip(report.eps_grid, report.x_gaps, report.lambda_gaps, report.constraint_residuals),
        )
        return {
            "loglog_slope": report.loglog_slope,
            "gamma1_hat": report.gamma1_hat,
            "gamma2_hat": report.gamma2_hat,
            "exact_case": report.exact_case,
            "failures": len(report.failures),
        }

    def cmd_compare(self, eps_values: Optional[Sequence[float]] = None) -> Dict[str, Any]:
        """Compare the full dynamics with the reduced model for one or more eps."""
        values = list(eps_values) if eps_values else [self._require_eps(None)]
        for eps in values:
            self._require_eps(eps)
        horizon = self.config.integrator.t_end
        p = self.problem
        transform = build_consensus_transform(p.n_agents)
        s0 = self.initial_network_state()
        full_columns = _columns("x", p.size) + _columns("mu", p.n) + _columns("theta", p.size - p.n)
        reduced_columns = _columns("x", p.size) + _columns("mu", p.n)

        def compare(eps: float):
            report = trajectory_deviation(
                p, self.lap, transform, eps, s0, horizon,
                boundary_cutoff=self.config.boundary_cutoff,
                opts=self.config.integrator,
            )
            self._write_trajectory(f"compare_full_eps_{eps:g}.csv", report.full, full_columns)
            self._write_trajectory(f"compare_reduced_eps_{eps:g}.csv", report.reduced, reduced_columns)
            return report

        reports = []
        if self.progress_bar:
            with alive_bar(
                len(values),
                title="Comparing models",
                bar="smooth",
                spinner="waves",
                enrich_print=False
            ) as progress:
                for eps in values:
                    progress.text(f"eps={eps:g}")
                    reports.append(compare(eps))
                    progress()
        else:
            reports = [compare(eps) for eps in values]

        ratios = [
            {
                "eps_pair": [a.eps, b.eps],
                "deviation_ratio": a.sup_x_mu_dev / b.sup_x_mu_dev if b.sup_x_mu_dev > 0 else None,
                "theta_tail_ratio": a.sup_theta_tail / b.sup_theta_tail if b.sup_theta_tail > 0 else None,
            }
            for a, b in zip(reports, reports[1:])
        ]
        payload = {"horizon": horizon, "deviations": [r.to_dict() for r in reports], "ratios": ratios}
        self.writer.write_json(self.config.output.report_json, payload)
        return {
            "deviations": [r.to_dict() for r in reports],
            "ratios": [entry["deviation_ratio"] for entry in ratios],
        }
