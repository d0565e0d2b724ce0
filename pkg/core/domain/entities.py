# pylint: disable=too-many-instance-attributes
"""Domain entities for the resource allocation toolkit.

This module contains the core domain entities: the communication graph, the
allocation problem, the network states of the three dynamics, trajectories,
equilibria and the analysis reports. Vectors are numpy arrays stacked agent by
agent, i.e. x = col{x_1, ..., x_N} with block i at entries [i*n, (i+1)*n).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.domain.exceptions import InvalidDimensionError, InvalidParameterError
from core.domain.value_objects import (
    Algorithm,
    EquilibriumMethod,
    InitialStateKind,
    IntegratorOptions,
    PiConfig,
)
from core.ports import CostFunctionPort


def _frozen_array(values, what: str, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise InvalidDimensionError(what, f"{ndim}-d array", f"{array.ndim}-d array")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Weighted directed graph given by its adjacency matrix.

    Attributes:
        n_nodes: Number of agents N
        weights: N x N matrix, weights[i, j] > 0 iff agent j sends to agent i
    """
    n_nodes: int
    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights, "adjacency matrix", 2)
        if self.n_nodes < 1:
            raise InvalidParameterError("a graph needs at least one node")
        if weights.shape != (self.n_nodes, self.n_nodes):
            raise InvalidDimensionError(
                "adjacency matrix", (self.n_nodes, self.n_nodes), weights.shape
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InvalidParameterError("edge weights must be finite and non-negative")
        if np.any(np.diag(weights) != 0):
            raise InvalidParameterError("self loops are not allowed (a_ii must be 0)")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "WeightedDigraph":
        """Build a graph from 1-indexed ``(from, to, weight)`` triples.

        Args:
            n_nodes: Number of nodes
            edges: Iterable of (from, to, weight); information flows from -> to

        Returns:
            WeightedDigraph: The graph with a[to, from] = weight
        """
        weights = np.zeros((n_nodes, n_nodes))
        for source, target, weight in edges:
            if not (1 <= source <= n_nodes and 1 <= target <= n_nodes):
                raise InvalidParameterError(
                    f"edge ({source}, {target}) references a node outside 1..{n_nodes}"
                )
            if source == target:
                raise InvalidParameterError(f"self loop on node {source}")
            if weights[target - 1, source - 1] != 0:
                raise InvalidParameterError(f"duplicate edge {source} -> {target}")
            if not weight > 0:
                raise InvalidParameterError(
                    f"edge {source} -> {target} must have a positive weight, got {weight}"
                )
            weights[target - 1, source - 1] = weight
        return cls(n_nodes=n_nodes, weights=weights)

    @property
    def in_degrees(self) -> np.ndarray:
        """Weighted in-degrees d_in^i = sum_j a_ij."""
        return self.weights.sum(axis=1)

    @property
    def out_degrees(self) -> np.ndarray:
        """Weighted out-degrees d_out^i = sum_j a_ji."""
        return self.weights.sum(axis=0)

    def edges(self) -> List[Tuple[int, int, float]]:
        """Return the 1-indexed ``(from, to, weight)`` triples of the graph."""
        targets, sources = np.nonzero(self.weights)
        return sorted(
            (int(s) + 1, int(t) + 1, float(self.weights[t, s]))
            for t, s in zip(targets, sources)
        )


@dataclass(frozen=True, eq=False)
class Laplacian:
    """In-degree Laplacian L = D_in - A of a weighted digraph."""
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen_array(self.matrix, "Laplacian", 2)
        if matrix.shape[0] != matrix.shape[1]:
            raise InvalidDimensionError("Laplacian", "square matrix", matrix.shape)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_nodes(self) -> int:
        """Number of nodes N."""
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray, n: int) -> np.ndarray:
        """Compute (L kron I_n) v block-wise."""
        if v.shape != (self.n_nodes * n,):
            raise InvalidDimensionError("stacked vector", self.n_nodes * n, v.shape)
        return (self.matrix @ v.reshape(self.n_nodes, n)).ravel()

    def adjacency(self) -> np.ndarray:
        """Recover the adjacency matrix A = D_in - L."""
        weights = -self.matrix.copy()
        np.fill_diagonal(weights, 0.0)
        return weights


@dataclass(frozen=True, eq=False)
class ConsensusTransform:
    """Coordinate change separating consensus and disagreement of the multipliers.

    Attributes:
        t_fwd: T, first row (1/N) 1^T followed by M1^T
        t_inv: T^-1 = [1_N, M2]
        m1: N x (N-1) block of T
        m2: N x (N-1) orthonormal basis of the complement of 1_N
    """
    t_fwd: np.ndarray
    t_inv: np.ndarray
    m1: np.ndarray
    m2: np.ndarray

    @property
    def n_nodes(self) -> int:
        """Number of nodes N."""
        return self.t_fwd.shape[0]


@dataclass(frozen=True)
class GraphDiagnostics:
    """Spectral characterizations of a graph's Laplacian.

    Attributes:
        zero_eigenvalue_multiplicity: Eigenvalues of L within tolerance of zero
        min_symmetric_eigenvalue: Smallest eigenvalue of L + L^T
        max_row_sum: Largest absolute row sum of L
        max_column_sum: Largest absolute column sum of L
        undirected: Whether L equals its transpose
    """
    zero_eigenvalue_multiplicity: int
    min_symmetric_eigenvalue: float
    max_row_sum: float
    max_column_sum: float
    undirected: bool


@dataclass(frozen=True, eq=False)
class Agent:
    """One agent of the allocation problem: a local cost and reference allocation."""
    cost: CostFunctionPort
    b: np.ndarray

    def __post_init__(self):
        b = _frozen_array(self.b, "reference allocation b_i", 1)
        if b.shape != (self.cost.dimension,):
            raise InvalidDimensionError("reference allocation b_i", self.cost.dimension, b.shape)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class ResourceProblem:
    """Resource allocation problem: minimize sum_i f_i(x_i) s.t. sum_i x_i = d.

    The total resource d is always derived as the sum of the reference
    allocations b_i.
    """
    agents: Tuple[Agent, ...]

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise InvalidParameterError("a problem needs at least one agent")
        dims = {agent.cost.dimension for agent in agents}
        if len(dims) != 1:
            raise InvalidDimensionError("agent decision dimensions", "one shared n", sorted(dims))
        object.__setattr__(self, "agents", agents)

    @property
    def n(self) -> int:
        """Decision dimension per agent."""
        return self.agents[0].cost.dimension

    @property
    def n_agents(self) -> int:
        """Number of agents N."""
        return len(self.agents)

    @property
    def size(self) -> int:
        """Length nN of a stacked vector."""
        return self.n * self.n_agents

    @cached_property
    def b(self) -> np.ndarray:
        """Stacked reference allocations."""
        return _frozen_array(np.concatenate([agent.b for agent in self.agents]), "b", 1)

    @cached_property
    def d(self) -> np.ndarray:
        """Total resource d = sum_i b_i."""
        return _frozen_array(self.b.reshape(self.n_agents, self.n).sum(axis=0), "d", 1)

    @property
    def all_quadratic(self) -> bool:
        """Whether every local cost is quadratic."""
        return all(agent.cost.is_quadratic for agent in self.agents)

    def blocks(self, v: np.ndarray) -> np.ndarray:
        """View a stacked vector as an N x n array (row i is agent i)."""
        if v.shape != (self.size,):
            raise InvalidDimensionError("stacked vector", self.size, v.shape)
        return v.reshape(self.n_agents, self.n)


def _split(vector: np.ndarray, sizes: Tuple[int, ...], what: str) -> List[np.ndarray]:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (sum(sizes),):
        raise InvalidDimensionError(what, sum(sizes), vector.shape)
    return np.split(vector, np.cumsum(sizes)[:-1])


@dataclass
class NetworkState:
    """State (x, lambda) of the sub-optimal dynamics."""
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        if np.shape(self.x) != np.shape(self.lam):
            raise InvalidDimensionError("multiplier vector", np.shape(self.x), np.shape(self.lam))

    def to_vector(self) -> np.ndarray:
        """Concatenate into a single integrator vector."""
        return np.concatenate([self.x, self.lam])

    @classmethod
    def from_vector(cls, vector: np.ndarray, size: int) -> "NetworkState":
        """Split an integrator vector of length 2nN."""
        x, lam = _split(vector, (size, size), "network state vector")
        return cls(x=x, lam=lam)


@dataclass
class PiState:
    """State (x, lambda, z) of the proportional-integral baseline."""
    x: np.ndarray
    lam: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if not np.shape(self.x) == np.shape(self.lam) == np.shape(self.z):
            raise InvalidDimensionError(
                "PI state blocks", np.shape(self.x), (np.shape(self.lam), np.shape(self.z))
            )

    def to_vector(self) -> np.ndarray:
        """Concatenate into a single integrator vector."""
        return np.concatenate([self.x, self.lam, self.z])

    @classmethod
    def from_vector(cls, vector: np.ndarray, size: int) -> "PiState":
        """Split an integrator vector of length 3nN."""
        x, lam, z = _split(vector, (size, size, size), "PI state vector")
        return cls(x=x, lam=lam, z=z)


@dataclass
class ReducedState:
    """State (x, mu) of the centralized primal-dual (reduced) model."""
    x: np.ndarray
    mu: np.ndarray

    def to_vector(self) -> np.ndarray:
        """Concatenate into a single integrator vector."""
        return np.concatenate([self.x, self.mu])

    @classmethod
    def from_vector(cls, vector: np.ndarray, size: int, n: int) -> "ReducedState":
        """Split an integrator vector of length nN + n."""
        x, mu = _split(vector, (size, n), "reduced state vector")
        return cls(x=x, mu=mu)


@dataclass
class SingularState:
    """State (x, mu, theta) in consensus/disagreement coordinates."""
    x: np.ndarray
    mu: np.ndarray
    theta: np.ndarray

    def to_vector(self) -> np.ndarray:
        """Concatenate into a single integrator vector."""
        return np.concatenate([self.x, self.mu, self.theta])

    @classmethod
    def from_vector(cls, vector: np.ndarray, size: int, n: int) -> "SingularState":
        """Split an integrator vector of length nN + n + n(N-1)."""
        x, mu, theta = _split(vector, (size, n, size - n), "singular state vector")
        return cls(x=x, mu=mu, theta=theta)


@dataclass
class Trajectory:
    """Time-stamped samples of an integration run.

    Attributes:
        times: Strictly increasing sample times
        states: One integrator vector per row
        monitors: Named per-sample scalar series
        converged: Set by integrate_until_converged, None otherwise
        stop_reason: Why the run ended ("horizon", "converged", "t_max")
        steps: Number of accepted steps
    """
    times: np.ndarray
    states: np.ndarray
    monitors: Dict[str, np.ndarray] = field(default_factory=dict)
    converged: Optional[bool] = None
    stop_reason: str = "horizon"
    steps: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise InvalidDimensionError("trajectory states", len(self.times), self.states.shape)
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("trajectory times must be strictly increasing")
        for name, series in self.monitors.items():
            if len(series) != len(self.times):
                raise InvalidDimensionError(f"monitor '{name}'", len(self.times), len(series))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        """The last recorded integrator vector."""
        return self.states[-1]


@dataclass
class KktSolution:
    """Optimal primal-dual pair of the allocation problem."""
    x_star: np.ndarray
    mu_star: np.ndarray
    lambda_star: np.ndarray
    kkt_residual: float

    def to_dict(self) -> dict:
        """Serialize for JSON reports."""
        return {
            "x_star": self.x_star.tolist(),
            "mu_star": self.mu_star.tolist(),
            "lambda_star": self.lambda_star.tolist(),
            "residual": self.kkt_residual,
        }


@dataclass
class Equilibrium:
    """Rest point (x_bar(eps), lambda_bar(eps)) of the sub-optimal dynamics.

    Attributes:
        eps: Time-scale parameter
        x_bar: Equilibrium allocation
        lambda_bar: Equilibrium multipliers
        residual: Norm of the equilibrium equations at (x_bar, lambda_bar)
        method: Which solver produced it
        iterations: Solver iterations used
        contraction_ratio: Largest observed step ratio (fixed-point iteration only)
    """
    eps: float
    x_bar: np.ndarray
    lambda_bar: np.ndarray
    residual: float
    method: EquilibriumMethod
    iterations: int = 0
    contraction_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        """Serialize for JSON reports."""
        return {
            "eps": self.eps,
            "x_bar": self.x_bar.tolist(),
            "lambda_bar": self.lambda_bar.tolist(),
            "residual": self.residual,
            "method": self.method.value,
            "iterations": self.iterations,
            "contraction_ratio": self.contraction_ratio,
        }


@dataclass
class GapReport:
    """Distance of an equilibrium from the optimal primal-dual pair."""
    eps: float
    x_gap: float
    lambda_gap: float

    def to_dict(self) -> dict:
        """Serialize for JSON reports."""
        return {"eps": self.eps, "x_gap": self.x_gap, "lambda_gap": self.lambda_gap}


@dataclass
class LyapunovSeries:
    """Values V(t) = |x - x_bar|^2 + |lambda - lambda_bar|^2 along a trajectory."""
    times: np.ndarray
    values: np.ndarray
    max_uptick: float


@dataclass
class RateFit:
    """Least-squares fit of ln V(t) against t.

    Attributes:
        rate: Slope of ln V
        r_squared: Coefficient of determination in [0, 1]
        window: (t_a, t_b) covered by the fit
        samples: Number of samples used
        converging: Whether the fitted slope is negative
    """
    rate: float
    r_squared: float
    window: Tuple[float, float]
    samples: int
    converging: bool

    def to_dict(self) -> dict:
        """Serialize for JSON reports."""
        return {
            "rate": self.rate,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "samples": self.samples,
            "converging": self.converging,
        }


@dataclass
class SweepReport:
    """Sub-optimality gaps over a grid of eps values.

    Failed grid points hold NaN gaps and an entry in ``failures``.
    """
    eps_grid: List[float]
    x_gaps: List[float]
    lambda_gaps: List[float]
    constraint_residuals: List[float]
    loglog_slope: Optional[float]
    lambda_loglog_slope: Optional[float]
    gamma1_hat: Optional[float]
    gamma2_hat: Optional[float]
    exact_case: bool = False
    failures: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Serialize for JSON reports (NaN gaps become null)."""
        def clean(values):
            return [None if np.isnan(v) else v for v in values]
        return {
            "eps_grid": list(self.eps_grid),
            "x_gaps": clean(self.x_gaps),
            "lambda_gaps": clean(self.lambda_gaps),
            "constraint_residuals": clean(self.constraint_residuals),
            "loglog_slope": self.loglog_slope,
            "lambda_loglog_slope": self.lambda_loglog_slope,
            "gamma1_hat": self.gamma1_hat,
            "gamma2_hat": self.gamma2_hat,
            "exact_case": self.exact_case,
            "failures": dict(self.failures),
        }


@dataclass
class DeviationReport:
    """Closeness of the full dynamics to the reduced model.

    Attributes:
        eps: Time-scale parameter
        sup_x_mu_dev: Largest distance between (x, mu) and the reduced solution
        sup_theta_tail: Largest |theta| after the boundary-layer cutoff
        boundary_cutoff: The cutoff t_b used
        full: Full-model trajectory in (x, mu, theta) coordinates, on the shared grid
        reduced: Reduced-model trajectory (x, mu), on the shared grid
    """
    eps: float
    sup_x_mu_dev: float
    sup_theta_tail: float
    boundary_cutoff: float
    full: Optional[Trajectory] = None
    reduced: Optional[Trajectory] = None

    def to_dict(self) -> dict:
        """Serialize for JSON reports (trajectories go to CSV instead)."""
        return {
            "eps": self.eps,
            "sup_x_mu_dev": self.sup_x_mu_dev,
            "sup_theta_tail": self.sup_theta_tail,
            "boundary_cutoff": self.boundary_cutoff,
        }


@dataclass(frozen=True)
class InitialSpec:
    """How the initial state of a simulation is built.

    Attributes:
        kind: zeros, b-start, explicit or random
        x, lam, z, mu: Explicit vectors (kind == explicit); missing ones default to zero
    """
    kind: InitialStateKind = InitialStateKind.B_START
    x: Optional[Tuple[float, ...]] = None
    lam: Optional[Tuple[float, ...]] = None
    z: Optional[Tuple[float, ...]] = None
    mu: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class OutputSettings:
    """Output file names, relative to the run's output directory."""
    trajectory_csv: str = "trajectory.csv"
    report_json: str = "report.json"


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A fully validated experiment configuration."""
    problem: ResourceProblem
    graph: WeightedDigraph
    algorithm: Algorithm = Algorithm.SUBOPTIMAL
    eps: Optional[float] = None
    eps_grid: Optional[Tuple[float, ...]] = None
    pi: PiConfig = field(default_factory=PiConfig)
    equilibrium_method: EquilibriumMethod = EquilibriumMethod.NEWTON
    boundary_cutoff: Optional[float] = None
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSettings = field(default_factory=OutputSettings)


@dataclass
class RunManifest:
    """Record of one command run: config echo, timing, results and output hashes.

    Attributes:
        command: CLI command name
        tool_version: Version of this toolkit
        config: Resolved configuration echo
        started_at: ISO timestamp
        wall_clock_seconds: Elapsed time of the command
        summary: Per-command result summary
        files: Output file name -> sha256 hex digest
    """
    command: str
    tool_version: str
    config: dict
    started_at: str
    wall_clock_seconds: float
    summary: dict
    files: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Serialize for manifest.json."""
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "wall_clock_seconds": self.wall_clock_seconds,
            "config": self.config,
            "summary": self.summary,
            "files": dict(sorted(self.files.items())),
        }
