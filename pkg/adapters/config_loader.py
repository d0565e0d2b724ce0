#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Strict JSON experiment config loader.

Parses a config document into an ExperimentConfig, rejecting unknown keys and
reporting every problem with its field path (or line and column for JSON
syntax errors). ``config_to_dict`` produces the canonical form, so loading the
result again yields the same config.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from adapters.costs import cost_from_config
from core.domain.entities import (
    Agent,
    ExperimentConfig,
    InitialSpec,
    OutputSettings,
    ResourceProblem,
    WeightedDigraph,
)
from core.domain.exceptions import (
    ConfigValidationError,
    InvalidDimensionError,
    InvalidParameterError,
)
from core.domain.value_objects import (
    Algorithm,
    EquilibriumMethod,
    InitialStateKind,
    IntegratorMethod,
    IntegratorOptions,
    PiConfig,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {"problem", "graph", "algorithm", "integrator", "initial", "output"}
ALGORITHM_KEYS = {"name", "eps", "eps_grid", "pi", "equilibrium_method", "boundary_cutoff"}
INTEGRATOR_KEYS = {"method", "h", "rel_tol", "abs_tol", "max_step", "t_end", "record_every", "step_ratio"}
INITIAL_KEYS = {"kind", "x", "lambda", "z", "mu"}
OUTPUT_KEYS = {"trajectory_csv", "report_json"}

# Config spelling of the equilibrium solvers
EQUILIBRIUM_METHODS = {
    "newton": EquilibriumMethod.NEWTON,
    "phi": EquilibriumMethod.PHI_ITERATION,
    "closed-form": EquilibriumMethod.CLOSED_FORM_QUADRATIC,
}


def read_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON config document.

    Args:
        path: Config file path

    Returns:
        Dict[str, Any]: The raw document

    Raises:
        ConfigValidationError: If the file is missing or is not valid JSON.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError(f"cannot read config: {exc}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", str(path)
        ) from exc
    logger.debug("Read config %s", path)
    return data


def _object(value: Any, path: str, allowed: set) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigValidationError("expected an object", path)
    unknown = set(value) - allowed
    if unknown:
        raise ConfigValidationError(f"unknown keys {sorted(unknown)}", path)
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(f"expected a number, got {value!r}", path)
    return float(value)


def _vector(value: Any, path: str, length: Optional[int] = None) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigValidationError("expected a list of numbers", path)
    vector = tuple(_number(item, f"{path}[{k}]") for k, item in enumerate(value))
    if length is not None and len(vector) != length:
        raise ConfigValidationError(f"expected {length} entries, got {len(vector)}", path)
    return vector


def _enum(enum_cls, value: Any, path: str):
    try:
        return enum_cls(value)
    except ValueError as exc:
        choices = [member.value for member in enum_cls]
        raise ConfigValidationError(f"unknown value {value!r}; expected one of {choices}", path) from exc


def _parse_problem(value: Any) -> ResourceProblem:
    section = _object(value, "problem", {"agents"})
    agents_raw = section.get("agents")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ConfigValidationError("expected a non-empty list of agents", "problem.agents")
    agents: List[Agent] = []
    for k, raw in enumerate(agents_raw):
        path = f"problem.agents[{k}]"
        raw = _object(raw, path, {"cost", "b"})
        if "cost" not in raw or "b" not in raw:
            raise ConfigValidationError("each agent needs 'cost' and 'b'", path)
        cost = cost_from_config(raw["cost"], f"{path}.cost")
        try:
            agents.append(Agent(cost=cost, b=_vector(raw["b"], f"{path}.b")))
        except InvalidDimensionError as exc:
            raise ConfigValidationError(str(exc), f"{path}.b") from exc
    try:
        return ResourceProblem(agents=tuple(agents))
    except InvalidDimensionError as exc:
        raise ConfigValidationError(str(exc), "problem.agents") from exc


def _parse_graph(value: Any) -> WeightedDigraph:
    section = _object(value, "graph", {"nodes", "edges"})
    nodes = section.get("nodes")
    if isinstance(nodes, bool) or not isinstance(nodes, int) or nodes < 1:
        raise ConfigValidationError(f"expected a positive integer, got {nodes!r}", "graph.nodes")
    edges_raw = section.get("edges", [])
    if not isinstance(edges_raw, list):
        raise ConfigValidationError("expected a list of [from, to, weight] triples", "graph.edges")
    edges = []
    for k, edge in enumerate(edges_raw):
        path = f"graph.edges[{k}]"
        if not isinstance(edge, list) or len(edge) != 3:
            raise ConfigValidationError("expected [from, to, weight]", path)
        source, target, weight = edge
        if any(isinstance(v, bool) or not isinstance(v, int) for v in (source, target)):
            raise ConfigValidationError("node indices must be integers", path)
        weight = _number(weight, f"{path}[2]")
        if not weight > 0:
            raise ConfigValidationError(f"edge weight must be positive, got {weight}", path)
        edges.append((source, target, weight))
    try:
        return WeightedDigraph.from_edges(nodes, edges)
    except InvalidParameterError as exc:
        raise ConfigValidationError(str(exc), "graph.edges") from exc


def _parse_algorithm(value: Any) -> Dict[str, Any]:
    section = _object(value, "algorithm", ALGORITHM_KEYS)
    parsed: Dict[str, Any] = {
        "algorithm": _enum(Algorithm, section.get("name", Algorithm.SUBOPTIMAL.value), "algorithm.name")
    }
    if section.get("eps") is not None:
        eps = _number(section["eps"], "algorithm.eps")
        if not eps > 0:
            raise ConfigValidationError(f"eps must be positive, got {eps}", "algorithm.eps")
        parsed["eps"] = eps
    if section.get("eps_grid") is not None:
        grid = _vector(section["eps_grid"], "algorithm.eps_grid")
        if not grid:
            raise ConfigValidationError("eps grid must not be empty", "algorithm.eps_grid")
        if any(e <= 0 for e in grid):
            raise ConfigValidationError("eps grid values must be positive", "algorithm.eps_grid")
        parsed["eps_grid"] = grid
    if "pi" in section:
        gains = _object(section["pi"], "algorithm.pi", {"k_p", "k_i"})
        try:
            parsed["pi"] = PiConfig(
                **{key: _number(v, f"algorithm.pi.{key}") for key, v in gains.items()}
            )
        except InvalidParameterError as exc:
            raise ConfigValidationError(str(exc), "algorithm.pi") from exc
    method = section.get("equilibrium_method", "newton")
    if not isinstance(method, str) or method not in EQUILIBRIUM_METHODS:
        raise ConfigValidationError(
            f"unknown value {method!r}; expected one of {sorted(EQUILIBRIUM_METHODS)}",
            "algorithm.equilibrium_method",
        )
    parsed["equilibrium_method"] = EQUILIBRIUM_METHODS[method]
    if section.get("boundary_cutoff") is not None:
        cutoff = _number(section["boundary_cutoff"], "algorithm.boundary_cutoff")
        if cutoff < 0:
            raise ConfigValidationError("boundary cutoff must be non-negative", "algorithm.boundary_cutoff")
        parsed["boundary_cutoff"] = cutoff
    if parsed["algorithm"] is Algorithm.PI and "pi" not in parsed:
        raise ConfigValidationError("the pi algorithm needs its 'pi' gains", "algorithm")
    return parsed


def _parse_integrator(value: Any) -> IntegratorOptions:
    section = _object(value, "integrator", INTEGRATOR_KEYS)
    kwargs: Dict[str, Any] = {}
    for key, raw in section.items():
        path = f"integrator.{key}"
        if key == "method":
            kwargs[key] = _enum(IntegratorMethod, raw, path)
        elif key == "record_every":
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigValidationError(f"expected an integer, got {raw!r}", path)
            kwargs[key] = raw
        else:
            kwargs[key] = _number(raw, path)
    try:
        return IntegratorOptions(**kwargs)
    except InvalidParameterError as exc:
        raise ConfigValidationError(str(exc), "integrator") from exc


def _parse_initial(value: Any, problem: ResourceProblem) -> InitialSpec:
    section = _object(value, "initial", INITIAL_KEYS)
    kind = _enum(InitialStateKind, section.get("kind", InitialStateKind.B_START.value), "initial.kind")
    vectors = {key: section[key] for key in ("x", "lambda", "z", "mu") if key in section}
    if vectors and kind is not InitialStateKind.EXPLICIT:
        raise ConfigValidationError(f"vectors are only allowed with kind 'explicit', got '{kind.value}'", "initial")
    if kind is InitialStateKind.EXPLICIT and "x" not in vectors:
        raise ConfigValidationError("kind 'explicit' needs at least 'x'", "initial")
    lengths = {"x": problem.size, "lambda": problem.size, "z": problem.size, "mu": problem.n}
    parsed = {key: _vector(raw, f"initial.{key}", lengths[key]) for key, raw in vectors.items()}
    return InitialSpec(
        kind=kind,
        x=parsed.get("x"),
        lam=parsed.get("lambda"),
        z=parsed.get("z"),
        mu=parsed.get("mu"),
    )


def _parse_output(value: Any) -> OutputSettings:
    section = _object(value, "output", OUTPUT_KEYS)
    for key, raw in section.items():
        if not isinstance(raw, str) or not raw or "/" in raw or "\\" in raw:
            raise ConfigValidationError("expected a plain file name", f"output.{key}")
    return OutputSettings(**section)


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a raw config document and build the ExperimentConfig.

    Args:
        data: Decoded JSON document

    Returns:
        ExperimentConfig: The validated config

    Raises:
        ConfigValidationError: On any structural or cross-field problem.
    """
    data = _object(data, "config", TOP_LEVEL_KEYS)
    for key in ("problem", "graph"):
        if key not in data:
            raise ConfigValidationError(f"missing required section '{key}'", "config")
    problem = _parse_problem(data["problem"])
    graph = _parse_graph(data["graph"])
    if graph.n_nodes != problem.n_agents:
        raise ConfigValidationError(
            f"graph has {graph.n_nodes} nodes but the problem has {problem.n_agents} agents", "graph.nodes"
        )
    algorithm = _parse_algorithm(data.get("algorithm", {}))
    config = ExperimentConfig(
        problem=problem,
        graph=graph,
        integrator=_parse_integrator(data.get("integrator", {})),
        initial=_parse_initial(data.get("initial", {}), problem),
        output=_parse_output(data.get("output", {})),
        **algorithm,
    )
    logger.debug(
        "Parsed config: %d agents, n=%d, algorithm=%s", problem.n_agents, problem.n, config.algorithm.value
    )
    return config


def _optional_list(values: Optional[Sequence[float]]) -> Optional[List[float]]:
    return None if values is None else list(values)


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Serialize a config into its canonical document form."""
    method_names = {method: name for name, method in EQUILIBRIUM_METHODS.items()}
    integrator = config.integrator
    initial: Dict[str, Any] = {"kind": config.initial.kind.value}
    for key, values in (("x", config.initial.x), ("lambda", config.initial.lam),
                        ("z", config.initial.z), ("mu", config.initial.mu)):
        if values is not None:
            initial[key] = list(values)
    algorithm: Dict[str, Any] = {
        "name": config.algorithm.value,
        "eps": config.eps,
        "eps_grid": _optional_list(config.eps_grid),
        "pi": {"k_p": config.pi.k_p, "k_i": config.pi.k_i},
        "equilibrium_method": method_names[config.equilibrium_method],
        "boundary_cutoff": config.boundary_cutoff,
    }
    return {
        "problem": {
            "agents": [
                {"cost": agent.cost.to_config(), "b": agent.b.tolist()}
                for agent in config.problem.agents
            ]
        },
        "graph": {
            "nodes": config.graph.n_nodes,
            "edges": [[s, t, w] for s, t, w in config.graph.edges()],
        },
        "algorithm": algorithm,
        "integrator": {
            "method": integrator.method.value,
            "h": integrator.h,
            "rel_tol": integrator.rel_tol,
            "abs_tol": integrator.abs_tol,
            "max_step": integrator.max_step,
            "t_end": integrator.t_end,
            "record_every": integrator.record_every,
            "step_ratio": integrator.step_ratio,
        },
        "initial": initial,
        "output": {
            "trajectory_csv": config.output.trajectory_csv,
            "report_json": config.output.report_json,
        },
    }


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply command-line overrides to a raw document before validation.

    Args:
        data: Raw config document
        overrides: Keys ``eps``, ``eps_grid`` and ``equilibrium_method``; None values are skipped

    Returns:
        Dict[str, Any]: The updated document (a shallow copy)
    """
    if not isinstance(data, dict):
        raise ConfigValidationError("expected an object", "config")
    updated = dict(data)
    algorithm = dict(updated.get("algorithm") or {})
    for key, value in overrides.items():
        if value is not None:
            algorithm[key] = list(value) if isinstance(value, tuple) else value
    updated["algorithm"] = algorithm
    return updated


