"""
Communication graph utilities.

Laplacians of weighted digraphs, the structural predicates required by the
distributed dynamics (strong connectivity and weight balance), their spectral
counterparts, and the consensus coordinate change used by the two-timescale
analysis.

Example:
    g = WeightedDigraph.from_edges(3, [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)])
    L = laplacian(g)
    is_weight_balanced(g) and is_strongly_connected(g)
"""

import logging

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from core.domain.entities import ConsensusTransform, GraphDiagnostics, Laplacian, WeightedDigraph
from core.domain.exceptions import GraphAssumptionError, InvalidDimensionError, InvalidParameterError

logger = logging.getLogger(__name__)

BALANCE_RTOL = 1e-10
EIGEN_ATOL = 1e-8
PSD_ATOL = 1e-10


def kron_apply(matrix: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Compute (M kron I_n) v without forming the Kronecker product.

    Args:
        matrix: p x q matrix M
        v: Vector of length q*n, stacked in blocks of n
        n: Block size

    Returns:
        np.ndarray: Vector of length p*n
    """
    rows, cols = matrix.shape
    if v.shape != (cols * n,):
        raise InvalidDimensionError("Kronecker operand", cols * n, v.shape)
    return (matrix @ v.reshape(cols, n)).reshape(rows * n)


def laplacian(g: WeightedDigraph) -> Laplacian:
    """Return the in-degree Laplacian L = D_in - A of a graph."""
    return Laplacian(np.diag(g.in_degrees) - g.weights)


def digraph_of(lap: Laplacian) -> WeightedDigraph:
    """Recover the weighted digraph a Laplacian was built from."""
    return WeightedDigraph(n_nodes=lap.n_nodes, weights=lap.adjacency())


def is_strongly_connected(g: WeightedDigraph) -> bool:
    """Check by graph search that every node reaches every other node."""
    if g.n_nodes == 1:
        return True
    n_components, _ = connected_components(
        (g.weights > 0).astype(int), directed=True, connection="strong"
    )
    return n_components == 1


def is_weight_balanced(g: WeightedDigraph) -> bool:
    """Check that every node's weighted in-degree equals its out-degree.

    The tolerance is relative to the largest degree, so scaling every weight
    by the same factor never changes the answer.
    """
    d_in, d_out = g.in_degrees, g.out_degrees
    scale = max(float(np.max(np.abs(d_in))), float(np.max(np.abs(d_out))))
    if scale == 0.0:
        return True
    return bool(np.all(np.abs(d_in - d_out) <= BALANCE_RTOL * scale))


def is_undirected(g: WeightedDigraph) -> bool:
    """Check whether a_ij = a_ji for every pair (equivalently L = L^T)."""
    return bool(np.allclose(g.weights, g.weights.T, rtol=0.0, atol=1e-12))


def symmetrized(g: WeightedDigraph) -> WeightedDigraph:
    """Return the undirected graph whose edges carry the weights of both directions."""
    return WeightedDigraph(n_nodes=g.n_nodes, weights=np.maximum(g.weights, g.weights.T))


def zero_eigenvalue_multiplicity(lap: Laplacian, tol: float = EIGEN_ATOL) -> int:
    """Count the eigenvalues of L within ``tol`` of zero.

    On weight-balanced graphs a simple zero eigenvalue is equivalent to strong
    connectivity; on arbitrary digraphs it only certifies a rooted spanning tree.
    """
    eigenvalues = np.linalg.eigvals(lap.matrix)
    return int(np.sum(np.abs(eigenvalues) < tol))


def min_symmetric_eigenvalue(lap: Laplacian) -> float:
    """Smallest eigenvalue of L + L^T (non-negative iff the graph is balanced)."""
    return float(np.linalg.eigvalsh(lap.matrix + lap.matrix.T)[0])


def spectral_diagnostics(g: WeightedDigraph) -> GraphDiagnostics:
    """Evaluate the eigenvalue-based characterizations of a graph."""
    lap = laplacian(g)
    return GraphDiagnostics(
        zero_eigenvalue_multiplicity=zero_eigenvalue_multiplicity(lap),
        min_symmetric_eigenvalue=min_symmetric_eigenvalue(lap),
        max_row_sum=float(np.max(np.abs(lap.matrix.sum(axis=1)))),
        max_column_sum=float(np.max(np.abs(lap.matrix.sum(axis=0)))),
        undirected=is_undirected(g),
    )


def require_assumptions(lap: Laplacian) -> None:
    """Refuse graphs that are not strongly connected and weight-balanced.

    Raises:
        GraphAssumptionError: If either predicate fails.
    """
    g = digraph_of(lap)
    problems = []
    if not is_weight_balanced(g):
        problems.append("not weight-balanced")
    if not is_strongly_connected(g):
        problems.append("not strongly connected")
    if problems:
        logger.error("Graph rejected: %s", ", ".join(problems))
        raise GraphAssumptionError(f"communication graph is {' and '.join(problems)}")


def build_consensus_transform(n_nodes: int) -> ConsensusTransform:
    """Build T with (T kron I_n) lambda = (mu, theta), mu the mean multiplier.

    The first row of T is (1/N) 1^T, the first column of T^-1 is 1_N, and the
    remaining columns M2 of T^-1 are an orthonormal basis of the complement of
    1_N, so M1 = M2 makes T T^-1 = I exactly.

    Args:
        n_nodes: Number of nodes N >= 2

    Returns:
        ConsensusTransform: T, T^-1, M1 and M2
    """
    if n_nodes < 2:
        raise InvalidParameterError(f"a consensus transform needs N >= 2, got {n_nodes}")
    ones = np.ones(n_nodes)
    m2 = null_space(ones[np.newaxis, :])
    m1 = m2.copy()
    t_fwd = np.vstack([ones / n_nodes, m1.T])
    t_inv = np.column_stack([ones, m2])
    for matrix in (t_fwd, t_inv, m1, m2):
        matrix.setflags(write=False)
    return ConsensusTransform(t_fwd=t_fwd, t_inv=t_inv, m1=m1, m2=m2)
