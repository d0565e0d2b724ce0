# pylint: disable=too-many-arguments,too-many-locals
"""
Optimality and equilibrium solvers.

- ``solve_kkt``: the optimal pair (x*, mu*) of
      minimize sum_i f_i(x_i)  s.t.  sum_i x_i = d
  by a direct KKT solve for quadratic costs and damped Newton otherwise.
- The rest point (x_bar(eps), lambda_bar(eps)) of the sub-optimal dynamics, i.e.
      0 = grad f(x) + lambda
      0 = -eps (x - b) + (L kron I) lambda
  solved by damped Newton, by the fixed-point map Phi, or directly when every
  cost is quadratic.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from core.domain.entities import Equilibrium, GapReport, KktSolution, Laplacian, NetworkState, ResourceProblem
from core.domain.exceptions import (
    ConvergenceError,
    DegenerateProblemError,
    InvalidDimensionError,
    InvalidParameterError,
    NonContractionError,
    SingularMatrixError,
)
from core.domain.value_objects import EquilibriumMethod
from core.graph import require_assumptions
from core.problem import total_gradient, total_hessian

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 100
PHI_TOL = 1e-12
PHI_MAX_ITER = 200
MAX_CONDITION = 1e14
NON_CONTRACTION_STREAK = 3


def _damped_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    z0: np.ndarray,
    what: str,
    singular_error=SingularMatrixError,
) -> Tuple[np.ndarray, float, int]:
    """Newton iteration with step halving until the residual norm decreases.

    A stalled line search is accepted when the residual is already within
    100 * NEWTON_TOL (rounding floor).

    Returns:
        Tuple[np.ndarray, float, int]: Solution, final residual norm, iterations
    """
    z = np.array(z0, dtype=float)
    r = residual(z)
    norm = float(np.linalg.norm(r))
    for iteration in range(NEWTON_MAX_ITER):
        if norm < NEWTON_TOL:
            return z, norm, iteration
        try:
            step = np.linalg.solve(jacobian(z), -r)
        except np.linalg.LinAlgError as exc:
            logger.error("%s: singular Jacobian at iteration %d", what, iteration)
            raise singular_error(f"{what}: singular Jacobian") from exc
        alpha = 1.0
        while True:
            candidate = z + alpha * step
            r_candidate = residual(candidate)
            norm_candidate = float(np.linalg.norm(r_candidate))
            if norm_candidate < norm or alpha < 2.0 ** -30:
                break
            alpha /= 2.0
        if not norm_candidate < norm:
            if norm < 100 * NEWTON_TOL:
                logger.debug("%s: stagnated at residual %.3e, accepted", what, norm)
                return z, norm, iteration
            logger.error("%s: line search failed at residual %.3e", what, norm)
            raise ConvergenceError(f"{what}: line search failed", norm)
        z, r, norm = candidate, r_candidate, norm_candidate
        logger.debug("%s iteration %d: residual %.3e (damping %.3g)", what, iteration + 1, norm, alpha)
    if norm < NEWTON_TOL:
        return z, norm, NEWTON_MAX_ITER
    logger.error("%s did not converge in %d iterations", what, NEWTON_MAX_ITER)
    raise ConvergenceError(f"{what} did not converge in {NEWTON_MAX_ITER} iterations", norm)


def _replication(p: ResourceProblem) -> np.ndarray:
    """E = 1_N kron I_n as a dense block column, only for the factored KKT matrix."""
    return np.tile(np.eye(p.n), (p.n_agents, 1))


def _kkt_residual(p: ResourceProblem, x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    stationarity = total_gradient(p, x) + np.tile(mu, p.n_agents)
    feasibility = p.blocks(x).sum(axis=0) - p.d
    return np.concatenate([stationarity, feasibility])


def solve_kkt(p: ResourceProblem) -> KktSolution:
    """Solve grad f_i(x_i) + mu = 0 for all i together with sum_i x_i = d.

    Args:
        p: The allocation problem (strongly convex costs)

    Returns:
        KktSolution: x*, mu* and lambda* = 1 kron mu*

    Raises:
        DegenerateProblemError: If the KKT matrix is singular.
        ConvergenceError: If Newton fails on non-quadratic costs.
    """
    size, n = p.size, p.n
    e = _replication(p)
    zeros = np.zeros((n, n))
    if p.all_quadratic:
        hessian = total_hessian(p, np.zeros(size))
        matrix = np.block([[hessian, e], [e.T, zeros]])
        rhs = np.concatenate([-total_gradient(p, np.zeros(size)), p.d])
        try:
            solution = np.linalg.solve(matrix, rhs)
        except np.linalg.LinAlgError as exc:
            raise DegenerateProblemError("KKT system is singular") from exc
    else:
        def residual(v):
            return _kkt_residual(p, v[:size], v[size:])

        def jacobian(v):
            return np.block([[total_hessian(p, v[:size]), e], [e.T, zeros]])

        mu0 = -p.blocks(total_gradient(p, np.array(p.b))).mean(axis=0)
        solution, _, iterations = _damped_newton(
            residual, jacobian, np.concatenate([p.b, mu0]), "KKT Newton", DegenerateProblemError
        )
        logger.debug("KKT Newton converged in %d iterations", iterations)
    x_star, mu_star = solution[:size], solution[size:]
    res = float(np.linalg.norm(_kkt_residual(p, x_star, mu_star)))
    return KktSolution(
        x_star=x_star,
        mu_star=mu_star,
        lambda_star=np.tile(mu_star, p.n_agents),
        kkt_residual=res,
    )


def _check_inputs(p: ResourceProblem, lap: Laplacian, eps: float) -> None:
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if lap.n_nodes != p.n_agents:
        raise InvalidDimensionError("graph size", p.n_agents, lap.n_nodes)


def _equilibrium_equations(p: ResourceProblem, lap: Laplacian, eps: float, x: np.ndarray, lam: np.ndarray):
    return np.concatenate([total_gradient(p, x) + lam, -eps * (x - p.b) + lap.apply(lam, p.n)])


def equilibrium_residual(p: ResourceProblem, lap: Laplacian, eps: float, x: np.ndarray, lam: np.ndarray) -> float:
    """Norm of the two equilibrium equations at (x, lambda)."""
    return float(np.linalg.norm(_equilibrium_equations(p, lap, eps, x, lam)))


def solve_equilibrium_newton(
    p: ResourceProblem,
    lap: Laplacian,
    eps: float,
    guess: Optional[NetworkState] = None,
    kkt: Optional[KktSolution] = None,
) -> Equilibrium:
    """Solve the equilibrium equations by damped Newton.

    The Jacobian is [[hess f(x), I], [-eps I, L kron I]]. The default starting
    point is the KKT pair (x*, lambda*), which lies within O(eps) of the answer.

    Raises:
        GraphAssumptionError: If the graph is not balanced and strongly connected.
        ConvergenceError: If Newton fails.
    """
    _check_inputs(p, lap, eps)
    require_assumptions(lap)
    size = p.size
    k = np.kron(lap.matrix, np.eye(p.n))  # dense only inside the factored Jacobian
    identity = np.eye(size)
    if guess is None:
        kkt = kkt or solve_kkt(p)
        guess = NetworkState(x=kkt.x_star, lam=kkt.lambda_star)

    def residual(v):
        return _equilibrium_equations(p, lap, eps, v[:size], v[size:])

    def jacobian(v):
        return np.block([[total_hessian(p, v[:size]), identity], [-eps * identity, k]])

    solution, res, iterations = _damped_newton(
        residual, jacobian, guess.to_vector(), f"equilibrium Newton (eps={eps:g})"
    )
    logger.debug("Equilibrium at eps=%g: %d Newton iterations, residual %.3e", eps, iterations, res)
    return Equilibrium(
        eps=eps,
        x_bar=solution[:size],
        lambda_bar=solution[size:],
        residual=res,
        method=EquilibriumMethod.NEWTON,
        iterations=iterations,
    )


def solve_equilibrium_closed_form(p: ResourceProblem, lap: Laplacian, eps: float) -> Equilibrium:
    """Solve the (linear) equilibrium equations of an all-quadratic problem directly.

    Uniqueness is certified by a full-rank check of the system matrix.
    """
    _check_inputs(p, lap, eps)
    if not p.all_quadratic:
        raise InvalidParameterError("the closed-form equilibrium needs quadratic costs")
    require_assumptions(lap)
    size = p.size
    origin = np.zeros(size)
    identity = np.eye(size)
    k = np.kron(lap.matrix, np.eye(p.n))
    matrix = np.block([[total_hessian(p, origin), identity], [-eps * identity, k]])
    rank = np.linalg.matrix_rank(matrix)
    if rank < 2 * size:
        raise SingularMatrixError(f"equilibrium system has rank {rank} < {2 * size}; not unique")
    rhs = np.concatenate([-total_gradient(p, origin), -eps * p.b])
    solution = np.linalg.solve(matrix, rhs)
    x_bar, lambda_bar = solution[:size], solution[size:]
    return Equilibrium(
        eps=eps,
        x_bar=x_bar,
        lambda_bar=lambda_bar,
        residual=float(np.linalg.norm(_equilibrium_equations(p, lap, eps, x_bar, lambda_bar))),
        method=EquilibriumMethod.CLOSED_FORM_QUADRATIC,
    )


class _PhiOperator:
    """Phi(z) = (eps I + (L kron I) H)^-1 (eps (b - x*) + (L kron I) r(z)).

    H = hess f(x*) and r(z) = grad f(x*) + H z - grad f(x* + z) is the
    remainder of the second-order expansion. The matrix is factorized once.
    """

    def __init__(self, p: ResourceProblem, lap: Laplacian, eps: float, kkt: KktSolution):
        _check_inputs(p, lap, eps)
        if kkt.x_star.shape != (p.size,):
            raise InvalidDimensionError("KKT solution", p.size, kkt.x_star.shape)
        self.problem = p
        self.x_star = kkt.x_star
        self.grad_star = total_gradient(p, kkt.x_star)
        self.hessian = total_hessian(p, kkt.x_star)
        self.laplacian = lap
        matrix = eps * np.eye(p.size) + np.kron(lap.matrix, np.eye(p.n)) @ self.hessian
        condition = np.linalg.cond(matrix)
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            logger.error("Phi matrix is singular at eps=%g (condition %.3g)", eps, condition)
            raise SingularMatrixError(
                f"eps I + (L kron I) H is singular at eps={eps:g}; "
                "eps may be outside the validity range or the graph unbalanced"
            )
        self.factor = lu_factor(matrix)
        self.forcing = eps * (p.b - kkt.x_star)

    def remainder(self, z: np.ndarray) -> np.ndarray:
        """r(z), identically zero for quadratic costs."""
        return self.grad_star + self.hessian @ z - total_gradient(self.problem, self.x_star + z)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return lu_solve(self.factor, self.forcing + self.laplacian.apply(self.remainder(z), self.problem.n))


def phi_map(p: ResourceProblem, lap: Laplacian, eps: float, kkt: KktSolution, z: np.ndarray) -> np.ndarray:
    """Apply the fixed-point map whose fixed point z_bar gives x_bar(eps) = x* + z_bar.

    Raises:
        SingularMatrixError: If eps I + (L kron I) H is singular.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (p.size,):
        raise InvalidDimensionError("z", p.size, z.shape)
    return _PhiOperator(p, lap, eps, kkt)(z)


def solve_equilibrium_phi(
    p: ResourceProblem,
    lap: Laplacian,
    eps: float,
    kkt: Optional[KktSolution] = None,
    tol: float = PHI_TOL,
    max_iter: int = PHI_MAX_ITER,
) -> Equilibrium:
    """Iterate z <- Phi(z) from z = 0 until successive iterates are within ``tol``.

    The reported iteration count is the number of applications needed to reach
    the fixed point, so a constant map (quadratic costs) reports 1.

    Args:
        p: The problem
        lap: Laplacian of a balanced, strongly connected graph
        eps: Time-scale parameter
        kkt: Precomputed KKT solution (solved if omitted)
        tol: Step tolerance
        max_iter: Iteration budget

    Returns:
        Equilibrium: x_bar = x* + z_bar, lambda_bar = -grad f(x_bar), with the
        largest observed contraction ratio

    Raises:
        NonContractionError: If the step ratio is >= 1 three times in a row.
        ConvergenceError: If ``max_iter`` is exhausted.
    """
    _check_inputs(p, lap, eps)
    if not (tol > 0 and max_iter >= 1):
        raise InvalidParameterError(f"need tol > 0 and max_iter >= 1, got {tol}, {max_iter}")
    require_assumptions(lap)
    kkt = kkt or solve_kkt(p)
    phi = _PhiOperator(p, lap, eps, kkt)
    z = np.zeros(p.size)
    previous: Optional[float] = None
    ratios = []
    streak = 0
    iterations = None
    for application in range(1, max_iter + 1):
        z_next = phi(z)
        step = float(np.linalg.norm(z_next - z))
        z = z_next
        if previous is not None and previous > 0:
            ratios.append(step / previous)
            streak = streak + 1 if ratios[-1] >= 1.0 else 0
            if streak >= NON_CONTRACTION_STREAK:
                logger.error("Phi iteration is not contracting at eps=%g", eps)
                raise NonContractionError(eps, ratios[-NON_CONTRACTION_STREAK:])
        if step < tol:
            iterations = max(1, application - 1)
            break
        previous = step
    if iterations is None:
        raise ConvergenceError(f"Phi iteration did not converge in {max_iter} iterations", step)
    x_bar = kkt.x_star + z
    lambda_bar = -total_gradient(p, x_bar)
    logger.debug("Phi iteration at eps=%g converged in %d iterations", eps, iterations)
    return Equilibrium(
        eps=eps,
        x_bar=x_bar,
        lambda_bar=lambda_bar,
        residual=equilibrium_residual(p, lap, eps, x_bar, lambda_bar),
        method=EquilibriumMethod.PHI_ITERATION,
        iterations=iterations,
        contraction_ratio=max(ratios) if ratios else None,
    )


def solve_equilibrium(
    p: ResourceProblem,
    lap: Laplacian,
    eps: float,
    method: EquilibriumMethod = EquilibriumMethod.NEWTON,
    kkt: Optional[KktSolution] = None,
) -> Equilibrium:
    """Dispatch to the solver named by ``method``."""
    if method is EquilibriumMethod.NEWTON:
        return solve_equilibrium_newton(p, lap, eps, kkt=kkt)
    if method is EquilibriumMethod.PHI_ITERATION:
        return solve_equilibrium_phi(p, lap, eps, kkt=kkt)
    return solve_equilibrium_closed_form(p, lap, eps)


def suboptimality_gap(eq: Equilibrium, kkt: KktSolution) -> GapReport:
    """Distances |x_bar(eps) - x*| and |lambda_bar(eps) - lambda*|."""
    if eq.x_bar.shape != kkt.x_star.shape:
        raise InvalidDimensionError("equilibrium", kkt.x_star.shape, eq.x_bar.shape)
    return GapReport(
        eps=eq.eps,
        x_gap=float(np.linalg.norm(eq.x_bar - kkt.x_star)),
        lambda_gap=float(np.linalg.norm(eq.lambda_bar - kkt.lambda_star)),
    )
