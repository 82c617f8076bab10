"""LSPIA iteration in its weighted (Lambda) and uniform (alpha) forms."""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree
from tqdm import tqdm

from .errors import (
    ConfigError,
    DegenerateMatrixError,
    NumericalFailureError,
    ShapeError,
    SingularAssemblyError,
)
from .fitting import (
    EMPTY_GROUP_POLICIES,
    FREEZE,
    STRICT,
    CollocationMatrix,
    FitProblem,
    GroupTable,
    WeightMatrix,
)

logger = logging.getLogger(__name__)

# Variants
WEIGHTED = 'weighted'
UNIFORM = 'uniform'
VARIANTS = (WEIGHTED, UNIFORM)
AUTO = 'auto'

# Initial control point policies
ZERO = 'zero'
SUBSET = 'subset'

# Termination reasons
CONVERGED = 'converged'
MAX_ITERS = 'max_iters'
STAGNATED = 'stagnated'

# Inflation of the estimated largest eigenvalue before inverting it
ALPHA_SAFETY = 1.01


@dataclass
class SolverConfig:
    """Solver settings; validated on construction."""

    variant: str = WEIGHTED
    alpha: Union[str, float] = AUTO
    max_iters: int = 100000
    tol_delta: float = 1e-10
    tol_residual_change: float = 1e-12
    stall_window: int = 50
    empty_group_policy: str = FREEZE
    trace_timing: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if isinstance(self.alpha, str):
            if self.alpha != AUTO:
                raise ConfigError(f"alpha must be a positive number or '{AUTO}', got '{self.alpha}'")
        else:
            try:
                self.alpha = float(self.alpha)
            except (TypeError, ValueError):
                raise ConfigError(f"alpha must be a positive number or '{AUTO}'")
            if not math.isfinite(self.alpha) or self.alpha <= 0:
                raise ConfigError(f"alpha must be positive, got {self.alpha}")
            if self.variant == WEIGHTED:
                raise ConfigError("alpha applies to the uniform variant only")
        if isinstance(self.max_iters, bool) or int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}")
        self.max_iters = int(self.max_iters)
        for name in ('tol_delta', 'tol_residual_change'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"{name} must be a positive number, got {value!r}")
            setattr(self, name, float(value))
        if int(self.stall_window) != self.stall_window or self.stall_window < 1:
            raise ConfigError(f"stall_window must be a positive integer, got {self.stall_window}")
        if self.empty_group_policy not in EMPTY_GROUP_POLICIES:
            raise ConfigError(
                f"empty_group_policy must be one of {EMPTY_GROUP_POLICIES}, got '{self.empty_group_policy}'"
            )


@dataclass(frozen=True, eq=False)
class IterationState:
    """
    Control points P^(k) with their data-point residual and pending update.

    residual is the DVD matrix Q - A P^(k); update is the DVC matrix that the next
    step adds; residual_norm is its Frobenius norm and delta_norm the largest
    absolute DVC component over non-frozen control points.
    """

    P: np.ndarray
    residual: np.ndarray
    update: np.ndarray
    k: int
    residual_norm: float
    delta_norm: float
    rule: Tuple


class TraceRecord(NamedTuple):
    k: int
    residual_norm: float
    delta_norm: float
    wall_ms: Optional[float]


@dataclass
class FitResult:
    """Outcome of a fit run."""

    P_final: np.ndarray
    trace: List[TraceRecord]
    termination: str
    iterations_used: int
    variant: str
    alpha: Optional[float] = None
    wall_time: float = 0.0
    rms_error: float = 0.0
    max_error: float = 0.0

    @property
    def converged(self) -> bool:
        return self.termination == CONVERGED

    @property
    def final_residual(self) -> float:
        return self.trace[-1].residual_norm


def _check_matrix(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise ShapeError(f"{what} must be a matrix, got shape {values.shape}")
    return values


def compute_dvd(A: CollocationMatrix, Q: np.ndarray, P: np.ndarray) -> np.ndarray:
    """
    Difference vectors for data points: delta = Q - A P.

    Raises:
        ShapeError: If the shapes of A, Q and P do not agree
    """
    Q = _check_matrix(Q, "Q")
    P = _check_matrix(P, "P")
    rows, cols = A.shape
    if Q.shape[0] != rows or P.shape[0] != cols or Q.shape[1] != P.shape[1]:
        raise ShapeError(f"A is {A.shape}, Q is {Q.shape}, P is {P.shape}")
    return Q - A.dot(P)


def compute_dvc(delta: np.ndarray, groups: GroupTable, weights: WeightMatrix) -> np.ndarray:
    """
    Difference vectors for control points, gathered group by group.

    Delta_i = sum_{j in I_i} B_i(t_j) delta_j / sum_{j in I_i} B_i(t_j); frozen
    control points get Delta_i = 0.

    Raises:
        ShapeError: If delta does not cover the grouped data points
    """
    delta = _check_matrix(delta, "delta")
    if groups.num_groups != weights.size:
        raise ShapeError(f"{groups.num_groups} groups but {weights.size} weights")
    if groups.num_points != delta.shape[0]:
        raise ShapeError(f"groups cover {groups.num_points} data points, delta has {delta.shape[0]} rows")

    # vector distribution and gathering: row i of the gather matrix sums
    # B_i(t_j) delta_j over the members j of group i
    gathered = groups.gather_matrix @ delta
    return weights.apply(gathered)


def _update(problem: FitProblem, residual: np.ndarray, rule: Tuple) -> np.ndarray:
    if rule[0] == WEIGHTED:
        return compute_dvc(residual, problem.groups, problem.weights)
    return rule[1] * problem.collocation.tdot(residual)


def _make_state(problem: FitProblem, Q: np.ndarray, P: np.ndarray, k: int, rule: Tuple) -> IterationState:
    residual = compute_dvd(problem.collocation, Q, P)
    update = _update(problem, residual, rule)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(update))):
        raise NumericalFailureError(f"non-finite values at iteration {k}; the assembly is inconsistent")
    active = ~problem.frozen
    delta_norm = float(np.max(np.abs(update[active]))) if active.any() and update.size else 0.0
    return IterationState(
        P=P,
        residual=residual,
        update=update,
        k=k,
        residual_norm=float(np.linalg.norm(residual)),
        delta_norm=delta_norm,
        rule=rule,
    )


def start_state(problem: FitProblem, P0: np.ndarray, variant: str = WEIGHTED,
                alpha: Optional[float] = None, Q: Optional[np.ndarray] = None) -> IterationState:
    """
    Build the iteration state for P^(0).

    Args:
        problem: Assembled problem
        P0: Initial control matrix, (n+1) x k
        variant: 'weighted' or 'uniform'
        alpha: Step size for the uniform variant
        Q: Data matrix (defaults to the problem's data points)

    Returns:
        IterationState with k = 0
    """
    Q = problem.Q if Q is None else _check_matrix(Q, "Q")
    rule = (WEIGHTED,) if variant == WEIGHTED else (UNIFORM, _checked_alpha(alpha))
    return _make_state(problem, Q, _check_matrix(P0, "P0").copy(), 0, rule)


def _checked_alpha(alpha) -> float:
    if alpha is None or isinstance(alpha, str) or not alpha > 0 or not math.isfinite(alpha):
        raise ConfigError(f"uniform step needs a positive alpha, got {alpha!r}")
    return float(alpha)


def _advance(state: IterationState, problem: FitProblem, Q: np.ndarray, rule: Tuple) -> IterationState:
    update = state.update if state.rule == rule else _update(problem, state.residual, rule)
    return _make_state(problem, Q, state.P + update, state.k + 1, rule)


def step_weighted(state: IterationState, problem: FitProblem, Q: Optional[np.ndarray] = None) -> IterationState:
    """
    One weighted step: P^(k+1) = P^(k) + Lambda A^T (Q - A P^(k)).

    The update is computed through the DVD/DVC construction.

    Raises:
        NumericalFailureError: If non-finite values appear
    """
    Q = problem.Q if Q is None else _check_matrix(Q, "Q")
    return _advance(state, problem, Q, (WEIGHTED,))


def step_uniform(state: IterationState, problem: FitProblem, alpha: float,
                 Q: Optional[np.ndarray] = None) -> IterationState:
    """
    One uniform step: P^(k+1) = (I - alpha A^T A) P^(k) + alpha A^T Q.

    Raises:
        ConfigError: If alpha is not positive
        NumericalFailureError: If non-finite values appear
    """
    Q = problem.Q if Q is None else _check_matrix(Q, "Q")
    return _advance(state, problem, Q, (UNIFORM, _checked_alpha(alpha)))


def estimate_lambda_max(A: CollocationMatrix, max_iter: int = 10000, tol: float = 1e-12,
                        seed: int = 0) -> float:
    """
    Power-iteration estimate of the largest eigenvalue of A^T A.

    Uses only sparse products with A and A^T; the Rayleigh quotient stops
    changing by more than tol (relative) at convergence.

    Raises:
        DegenerateMatrixError: If A has no nonzero entries
    """
    if not isinstance(A, CollocationMatrix):
        A = CollocationMatrix.from_dense(A)
    if A.nnz == 0:
        raise DegenerateMatrixError("collocation matrix is zero; A^T A has no positive eigenvalue")

    rng = np.random.default_rng(seed)
    x = rng.random(A.shape[1]) + 0.5
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(max_iter):
        y = A.tdot(A.dot(x))
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            raise DegenerateMatrixError("power iteration collapsed to zero")
        lam_new = float(x @ y)
        x = y / y_norm
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    logger.debug(f"Power iteration: lambda_max ~ {lam:.12g} after {it + 1} iterations")
    return lam


def choose_alpha(A: CollocationMatrix, seed: int = 0) -> float:
    """
    Step size for the uniform variant: 1 / (1.01 * lambda_max(A^T A)).

    Raises:
        DegenerateMatrixError: If A is zero
    """
    lam = estimate_lambda_max(A, seed=seed)
    alpha = 1.0 / (ALPHA_SAFETY * lam)
    logger.info(f"Chose alpha = {alpha:.6g} (lambda_max ~ {lam:.6g})")
    return alpha


def initial_control_points(problem: FitProblem, P0, Q: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Resolve the initial control matrix.

    Args:
        problem: Assembled problem
        P0: 'zero', 'subset' (data point whose parameter is nearest the control
            point's Greville abscissa) or an explicit (n+1) x k matrix
        Q: Data matrix (defaults to the problem's data points)

    Returns:
        ndarray of shape (n+1, k)
    """
    Q = problem.Q if Q is None else _check_matrix(Q, "Q")
    shape = (problem.collocation.shape[1], Q.shape[1])
    if isinstance(P0, str):
        if P0 == ZERO:
            return np.zeros(shape)
        if P0 == SUBSET:
            if problem.space is None or not problem.data.has_params:
                raise ConfigError("subset start needs a basis space and parameterized data")
            tree = cKDTree(problem.data.params)
            _, nearest = tree.query(problem.space.greville_points())
            return Q[np.asarray(nearest)].copy()
        raise ConfigError(f"unknown initial control policy '{P0}', expected '{ZERO}', '{SUBSET}' or a matrix")
    P0 = _check_matrix(P0, "P0")
    if P0.shape != shape:
        raise ShapeError(f"initial control matrix has shape {P0.shape}, expected {shape}")
    return P0.copy()


def fit(problem: FitProblem, Q: Optional[np.ndarray] = None, P0=ZERO,
        config: Optional[SolverConfig] = None, non_interactive: bool = True,
        progress_callback: Optional[Callable[[int, float, float], None]] = None,
        log_interval: float = 5.0) -> FitResult:
    """
    Run LSPIA until the update is small, the residual stagnates, or max_iters is hit.

    Args:
        problem: Assembled problem
        Q: Data matrix (defaults to the problem's data points)
        P0: Initial control points, see initial_control_points
        config: Solver configuration (defaults to SolverConfig())
        non_interactive: If True, log progress periodically instead of showing a progress bar
        progress_callback: Optional callback(k, residual_norm, delta_norm) called every step
        log_interval: Seconds between progress log lines in non-interactive mode

    Returns:
        FitResult

    Raises:
        SingularAssemblyError: Strict policy and uncovered control points
        NumericalFailureError: Non-finite iterates
    """
    config = config or SolverConfig()
    Q = problem.Q if Q is None else _check_matrix(Q, "Q")
    if config.empty_group_policy == STRICT and problem.frozen.any():
        raise SingularAssemblyError(np.flatnonzero(problem.frozen))

    alpha = None
    if config.variant == UNIFORM:
        if config.alpha == AUTO:
            alpha = choose_alpha(problem.collocation)
        else:
            alpha = config.alpha
            lam = estimate_lambda_max(problem.collocation)
            if alpha * lam > 1.0:
                logger.warning(
                    f"alpha * lambda_max = {alpha * lam:.6g} > 1; convergence is not guaranteed"
                )

    state = start_state(problem, initial_control_points(problem, P0, Q), config.variant, alpha, Q)
    started = time.perf_counter()

    def record(s: IterationState) -> TraceRecord:
        wall_ms = (time.perf_counter() - started) * 1000.0 if config.trace_timing else None
        return TraceRecord(s.k, s.residual_norm, s.delta_norm, wall_ms)

    trace = [record(state)]
    logger.info(
        f"Starting {config.variant} LSPIA: {problem.size} control points, {Q.shape[0]} data points"
        + (f", alpha={alpha:.6g}" if alpha is not None else "")
    )

    termination = MAX_ITERS
    best_delta = state.delta_norm
    stalled = 0
    last_log_time = time.time()
    pbar = None if non_interactive else tqdm(total=config.max_iters, unit='it', leave=False)
    try:
        while True:
            if state.delta_norm <= config.tol_delta:
                termination = CONVERGED
                break
            if state.k >= config.max_iters:
                termination = MAX_ITERS
                break

            previous = state
            if config.variant == WEIGHTED:
                state = step_weighted(state, problem, Q)
            else:
                state = step_uniform(state, problem, alpha, Q)
            trace.append(record(state))

            if previous.residual_norm > 0.0:
                change = abs(previous.residual_norm - state.residual_norm) / previous.residual_norm
            else:
                change = 0.0
            if state.delta_norm < best_delta:
                best_delta = state.delta_norm
                stalled = 0
            elif change <= config.tol_residual_change:
                stalled += 1
            else:
                stalled = 0
            if stalled >= config.stall_window:
                termination = STAGNATED
                break

            if progress_callback:
                try:
                    progress_callback(state.k, state.residual_norm, state.delta_norm)
                except Exception as e:
                    logger.debug(f"Error in progress callback: {e}")

            if pbar is not None:
                pbar.update(1)
                if state.k % 100 == 0:
                    pbar.set_postfix(residual=f"{state.residual_norm:.3e}", delta=f"{state.delta_norm:.3e}")
            else:
                now = time.time()
                if now - last_log_time >= log_interval:
                    logger.info(
                        f"Iteration {state.k}: residual {state.residual_norm:.6e}, "
                        f"delta {state.delta_norm:.6e}"
                    )
                    last_log_time = now
    finally:
        if pbar is not None:
            pbar.close()

    wall_time = time.perf_counter() - started
    errors = np.linalg.norm(state.residual, axis=1)
    result = FitResult(
        P_final=state.P,
        trace=trace,
        termination=termination,
        iterations_used=state.k,
        variant=config.variant,
        alpha=alpha,
        wall_time=wall_time,
        rms_error=float(np.sqrt(np.mean(errors ** 2))),
        max_error=float(errors.max()),
    )
    message = (
        f"LSPIA {termination} after {state.k} iterations in {wall_time:.2f}s: "
        f"residual {state.residual_norm:.6e}, rms error {result.rms_error:.6e}"
    )
    if termination == CONVERGED:
        logger.info(message)
    else:
        logger.warning(message)
    return result
