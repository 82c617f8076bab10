"""
Dense reference linear algebra for small fitting problems.

Everything here densifies A^T A, so it is meant for verification at desk scale:
SVD and pseudo-inverse, the closed-form limits of the iteration, and spectral
diagnostics of Lambda A^T A.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.sparse import issparse

from .errors import DenseLimitError, NumericalFailureError, ShapeError, VerificationError
from .fitting import CollocationMatrix, WeightMatrix

logger = logging.getLogger(__name__)

DEFAULT_DENSE_LIMIT = 2000
DEFAULT_TOL = 1e-8
ZERO_TOL_FACTOR = 1e-8


def as_dense(M) -> np.ndarray:
    """
    Convert a collocation matrix, sparse matrix or array-like to a finite 2-D array.

    Raises:
        ShapeError: If M is not two-dimensional
        NumericalFailureError: If M has non-finite entries
    """
    if isinstance(M, CollocationMatrix):
        M = M.toarray()
    elif issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalFailureError("matrix has non-finite entries")
    return M


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Full singular value decomposition M = U diag(s) V^T.

    Returns:
        tuple: (U, s, V) with s nonnegative and nonincreasing

    Raises:
        NumericalFailureError: If the decomposition does not converge
    """
    M = as_dense(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"SVD did not converge for {M.shape} matrix: {e}")
    return U, s, Vt.T


def rank_cutoff(s: np.ndarray, shape: Tuple[int, int]) -> float:
    """Singular values above eps * max(rows, cols) * sigma_max count toward the rank."""
    if s.size == 0:
        return 0.0
    return float(np.finfo(float).eps * max(shape) * s[0])


def numerical_rank(M) -> int:
    M = as_dense(M)
    _, s, _ = svd(M)
    return int(np.sum(s > rank_cutoff(s, M.shape)))


def pinv(M, rank_tol: Optional[float] = None) -> np.ndarray:
    """
    Moore-Penrose pseudo-inverse by thresholded SVD.

    Args:
        M: Matrix
        rank_tol: Absolute singular-value cutoff; defaults to the conventional
                  eps * max(rows, cols) * sigma_max

    Returns:
        ndarray with the transposed shape of M
    """
    M = as_dense(M)
    U, s, V = svd(M)
    cutoff = rank_cutoff(s, M.shape) if rank_tol is None else float(rank_tol)
    keep = s > cutoff
    r = int(np.sum(keep))
    if r == 0:
        return np.zeros(M.shape[::-1])
    return (V[:, :r] / s[:r]) @ U[:, :r].T


def penrose_residuals(M, M_pinv) -> Dict[str, float]:
    """Max-abs residuals of the four Penrose identities."""
    M = as_dense(M)
    X = as_dense(M_pinv)
    MX = M @ X
    XM = X @ M
    return {
        'mxm': float(np.max(np.abs(MX @ M - M), initial=0.0)),
        'xmx': float(np.max(np.abs(XM @ X - X), initial=0.0)),
        'mx_sym': float(np.max(np.abs(MX - MX.T), initial=0.0)),
        'xm_sym': float(np.max(np.abs(XM - XM.T), initial=0.0)),
    }


def _gram(A) -> Tuple[np.ndarray, np.ndarray]:
    A = as_dense(A)
    return A, A.T @ A


def pinv_solution(A, Q, P0=None) -> np.ndarray:
    """
    Closed-form limit of the uniform iteration.

    Returns (A^T A)^+ A^T Q + (I - (A^T A)^+ A^T A) P0; with P0 = None (or zero)
    this is the minimum-norm solution of the normal equations.
    """
    A, G = _gram(A)
    Q = _as_rows(Q)
    if Q.shape[0] != A.shape[0]:
        raise ShapeError(f"A has {A.shape[0]} rows but Q has {Q.shape[0]}")
    G_pinv = pinv(G)
    X = G_pinv @ (A.T @ Q)
    if P0 is not None:
        P0 = _as_rows(P0)
        if P0.shape != X.shape:
            raise ShapeError(f"P0 has shape {P0.shape}, expected {X.shape}")
        X = X + (np.eye(G.shape[0]) - G_pinv @ G) @ P0
    return X


def normal_solution(A, Q) -> np.ndarray:
    """Unique least-squares solution from the normal equations (A must have full column rank)."""
    A, G = _gram(A)
    try:
        return np.linalg.solve(G, A.T @ _as_rows(Q))
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"normal matrix is singular: {e}")


def normal_residual(A, Q, P) -> float:
    """Max-abs residual of the normal equations, |A^T A P - A^T Q|_inf."""
    A, G = _gram(A)
    return float(np.max(np.abs(G @ _as_rows(P) - A.T @ _as_rows(Q)), initial=0.0))


def _weight_diagonal(A: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return WeightMatrix.from_group_sums(A.sum(axis=0)).diagonal
    if isinstance(weights, WeightMatrix):
        return weights.diagonal
    return np.asarray(weights, dtype=float).ravel()


def uniform_step(A, Q, P, alpha: float) -> np.ndarray:
    """Dense (I - alpha A^T A) P + alpha A^T Q."""
    A, G = _gram(A)
    P = _as_rows(P)
    return (np.eye(G.shape[0]) - alpha * G) @ P + alpha * (A.T @ _as_rows(Q))


def weighted_step(A, Q, P, weights=None) -> np.ndarray:
    """Dense P + Lambda A^T (Q - A P)."""
    A = as_dense(A)
    d = _weight_diagonal(A, weights)
    P = _as_rows(P)
    return P + d[:, None] * (A.T @ (_as_rows(Q) - A @ P))


def _check_dense_limit(size: int, dense_limit: int) -> None:
    if size > dense_limit:
        raise DenseLimitError(size, dense_limit)


def iteration_eigenvalues(A, weights=None, alpha: Optional[float] = None) -> np.ndarray:
    """
    Real eigenvalues of Lambda A^T A (or alpha A^T A), ascending.

    Computed on the symmetric similar matrix Lambda^(1/2) A^T A Lambda^(1/2).
    """
    A, G = _gram(A)
    if alpha is not None:
        return np.linalg.eigvalsh(alpha * G)
    root = np.sqrt(_weight_diagonal(A, weights))
    return np.linalg.eigvalsh(root[:, None] * G * root[None, :])


def contraction_factor(A, weights=None, alpha: Optional[float] = None,
                       zero_tol: Optional[float] = None) -> float:
    """Asymptotic error reduction per step: max |1 - lambda| over nonzero eigenvalues."""
    eig = iteration_eigenvalues(A, weights, alpha)
    if eig.size == 0:
        return 0.0
    if zero_tol is None:
        zero_tol = ZERO_TOL_FACTOR * max(eig[-1], 0.0)
    nonzero = eig[np.abs(eig) > zero_tol]
    return float(np.max(np.abs(1.0 - nonzero))) if nonzero.size else 0.0


@dataclass
class SpectralReport:
    """Spectral diagnostics of Lambda A^T A together with the verification flags."""

    order: int
    rank: int
    weighted_rank: int
    n0: int
    zero_count: int
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    max_imag: float
    eig_min: float
    eig_max: float
    tol: float
    zero_tol: float
    flags: Dict[str, bool] = field(default_factory=dict)
    penrose: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self, include_spectrum: bool = False) -> dict:
        """JSON-ready representation; booleans stay booleans."""
        doc = {
            'order': self.order,
            'rank': self.rank,
            'weighted_rank': self.weighted_rank,
            'n0': self.n0,
            'zero_count': self.zero_count,
            'eig_min': self.eig_min,
            'eig_max': self.eig_max,
            'max_imag': self.max_imag,
            'tol': self.tol,
            'zero_tol': self.zero_tol,
            'flags': {
                'real_01': bool(self.flags['real'] and self.flags['unit_interval']),
                'zero_count': bool(self.flags['zero_count']),
                'rank_match': bool(self.flags['rank_match']),
            },
            'penrose_residuals': dict(self.penrose),
        }
        if include_spectrum:
            doc['eigenvalues'] = [float(x) for x in self.eigenvalues]
            doc['singular_values'] = [float(x) for x in self.singular_values]
        return doc


def spectral_report(A, weights: Union[WeightMatrix, np.ndarray, None] = None,
                    tol: float = DEFAULT_TOL, zero_tol: Optional[float] = None,
                    dense_limit: int = DEFAULT_DENSE_LIMIT) -> SpectralReport:
    """
    Eigen-structure of Lambda A^T A checked against the convergence theory.

    Flags:
        real: eigenvalues of the nonsymmetric product have |Im| <= tol
        unit_interval: eigenvalues lie in [-tol, 1 + tol]
        zero_count: number of eigenvalues with |lambda| <= zero_tol equals n0
        rank_match: rank(Lambda A^T A) equals rank(A^T A)

    Args:
        A: Collocation matrix (sparse or dense)
        weights: Lambda; defaults to the reciprocal column sums of A
        tol: Tolerance for the real and unit-interval flags
        zero_tol: Zero-eigenvalue threshold; defaults to 1e-8 * lambda_max
        dense_limit: Largest number of control points to densify

    Returns:
        SpectralReport

    Raises:
        DenseLimitError: If A has more columns than dense_limit
    """
    if isinstance(A, CollocationMatrix) or issparse(A):
        _check_dense_limit(A.shape[1], dense_limit)
    A, G = _gram(A)
    order = G.shape[0]
    _check_dense_limit(order, dense_limit)
    d = _weight_diagonal(A, weights)
    if d.shape != (order,):
        raise ShapeError(f"{d.shape[0]} weights for {order} control points")

    _, s, _ = svd(G)
    rank = int(np.sum(s > rank_cutoff(s, G.shape)))
    weighted_rank = numerical_rank(d[:, None] * G)

    root = np.sqrt(d)
    eig = np.linalg.eigvalsh(root[:, None] * G * root[None, :])
    general = np.linalg.eigvals(d[:, None] * G)
    max_imag = float(np.max(np.abs(general.imag), initial=0.0))

    eig_max = float(eig[-1]) if eig.size else 0.0
    eig_min = float(eig[0]) if eig.size else 0.0
    if zero_tol is None:
        zero_tol = ZERO_TOL_FACTOR * eig_max if eig_max > 0 else tol
    zero_count = int(np.sum(np.abs(eig) <= zero_tol))
    n0 = order - rank

    flags = {
        'real': max_imag <= tol,
        'unit_interval': bool(eig_min >= -tol and eig_max <= 1.0 + tol),
        'zero_count': zero_count == n0,
        'rank_match': weighted_rank == rank,
    }
    report = SpectralReport(
        order=order,
        rank=rank,
        weighted_rank=weighted_rank,
        n0=n0,
        zero_count=zero_count,
        eigenvalues=eig,
        singular_values=s,
        max_imag=max_imag,
        eig_min=eig_min,
        eig_max=eig_max,
        tol=tol,
        zero_tol=float(zero_tol),
        flags=flags,
        penrose=penrose_residuals(G, pinv(G)),
    )
    logger.info(f"Normal matrix order {order}, rank {rank} (n0 = {n0}); eigenvalues in [{eig_min:.3g}, {eig_max:.3g}]")
    failed = [name for name, ok in flags.items() if not ok]
    if failed:
        logger.warning(f"Spectral checks failed: {', '.join(failed)}")
    return report


def projector_check(A, tol: float = DEFAULT_TOL, dense_limit: int = DEFAULT_DENSE_LIMIT) -> np.ndarray:
    """
    Verify that (A^T A)^+ (A^T A) is the orthogonal projector onto range(A^T A).

    Checks idempotency, symmetry, a spectrum within tol of {0, 1} and exactly
    rank(A^T A) unit eigenvalues (so the trace equals the rank).

    Returns:
        ndarray: the projector (A^T A)^+ (A^T A)

    Raises:
        VerificationError: If any check fails
        DenseLimitError: If A has more columns than dense_limit
    """
    if isinstance(A, CollocationMatrix) or issparse(A):
        _check_dense_limit(A.shape[1], dense_limit)
    A, G = _gram(A)
    _check_dense_limit(G.shape[0], dense_limit)

    _, s, _ = svd(G)
    rank = int(np.sum(s > rank_cutoff(s, G.shape)))
    R = pinv(G) @ G

    idempotency = float(np.max(np.abs(R @ R - R), initial=0.0))
    if idempotency > tol:
        raise VerificationError(f"projector is not idempotent: |R^2 - R| = {idempotency:.3e}")
    asymmetry = float(np.max(np.abs(R - R.T), initial=0.0))
    if asymmetry > tol:
        raise VerificationError(f"projector is not symmetric: |R - R^T| = {asymmetry:.3e}")

    eig = np.linalg.eigvalsh(0.5 * (R + R.T))
    ones = np.abs(eig - 1.0) <= tol
    zeros = np.abs(eig) <= tol
    if not np.all(ones | zeros):
        stray = eig[~(ones | zeros)]
        raise VerificationError(f"projector eigenvalues not in {{0, 1}}: {stray[:5].tolist()}")
    if int(ones.sum()) != rank:
        raise VerificationError(f"projector has {int(ones.sum())} unit eigenvalues, rank(A^T A) = {rank}")
    trace = float(np.trace(R))
    if abs(trace - rank) > tol * max(1, rank):
        raise VerificationError(f"projector trace {trace:.12g} differs from rank {rank}")

    logger.debug(f"Projector check passed: rank {rank}, trace {trace:.12g}")
    return R
