"""Assembly of least-squares fitting problems: data groups, collocation matrix and weights."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.sparse import csc_array, csr_array, issparse

from .errors import DegenerateInputError, DomainError, ShapeError, SingularAssemblyError
from .splinecore import BasisSpace

logger = logging.getLogger(__name__)

# Parameterization modes
CHORD = 'chord'
UNIFORM = 'uniform'
GIVEN = 'given'
PARAM_MODES = (CHORD, UNIFORM, GIVEN)

# Empty-group policies
FREEZE = 'freeze'
STRICT = 'strict'
EMPTY_GROUP_POLICIES = (FREEZE, STRICT)


class DataSet:
    """Data points Q_j, optionally with their parameters t_j."""

    def __init__(self, points, params=None):
        """
        Args:
            points: (m+1, k) array of data points, 1 <= k <= 3 (1-D input means k = 1)
            params: Optional (m+1, d) array of parameters (1-D input means d = 1)

        Raises:
            DegenerateInputError: If there are no points
            ShapeError: If the arrays have inconsistent shapes
        """
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0:
            raise DegenerateInputError("data set contains no points")
        if not 1 <= points.shape[1] <= 3:
            raise ShapeError(f"data points must have 1 to 3 coordinates, got {points.shape[1]}")
        if not np.all(np.isfinite(points)):
            raise DegenerateInputError("data points must be finite")
        self.points = points

        if params is not None:
            params = np.asarray(params, dtype=float)
            if params.ndim == 1:
                params = params[:, None]
            if params.ndim != 2 or params.shape[0] != points.shape[0]:
                raise ShapeError(
                    f"{points.shape[0]} points but parameter array has shape {params.shape}"
                )
            if not 1 <= params.shape[1] <= 3:
                raise ShapeError(f"parameters must have 1 to 3 coordinates, got {params.shape[1]}")
        self.params = params

    @property
    def size(self) -> int:
        """Number of data points, m + 1."""
        return self.points.shape[0]

    @property
    def point_dim(self) -> int:
        return self.points.shape[1]

    @property
    def has_params(self) -> bool:
        return self.params is not None

    def with_params(self, params) -> 'DataSet':
        return DataSet(self.points, params)

    def __repr__(self):
        pdim = self.params.shape[1] if self.has_params else None
        return f"DataSet(size={self.size}, point_dim={self.point_dim}, param_dim={pdim})"


def parameterize(data: DataSet, mode: str = CHORD, space: Optional[BasisSpace] = None) -> DataSet:
    """
    Assign parameters to data points.

    Chord mode uses normalized cumulative chord length, uniform mode equal spacing;
    both produce curve parameters spanning the space's domain ([0, 1] without a space).
    Given mode keeps the supplied parameters and validates them.

    Args:
        data: Data set (parameters are ignored except in given mode)
        mode: One of 'chord', 'uniform', 'given'
        space: Basis the parameters are meant for

    Returns:
        DataSet with parameters

    Raises:
        DegenerateInputError: Zero total chord length, too few points, or missing parameters
        DomainError: Given parameters outside the domain
        ShapeError: Curve parameterization requested for a patch or solid basis
    """
    if mode not in PARAM_MODES:
        raise ValueError(f"unknown parameterization mode '{mode}', expected one of {PARAM_MODES}")

    if mode == GIVEN:
        if not data.has_params:
            raise DegenerateInputError("given parameterization requires parameter columns in the input")
        if space is not None:
            space.check_params(data.params)
        else:
            outside = (data.params < 0.0) | (data.params > 1.0)
            if np.any(outside):
                raise DomainError(f"parameter {data.params[outside][0]!r} outside domain [0.0, 1.0]")
        return data

    if space is not None and space.dim != 1:
        raise ShapeError(f"{mode} parameterization yields curve parameters, basis is {space.dim}-D")
    lo, hi = space.domains[0] if space is not None else (0.0, 1.0)

    if mode == CHORD:
        if data.size < 2:
            raise DegenerateInputError("chord parameterization needs at least 2 points")
        chords = np.linalg.norm(np.diff(data.points, axis=0), axis=1)
        total = chords.sum()
        if total == 0.0:
            raise DegenerateInputError("all points coincide; chord length is zero")
        fractions = np.concatenate([[0.0], np.cumsum(chords) / total])
        fractions[-1] = 1.0
    else:
        fractions = np.linspace(0.0, 1.0, data.size) if data.size > 1 else np.zeros(1)

    params = lo + (hi - lo) * fractions
    if data.size > 1:
        params[-1] = hi
    logger.debug(f"Assigned {mode} parameters to {data.size} points")
    return data.with_params(params)


@dataclass(frozen=True, eq=False)
class GroupTable:
    """
    Data-point groups I_i = {j : B_i(t_j) != 0}, stored column-compressed.

    Group i holds members[indptr[i]:indptr[i+1]] with cached basis values
    values[indptr[i]:indptr[i+1]].
    """

    indptr: np.ndarray
    members: np.ndarray
    values: np.ndarray
    num_points: int

    @property
    def num_groups(self) -> int:
        return len(self.indptr) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def empty(self) -> np.ndarray:
        return self.sizes == 0

    @property
    def group_ids(self) -> np.ndarray:
        """Group index of every stored entry."""
        return np.repeat(np.arange(self.num_groups), self.sizes)

    def group(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        start, stop = self.indptr[i], self.indptr[i + 1]
        return self.members[start:stop], self.values[start:stop]

    def sums(self) -> np.ndarray:
        """Sum of cached basis values per group."""
        return np.bincount(self.group_ids, weights=self.values, minlength=self.num_groups)

    @cached_property
    def gather_matrix(self) -> csr_array:
        """Row i holds the basis values of group i at its members' positions."""
        return csr_array((self.values, self.members, self.indptr), shape=(self.num_groups, self.num_points))

    @classmethod
    def from_csc(cls, csc: csc_array) -> 'GroupTable':
        return cls(indptr=csc.indptr.copy(), members=csc.indices.copy(), values=csc.data.copy(),
                   num_points=csc.shape[0])


class CollocationMatrix:
    """Sparse (m+1) x (n+1) matrix A[j, i] = B_i(t_j), kept in both CSR and CSC form."""

    def __init__(self, csr: csr_array):
        csr = csr_array(csr)
        csr.sort_indices()
        self.csr = csr
        self.csc = csc_array(csr)
        self.csc.sort_indices()

    @classmethod
    def from_dense(cls, dense) -> 'CollocationMatrix':
        return cls(csr_array(np.asarray(dense, dtype=float)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.csr.shape

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def dot(self, P: np.ndarray) -> np.ndarray:
        """A @ P."""
        P = np.asarray(P, dtype=float)
        if P.shape[0] != self.shape[1]:
            raise ShapeError(f"A is {self.shape}, cannot multiply {P.shape}")
        return self.csr @ P

    def tdot(self, R: np.ndarray) -> np.ndarray:
        """A^T @ R, using the column-major view."""
        R = np.asarray(R, dtype=float)
        if R.shape[0] != self.shape[0]:
            raise ShapeError(f"A^T is {self.shape[::-1]}, cannot multiply {R.shape}")
        return self.csc.T @ R

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.csc.sum(axis=0)).ravel()

    def norm_inf(self) -> float:
        """Maximum absolute row sum."""
        return float(np.abs(self.csr).sum(axis=1).max()) if self.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


class WeightMatrix:
    """
    Diagonal matrix Lambda with d_i = 1 / sum_{j in I_i} B_i(t_j).

    Frozen (empty-group) indices store d_i = 0 so that their update is always zero.
    """

    def __init__(self, diagonal: np.ndarray, frozen: np.ndarray):
        self.diagonal = np.asarray(diagonal, dtype=float)
        self.frozen = np.asarray(frozen, dtype=bool)
        if self.diagonal.shape != self.frozen.shape:
            raise ShapeError("weight diagonal and frozen flags differ in length")

    @classmethod
    def from_group_sums(cls, sums: np.ndarray) -> 'WeightMatrix':
        sums = np.asarray(sums, dtype=float)
        frozen = sums <= 0.0
        diagonal = np.zeros_like(sums)
        diagonal[~frozen] = 1.0 / sums[~frozen]
        return cls(diagonal, frozen)

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Lambda @ X."""
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.size:
            raise ShapeError(f"Lambda has {self.size} rows, cannot multiply {X.shape}")
        return self.diagonal.reshape((-1,) + (1,) * (X.ndim - 1)) * X

    def toarray(self) -> np.ndarray:
        return np.diag(self.diagonal)


@dataclass(frozen=True, eq=False)
class FitProblem:
    """An assembled fitting problem: basis, data, A, Lambda and the groups."""

    space: Optional[BasisSpace]
    data: DataSet
    collocation: CollocationMatrix
    weights: WeightMatrix
    groups: GroupTable
    empty_group_policy: str = FREEZE

    @property
    def Q(self) -> np.ndarray:
        return self.data.points

    @property
    def frozen(self) -> np.ndarray:
        return self.weights.frozen

    @property
    def size(self) -> int:
        """Number of control points, n + 1."""
        return self.collocation.shape[1]


def _collocation_entries(space: BasisSpace, params: np.ndarray, workers: int = 1) -> csr_array:
    """Evaluate basis values at every parameter and pack the nonzeros into CSR form."""
    m = params.shape[0]
    if workers > 1 and m > workers:
        chunks = np.array_split(params, workers)
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="assemble") as executor:
            parts = list(executor.map(space.tensor_basis, chunks))
        cols = np.concatenate([c for c, _ in parts])
        values = np.concatenate([v for _, v in parts])
    else:
        cols, values = space.tensor_basis(params)

    rows = np.repeat(np.arange(m), cols.shape[1])
    cols = cols.ravel()
    values = values.ravel()
    # Only structural zeros from the recursion are dropped.
    keep = values != 0.0
    return csr_array((values[keep], (rows[keep], cols[keep])), shape=(m, space.size))


def _checked_params(space: BasisSpace, data: DataSet) -> np.ndarray:
    if not data.has_params:
        raise DegenerateInputError("data set has no parameters; run parameterize first")
    return space.check_params(data.params)


def build_groups(space: BasisSpace, data: DataSet, workers: int = 1) -> GroupTable:
    """
    Classify data points into groups by basis support.

    Args:
        space: Basis space
        data: Parameterized data set
        workers: Number of threads used to evaluate the basis

    Returns:
        GroupTable; empty groups are recorded, not rejected
    """
    params = _checked_params(space, data)
    return GroupTable.from_csc(csc_array(_collocation_entries(space, params, workers)))


def assemble(space: BasisSpace, data: DataSet, empty_group_policy: str = FREEZE,
             workers: int = 1) -> FitProblem:
    """
    Build the collocation matrix A, weight matrix Lambda and group table.

    Args:
        space: Basis space
        data: Parameterized data set
        empty_group_policy: 'freeze' keeps uncovered control points fixed,
                            'strict' rejects them
        workers: Number of threads used to evaluate the basis

    Returns:
        FitProblem

    Raises:
        SingularAssemblyError: If a group is empty and the policy is strict
    """
    if empty_group_policy not in EMPTY_GROUP_POLICIES:
        raise ValueError(f"unknown empty-group policy '{empty_group_policy}'")
    params = _checked_params(space, data)

    if data.size < space.size:
        logger.warning(
            f"{data.size} data points for {space.size} control points; "
            f"least-squares fitting expects n <= m"
        )

    collocation = CollocationMatrix(_collocation_entries(space, params, workers))
    groups = GroupTable.from_csc(collocation.csc)
    weights = WeightMatrix.from_group_sums(groups.sums())

    frozen = np.flatnonzero(weights.frozen)
    if len(frozen):
        if empty_group_policy == STRICT:
            raise SingularAssemblyError(frozen)
        logger.warning(f"{len(frozen)} control point(s) have empty groups and will stay frozen")

    logger.info(
        f"Assembled {collocation.shape[0]}x{collocation.shape[1]} collocation matrix "
        f"({collocation.nnz} nonzeros, {space.dim}-D basis, degrees {space.degrees})"
    )
    return FitProblem(space=space, data=data, collocation=collocation, weights=weights,
                      groups=groups, empty_group_policy=empty_group_policy)


def from_collocation(A, Q, empty_group_policy: str = FREEZE) -> FitProblem:
    """
    Wrap an explicit collocation matrix and data matrix as a FitProblem.

    Used for hand-built systems that have no basis space behind them.

    Args:
        A: Dense array, scipy sparse matrix or CollocationMatrix, (m+1) x (n+1)
        Q: Data matrix with m+1 rows
        empty_group_policy: As in assemble

    Returns:
        FitProblem with space set to None
    """
    if isinstance(A, CollocationMatrix):
        collocation = A
    elif issparse(A):
        collocation = CollocationMatrix(csr_array(A, dtype=float))
    else:
        collocation = CollocationMatrix.from_dense(A)
    data = DataSet(Q)
    if data.size != collocation.shape[0]:
        raise ShapeError(f"A has {collocation.shape[0]} rows but Q has {data.size}")
    groups = GroupTable.from_csc(collocation.csc)
    weights = WeightMatrix.from_group_sums(groups.sums())
    if empty_group_policy == STRICT and weights.frozen.any():
        raise SingularAssemblyError(np.flatnonzero(weights.frozen))
    return FitProblem(space=None, data=data, collocation=collocation, weights=weights,
                      groups=groups, empty_group_policy=empty_group_policy)
