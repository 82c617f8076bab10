"""B-spline bases and the unified control-point form P(t) = sum_i P_i B_i(t)."""

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, IndexRangeError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


class KnotVector:
    """Nondecreasing knot sequence together with a polynomial degree."""

    def __init__(self, knots: ArrayLike, degree: int):
        """
        Initialize and validate a knot vector.

        Args:
            knots: Nondecreasing sequence of parameter values
            degree: Polynomial degree (nonnegative)

        Raises:
            ValueError: If the knots are not a valid knot vector for the degree
        """
        if isinstance(degree, bool) or int(degree) != degree or degree < 0:
            raise ValueError(f"degree must be a nonnegative integer, got {degree!r}")
        self.degree = int(degree)

        knots = np.array(knots, dtype=float).ravel()
        if not np.all(np.isfinite(knots)):
            raise ValueError("knots must be finite")
        if len(knots) < 2 * (self.degree + 1):
            raise ValueError(
                f"degree {self.degree} needs at least {2 * (self.degree + 1)} knots, got {len(knots)}"
            )
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if not knots[self.degree] < knots[len(knots) - self.degree - 1]:
            raise ValueError("knot vector has an empty domain")
        knots.setflags(write=False)
        self.knots = knots

    @classmethod
    def clamped_uniform(cls, count: int, degree: int, lo: float = 0.0, hi: float = 1.0) -> 'KnotVector':
        """
        Build a uniform knot vector with Bezier end conditions.

        Args:
            count: Number of basis functions (control points) in this direction
            degree: Polynomial degree
            lo: Left end of the domain
            hi: Right end of the domain

        Returns:
            KnotVector whose end knots repeat degree+1 times
        """
        if count < degree + 1:
            raise ValueError(f"degree {degree} needs at least {degree + 1} control points, got {count}")
        interior = np.linspace(lo, hi, count - degree + 1)[1:-1]
        knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
        return cls(knots, degree)

    @property
    def count(self) -> int:
        """Number of basis functions: knot count - degree - 1."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[self.count])

    @property
    def is_clamped(self) -> bool:
        p = self.degree
        return bool(np.all(self.knots[:p + 1] == self.knots[0]) and np.all(self.knots[-p - 1:] == self.knots[-1]))

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, count={self.count}, knots={self.knots.tolist()})"

    def check_domain(self, u: np.ndarray) -> None:
        lo, hi = self.domain
        outside = (u < lo) | (u > hi) | ~np.isfinite(u)
        if np.any(outside):
            bad = u[outside][0]
            raise DomainError(f"parameter {bad!r} outside basis domain [{lo}, {hi}]")

    def find_spans(self, u: np.ndarray) -> np.ndarray:
        """
        Locate the knot span of each parameter.

        The span s satisfies knots[s] <= u < knots[s+1]. At the right end of the
        domain the last nonempty span is used, which gives left-limit values there.
        """
        u = np.asarray(u, dtype=float)
        spans = np.searchsorted(self.knots, u, side='right') - 1
        hi = self.domain[1]
        last = int(np.searchsorted(self.knots, hi, side='left')) - 1
        return np.where(u >= hi, last, spans)

    def nonzero_basis(self, u: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluate the degree+1 basis functions that can be nonzero at each parameter.

        Args:
            u: Scalar or 1-D array of parameters inside the domain

        Returns:
            tuple: (spans, values) where values[j, r] = N_{spans[j]-degree+r}(u[j])

        Raises:
            DomainError: If a parameter lies outside the domain
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        self.check_domain(u)
        p = self.degree
        knots = self.knots
        spans = self.find_spans(u)

        m = len(u)
        values = np.zeros((m, p + 1))
        values[:, 0] = 1.0
        left = np.zeros((m, p + 1))
        right = np.zeros((m, p + 1))
        # Triangular Cox-de Boor scheme; denominators are positive on nonempty spans.
        for j in range(1, p + 1):
            left[:, j] = u - knots[spans + 1 - j]
            right[:, j] = knots[spans + j] - u
            saved = np.zeros(m)
            for r in range(j):
                temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
                values[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            values[:, j] = saved
        return spans, values

    def greville(self) -> np.ndarray:
        """Greville abscissae, one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        windows = np.lib.stride_tricks.sliding_window_view(self.knots[1:-1], p)
        return windows.mean(axis=1)[:self.count]


def basis_eval(kv: KnotVector, i: int, u: ArrayLike):
    """
    Evaluate the single basis function N_i at u.

    Args:
        kv: Knot vector
        i: Basis index, 0 <= i <= count - 1
        u: Scalar or array of parameters

    Returns:
        float for scalar u, ndarray otherwise

    Raises:
        IndexRangeError: If i is out of range
        DomainError: If u is outside the domain
    """
    if not 0 <= i < kv.count:
        raise IndexRangeError(f"basis index {i} out of range 0..{kv.count - 1}")
    scalar = np.ndim(u) == 0
    spans, values = kv.nonzero_basis(u)
    offset = i - (spans - kv.degree)
    inside = (offset >= 0) & (offset <= kv.degree)
    picked = values[np.arange(len(spans)), np.clip(offset, 0, kv.degree)]
    result = np.where(inside, picked, 0.0)
    return float(result[0]) if scalar else result


class BasisSpace:
    """
    Tensor-product B-spline basis of dimensionality 1 (curve), 2 (patch) or 3 (solid).

    Directions are ordered (u, v, w). Flat control indices follow the unified
    form: v varies fastest, then u, then w.
    """

    def __init__(self, knot_vectors: Sequence[KnotVector]):
        knot_vectors = tuple(knot_vectors)
        if not 1 <= len(knot_vectors) <= 3:
            raise ValueError(f"dimensionality must be 1, 2 or 3, got {len(knot_vectors)}")
        for kv in knot_vectors:
            if not isinstance(kv, KnotVector):
                raise TypeError(f"expected KnotVector, got {type(kv).__name__}")
        self.knot_vectors = knot_vectors

    @classmethod
    def clamped_uniform(cls, counts: Sequence[int], degrees: Union[int, Sequence[int]] = 3,
                        domain: Tuple[float, float] = (0.0, 1.0)) -> 'BasisSpace':
        """
        Build a space with uniform clamped knots in every direction.

        Args:
            counts: Control-point count per direction (u, v, w)
            degrees: A single degree for all directions or one per direction
            domain: Parameter interval shared by all directions

        Returns:
            BasisSpace
        """
        counts = list(counts)
        if isinstance(degrees, int):
            degrees = [degrees] * len(counts)
        degrees = list(degrees)
        if len(degrees) != len(counts):
            raise ValueError(f"got {len(degrees)} degrees for {len(counts)} directions")
        lo, hi = domain
        return cls([KnotVector.clamped_uniform(c, p, lo, hi) for c, p in zip(counts, degrees)])

    @property
    def dim(self) -> int:
        return len(self.knot_vectors)

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(kv.count for kv in self.knot_vectors)

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def domains(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(kv.domain for kv in self.knot_vectors)

    @property
    def size(self) -> int:
        """Total number of control points, n + 1."""
        return int(np.prod(self.counts))

    @property
    def support_size(self) -> int:
        """Number of basis functions that can be nonzero at one parameter."""
        return int(np.prod([p + 1 for p in self.degrees]))

    def __eq__(self, other):
        if not isinstance(other, BasisSpace):
            return NotImplemented
        return self.knot_vectors == other.knot_vectors

    def __hash__(self):
        return hash(self.knot_vectors)

    def __repr__(self):
        return f"BasisSpace(dim={self.dim}, counts={self.counts}, degrees={self.degrees})"

    def check_params(self, params: ArrayLike) -> np.ndarray:
        """
        Coerce parameters to an (m, dim) array and validate them against the domain.

        Raises:
            ShapeError: If the parameter dimensionality does not match
            DomainError: If a parameter lies outside its direction's domain
        """
        params = np.asarray(params, dtype=float)
        if params.ndim == 0 or (params.ndim == 1 and self.dim == 1):
            params = params.reshape(-1, 1)
        elif params.ndim == 1:
            params = params.reshape(1, -1)
        if params.ndim != 2 or params.shape[1] != self.dim:
            raise ShapeError(f"parameters have shape {params.shape}, expected (m, {self.dim})")
        for d, kv in enumerate(self.knot_vectors):
            kv.check_domain(params[:, d])
        return params

    def tensor_basis(self, params: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        """
        Evaluate all potentially nonzero tensor-product basis functions.

        Args:
            params: (m, dim) parameters

        Returns:
            tuple: (cols, values), both (m, support_size); cols holds flat indices
        """
        params = self.check_params(params)
        m = params.shape[0]
        values = np.ones((m, 1))
        index_sets = []
        for d, kv in enumerate(self.knot_vectors):
            spans, vals = kv.nonzero_basis(params[:, d])
            k = kv.degree + 1
            idx = spans[:, None] - kv.degree + np.arange(k)
            prev = values.shape[1]
            values = (values[:, :, None] * vals[:, None, :]).reshape(m, -1)
            index_sets = [np.repeat(s, k, axis=1) for s in index_sets]
            index_sets.append(np.tile(idx, (1, prev)))
        return flatten_index(self, index_sets), values

    def greville_points(self) -> np.ndarray:
        """Greville abscissae of every control point, (size, dim), in flat order."""
        per_dir = unflatten_index(self, np.arange(self.size))
        return np.column_stack([kv.greville()[idx] for kv, idx in zip(self.knot_vectors, per_dir)])


def flatten_index(space: BasisSpace, indices: Sequence):
    """
    Map per-direction indices (iu[, iv[, iw]]) to the flat control index.

    Patch: i = iu * c_v + iv. Solid: i = iw * c_u * c_v + iu * c_v + iv.
    Accepts integers or integer arrays.

    Raises:
        IndexRangeError: If any index is out of range for its direction
    """
    indices = list(indices)
    if len(indices) != space.dim:
        raise IndexRangeError(f"expected {space.dim} indices, got {len(indices)}")
    arrays = [np.asarray(ix) for ix in indices]
    for d, (ix, c) in enumerate(zip(arrays, space.counts)):
        if np.any(ix < 0) or np.any(ix >= c):
            raise IndexRangeError(f"index {ix.tolist()} out of range 0..{c - 1} in direction {d}")

    if space.dim == 1:
        flat = arrays[0]
    elif space.dim == 2:
        c_v = space.counts[1]
        flat = arrays[0] * c_v + arrays[1]
    else:
        c_u, c_v, _ = space.counts
        flat = arrays[2] * (c_u * c_v) + arrays[0] * c_v + arrays[1]
    return int(flat) if flat.ndim == 0 else flat


def unflatten_index(space: BasisSpace, i) -> Tuple:
    """
    Map a flat control index back to per-direction indices (iu[, iv[, iw]]).

    Patch: iu = floor(i / c_v), iv = i mod c_v.
    Solid: iw = floor(i / (c_u c_v)), iu = floor((i mod c_u c_v) / c_v),
    iv = (i mod c_u c_v) mod c_v.

    Raises:
        IndexRangeError: If i is outside 0..n
    """
    flat = np.asarray(i)
    if np.any(flat < 0) or np.any(flat >= space.size):
        raise IndexRangeError(f"flat index {flat.tolist()} out of range 0..{space.size - 1}")

    if space.dim == 1:
        parts = (flat,)
    elif space.dim == 2:
        c_v = space.counts[1]
        parts = (flat // c_v, flat % c_v)
    else:
        c_u, c_v, _ = space.counts
        rem = flat % (c_u * c_v)
        parts = (rem // c_v, rem % c_v, flat // (c_u * c_v))
    if flat.ndim == 0:
        return tuple(int(p) for p in parts)
    return parts


def unified_basis_eval(space: BasisSpace, i: int, t: ArrayLike) -> float:
    """
    Evaluate B_i(t), the product of per-direction basis values.

    Args:
        space: Basis space
        i: Flat control index
        t: One parameter point with space.dim coordinates

    Returns:
        float: B_i(t) >= 0
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (space.dim,):
        raise ShapeError(f"parameter point has shape {t.shape}, expected ({space.dim},)")
    value = 1.0
    for kv, idx, coord in zip(space.knot_vectors, unflatten_index(space, i), t):
        value *= basis_eval(kv, idx, float(coord))
    return value


def evaluate_form(space: BasisSpace, P: np.ndarray, t: ArrayLike) -> np.ndarray:
    """
    Evaluate P(t) = sum_i P_i B_i(t).

    Args:
        space: Basis space
        P: Control matrix with space.size rows (or a vector of length space.size)
        t: A single parameter point or an (m, dim) array of them

    Returns:
        ndarray: One data-space point, or an (m, k) array for m parameters

    Raises:
        ShapeError: If P does not have one row per control point
    """
    P = np.asarray(P, dtype=float)
    vector = P.ndim == 1
    if vector:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] != space.size:
        raise ShapeError(f"control matrix has shape {P.shape}, expected ({space.size}, k)")

    t_arr = np.asarray(t, dtype=float)
    single = t_arr.ndim == 0 or (t_arr.ndim == 1 and space.dim > 1)
    cols, values = space.tensor_basis(t_arr)
    out = np.einsum('mk,mkc->mc', values, P[cols])
    if vector:
        out = out[:, 0]
    return out[0] if single else out
