"""Deterministic synthetic data sets, including the singular regimes (holes, clustered parameters)."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .fitting import DataSet

logger = logging.getLogger(__name__)

# Generator kinds
CURVE_SAMPLES = 'curve-samples'
GRID_SAMPLES = 'grid-samples'
SOLID_SAMPLES = 'solid-samples'
HOLE_PUNCHED = 'hole-punched'
CLUSTERED_PARAMS = 'clustered-params'
KINDS = (CURVE_SAMPLES, GRID_SAMPLES, SOLID_SAMPLES, HOLE_PUNCHED, CLUSTERED_PARAMS)

FIELDS = ('wave', 'sphere', 'polynomial')

_FIXED_DIM = {CURVE_SAMPLES: 1, GRID_SAMPLES: 2, SOLID_SAMPLES: 3}


@dataclass
class SyntheticSpec:
    """
    Generator settings.

    samples holds per-direction sample counts; for clustered-params they are the
    distinct parameter values per direction, each repeated cluster_multiplicity
    times. hole is a closed parameter box, one (lo, hi) pair per direction.
    """

    kind: str
    samples: Tuple[int, ...] = (100,)
    hole: Optional[Tuple[Tuple[float, float], ...]] = None
    cluster_multiplicity: int = 1
    noise: float = 0.0
    seed: int = 0
    field: str = 'wave'
    scatter: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown generator kind '{self.kind}', expected one of {KINDS}")
        if isinstance(self.samples, int):
            self.samples = (self.samples,)
        self.samples = tuple(int(s) for s in self.samples)
        if not 1 <= len(self.samples) <= 3 or any(s < 1 for s in self.samples):
            raise ConfigError(f"samples must be 1 to 3 positive counts, got {self.samples}")
        fixed = _FIXED_DIM.get(self.kind)
        if fixed is not None and len(self.samples) not in (1, fixed):
            raise ConfigError(f"{self.kind} takes 1 or {fixed} sample counts, got {len(self.samples)}")
        if fixed is not None and len(self.samples) == 1:
            self.samples = self.samples * fixed
        if self.field not in FIELDS:
            raise ConfigError(f"unknown field '{self.field}', expected one of {FIELDS}")
        if int(self.cluster_multiplicity) < 1:
            raise ConfigError("cluster_multiplicity must be at least 1")
        self.cluster_multiplicity = int(self.cluster_multiplicity)
        if self.kind == CLUSTERED_PARAMS and self.cluster_multiplicity < 2:
            raise ConfigError("clustered-params needs cluster_multiplicity >= 2")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")
        if self.kind == HOLE_PUNCHED:
            if self.hole is None:
                self.hole = ((0.3, 0.7),) * self.dim
            self.hole = tuple((float(lo), float(hi)) for lo, hi in self.hole)
            if len(self.hole) != self.dim:
                raise ConfigError(f"hole needs {self.dim} (lo, hi) pairs, got {len(self.hole)}")
            if any(lo > hi for lo, hi in self.hole):
                raise ConfigError(f"hole bounds must satisfy lo <= hi, got {self.hole}")

    @property
    def dim(self) -> int:
        """Parameter dimensionality."""
        return len(self.samples)


def field_values(field: str, params: np.ndarray) -> np.ndarray:
    """
    Evaluate a smooth analytic vector field at parameters.

    Args:
        field: 'wave', 'sphere' or 'polynomial' (cubic in each parameter)
        params: (m, d) parameters in [0, 1]^d, d <= 3

    Returns:
        ndarray: (m, 3) points
    """
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    padded = np.zeros((params.shape[0], 3))
    padded[:, :params.shape[1]] = params
    u, v, w = padded.T

    if field == 'wave':
        x = np.cos(np.pi * u) * (1.0 + 0.3 * v)
        y = np.sin(np.pi * u) * (1.0 + 0.3 * v)
        z = 0.5 * w + 0.2 * np.sin(2.0 * np.pi * v) + 0.1 * u
    elif field == 'sphere':
        radius = 0.5 + 0.5 * w
        theta = 2.0 * np.pi * u
        phi = np.pi * (0.1 + 0.8 * v)
        x = radius * np.cos(theta) * np.sin(phi)
        y = radius * np.sin(theta) * np.sin(phi)
        z = radius * np.cos(phi)
    elif field == 'polynomial':
        x = u + 0.5 * v ** 2 - w ** 3 / 3.0
        y = v - u * w + 0.25 * u ** 3
        z = w + u * v * w
    else:
        raise ConfigError(f"unknown field '{field}'")
    return np.column_stack([x, y, z])


def _axis(count: int, rng: np.random.Generator, scatter: bool) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    if scatter:
        inner = np.sort(rng.uniform(0.0, 1.0, count - 2))
        return np.concatenate([[0.0], inner, [1.0]])
    return np.linspace(0.0, 1.0, count)


def _grid(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor grid of parameters; the last direction varies fastest."""
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.column_stack([m.ravel() for m in mesh])


def synthesize(spec: SyntheticSpec) -> DataSet:
    """
    Generate a parameterized data set.

    Args:
        spec: Generator settings

    Returns:
        DataSet with parameters in [0, 1]^d

    Raises:
        DegenerateInputError: If the hole covers the whole domain or removes every sample
    """
    rng = np.random.default_rng(spec.seed)

    if spec.kind == CLUSTERED_PARAMS:
        distinct = _grid([np.linspace(0.0, 1.0, c) if c > 1 else np.zeros(1) for c in spec.samples])
        params = np.repeat(distinct, spec.cluster_multiplicity, axis=0)
    elif spec.kind == CURVE_SAMPLES and spec.scatter:
        params = _axis(spec.samples[0], rng, True)[:, None]
    else:
        params = _grid([_axis(c, rng, spec.scatter) for c in spec.samples])

    if spec.kind == HOLE_PUNCHED:
        bounds = np.array(spec.hole)
        if np.all(bounds[:, 0] <= 0.0) and np.all(bounds[:, 1] >= 1.0):
            raise DegenerateInputError(f"hole {spec.hole} covers the whole parameter domain")
        inside = np.all((params >= bounds[:, 0]) & (params <= bounds[:, 1]), axis=1)
        params = params[~inside]
        if len(params) == 0:
            raise DegenerateInputError(f"hole {spec.hole} removes every sample")
        logger.debug(f"Hole removed {int(inside.sum())} of {len(inside)} samples")

    points = field_values(spec.field, params)
    if spec.noise > 0:
        points = points + rng.normal(scale=spec.noise, size=points.shape)

    logger.info(f"Synthesized {len(params)} {spec.kind} samples ({spec.dim}-D parameters, seed {spec.seed})")
    return DataSet(points, params)
