"""Shared builders for test systems."""

import numpy as np
import pytest

from lspiafit.fitting import DataSet, assemble
from lspiafit.splinecore import BasisSpace
from lspiafit.synthetic import SyntheticSpec, synthesize

GRID_KINDS = {1: 'curve-samples', 2: 'grid-samples', 3: 'solid-samples'}


def clustered_curve_problem(noise=0.05, seed=3):
    """Cubic curve, 10 controls, 40 samples on 8 distinct parameters (rank 8)."""
    space = BasisSpace.clamped_uniform([10], 3)
    data = synthesize(SyntheticSpec(kind='clustered-params', samples=(8,), cluster_multiplicity=5,
                                    noise=noise, seed=seed))
    return assemble(space, data)


def full_rank_curve_problem(count=8, degree=3, samples=61, seed=0):
    """Curve fit with well-spread samples and a nonsingular normal matrix."""
    space = BasisSpace.clamped_uniform([count], degree)
    data = synthesize(SyntheticSpec(kind='curve-samples', samples=(samples,), noise=0.02, seed=seed))
    return assemble(space, data)


def hole_patch_problem():
    """8x8 bicubic patch; the closed box [0, 0.21]^2 leaves the corner control point uncovered."""
    space = BasisSpace.clamped_uniform([8, 8], 3)
    data = synthesize(SyntheticSpec(kind='hole-punched', samples=(31, 31), hole=((0.0, 0.21), (0.0, 0.21)),
                                    field='wave', noise=0.01, seed=5))
    return assemble(space, data)


def corpus_systems():
    """
    Assembled systems of every kind: full-rank grids, clustered parameters and
    corner holes, for dimensionality 1 to 3 and degree 1 to 3.

    Sample grids put five samples on every knot span per direction, so the only
    rank loss comes from repeated parameters or uncovered control points.
    """
    systems = []
    for dim in (1, 2, 3):
        for degree in (1, 2, 3):
            count = degree + 3
            span = 1.0 / (count - degree)
            samples = (4 * (count - degree) + 1,) * dim
            space = BasisSpace.clamped_uniform([count] * dim, degree)

            full = synthesize(SyntheticSpec(kind=GRID_KINDS[dim], samples=samples, field='sphere', seed=dim))
            systems.append((f"full-{dim}d-p{degree}", assemble(space, full)))

            clustered = synthesize(SyntheticSpec(kind='clustered-params', samples=(count - 1,) * dim,
                                                 cluster_multiplicity=2, noise=0.01, seed=degree))
            systems.append((f"clustered-{dim}d-p{degree}", assemble(space, clustered)))

            holed = synthesize(SyntheticSpec(kind='hole-punched', samples=samples,
                                             hole=((0.0, span + 0.01),) * dim, field='wave', seed=dim + degree))
            systems.append((f"hole-{dim}d-p{degree}", assemble(space, holed)))
    return systems


@pytest.fixture(scope='session')
def corpus():
    return corpus_systems()


@pytest.fixture
def clustered_problem():
    return clustered_curve_problem()


@pytest.fixture
def full_rank_problem():
    return full_rank_curve_problem()


@pytest.fixture
def hole_problem():
    return hole_patch_problem()


@pytest.fixture
def small_dataset():
    t = np.linspace(0.0, 1.0, 25)
    return DataSet(np.column_stack([t, np.sin(2 * np.pi * t), t ** 2]), t)
