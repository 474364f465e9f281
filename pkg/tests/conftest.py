import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from builtin_examples import CURVE_FACTORS, CURVE_VALUES, KNOTS, SURFACE_FACTORS, SURFACE_TABLE
from factor_lang import build_factor_set_1d, build_factor_set_2d
from hvrfif_1d import build_system_1d
from hvrfif_2d import build_system_2d
from partition import build_partition_1d, build_partition_2d, validate_dataset_1d, validate_dataset_2d

QUADRANTS = [[0, 2, 0, 2], [2, 4, 0, 2], [0, 2, 2, 4], [2, 4, 2, 4]]
QUADRANT_GAMMA = [[1 + (i >= 2) + 2 * (j >= 2) for j in range(4)] for i in range(4)]


@pytest.fixture
def curve_dataset():
    return validate_dataset_1d(KNOTS, CURVE_VALUES, [0.0] * 5)


@pytest.fixture
def partition_f1(curve_dataset):
    """n=4, domains [x_0, x_2] and [x_2, x_4], gamma (1, 1, 2, 2)"""
    return build_partition_1d(curve_dataset, [[0, 2], [2, 4]], [1, 1, 2, 2])


@pytest.fixture
def curve_system(curve_dataset, partition_f1):
    """Builds the 1D system for a named builtin factor pool"""
    def build(name):
        factors = build_factor_set_1d(curve_dataset.xs, CURVE_FACTORS[name])
        return build_system_1d(curve_dataset, partition_f1, factors)
    return build


@pytest.fixture
def surface_dataset():
    return validate_dataset_2d(KNOTS, KNOTS, SURFACE_TABLE, [[0.0] * 5 for _ in range(5)])


@pytest.fixture
def quadrant_partition(surface_dataset):
    return build_partition_2d(surface_dataset, QUADRANTS, QUADRANT_GAMMA)


@pytest.fixture
def surface_system(surface_dataset, quadrant_partition):
    def build(name):
        factors = build_factor_set_2d(surface_dataset.xs, surface_dataset.ys, SURFACE_FACTORS[name], samples=33)
        return build_system_2d(surface_dataset, quadrant_partition, factors)
    return build
