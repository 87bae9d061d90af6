import numpy as np
import pytest

from forcm import LabelMask, MeanShiftParams, Raster


@pytest.fixture
def rng():
    return np.random.default_rng(20240712)


@pytest.fixture
def small_params():
    # tight merge floor so tiny fixtures keep their structure
    return MeanShiftParams(min_segment_size=1)


@pytest.fixture
def two_region_image():
    """8x8, 3 bands: left half 0.0, right half 1.0."""
    arr = np.zeros((8, 8, 3), dtype=np.float32)
    arr[:, 4:, :] = 1.0
    return Raster(arr)


@pytest.fixture
def checker_mask():
    return LabelMask(np.indices((6, 6)).sum(axis=0) % 2)
