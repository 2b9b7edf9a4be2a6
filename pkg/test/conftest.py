import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.core.tensor import DenseTensor


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def counting_tensor():
    """2 x 3 x 4 tensor whose first-index-fastest flat data is 1..24"""
    return DenseTensor.from_flat((2, 3, 4), np.arange(1, 25, dtype=float))
