import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from models.schemas import GridSpec, ModelParams  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def massless():
    return ModelParams(a=0.0, lam=0.0, m=0.0)


@pytest.fixture
def gapped():
    return ModelParams(a=0.0, lam=0.0, m=8.0)


@pytest.fixture
def quick_grid():
    """Coarse grid used by the quick acceptance level"""
    return GridSpec(n_q=48, n_theta=32)
