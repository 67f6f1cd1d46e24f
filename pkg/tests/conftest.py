import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240807)


@pytest.fixture(scope="session")
def earth():
    from eqnav.kinematics import EarthModel

    return EarthModel()
