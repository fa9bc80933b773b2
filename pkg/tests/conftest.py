import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def cfg():
    from seastate.config import ScenarioConfig

    return ScenarioConfig()


@pytest.fixture
def head_vessel():
    from seastate.wave_env import reference_vessel

    return reference_vessel()


@pytest.fixture
def beam_vessel():
    from seastate.wave_env import reference_vessel

    return reference_vessel(beta=math.pi / 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
