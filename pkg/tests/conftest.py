import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from bagdata import generate_synthetic  # noqa: E402
from wsipipe import SyntheticPyramidConfig, generate_pyramid_corpus  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size training protocol (minutes)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_bags():
    return generate_synthetic({"num_bags": 30, "n_range": (4, 10), "embed_dim": 6,
                               "class_separation": 4.0, "positive_instance_rate": 0.3, "seed": 3})


@pytest.fixture(scope="session")
def pyramid_corpus(tmp_path_factory):
    """Three small slides: 512 px base at 20x, so 10x is 256 px and 5x is 128 px."""
    out = tmp_path_factory.mktemp("corpus")
    records = generate_pyramid_corpus(
        SyntheticPyramidConfig(num_slides=3, base_size=512, blobs=3, artifacts=2, seed=5), out)
    return out, records
