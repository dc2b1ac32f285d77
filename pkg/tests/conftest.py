import numpy as np
import pytest

from fedvad.dataset import SyntheticSpec, synthesize_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """A small synthetic train/test pair shared by fast tests."""
    spec = SyntheticSpec(
        num_videos=40, anomaly_fraction=0.2, feature_dim=16, seed=123
    )
    return synthesize_dataset(spec)


@pytest.fixture()
def rng():
    return np.random.default_rng(99)
