import numpy as np
import pytest

from stagebank import EnergyConfig, OptimizerConfig, StreamSpec, generate_stream


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_stream():
    spec = StreamSpec(num_stages=3, classes_per_stage=3, feature_dim=6, train_per_class=20,
                      test_per_class=10, separation=5.0, noise=0.4, offset=4.0, seed=7)
    return generate_stream(spec)


@pytest.fixture
def fast_opt():
    return OptimizerConfig(epochs=4, batch_size=16, seed=0)


@pytest.fixture
def cfg():
    return EnergyConfig()
