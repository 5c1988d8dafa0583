"""Shared fixtures: toy-sized specs, configs and datasets."""
import pytest

from spair.core.rng import Rng
from spair.schemas.net import NetSpec
from spair.schemas.run import DataConfig, TrainConfig
from spair.services.synthdata import make_dataset


@pytest.fixture
def rng():
    return Rng(2024)


@pytest.fixture
def tiny_spec():
    """Two-level trunk small enough for per-test training runs."""
    return NetSpec(levels=2, base_channels=4, dense_block_depth=1, growth=2, sc_growth=2)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        iterations_per_epoch=2,
        epochs=2,
        batch_size=2,
        patch_size=16,
        log_interval=1,
        val_interval=2,
        seed=5,
    )


@pytest.fixture
def tiny_data():
    return DataConfig(kinds=["blob"], seed=11, image_size=16, train_samples=3, val_samples=1,
                      test_samples=2)


@pytest.fixture
def blob_samples():
    samples, _ = make_dataset(4, ["blob"], seed=99, h=16, w=16)
    return samples
