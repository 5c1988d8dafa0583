"""Small builders shared across test modules."""
import numpy as np

from spair.core.rng import Rng


def random_mask(rng: Rng, shape, density: float) -> np.ndarray:
    """Binary f64 mask with at least one 1 and one 0 per sample."""
    mask = (rng.random_array(shape) < density).astype(np.float64)
    flat = mask.reshape(mask.shape[0], -1)
    flat[:, 0], flat[:, -1] = 1.0, 0.0
    return mask


TINY_CONFIG = """\
# toy run: two levels, 16x16 images
train.iterations_per_epoch = 2
train.epochs = 1
train.batch_size = 2
train.patch_size = 16
train.log_interval = 1
train.val_interval = 2
net.levels = 2
net.base_channels = 4
net.dense_block_depth = 1
net.growth = 2
net.sc_growth = 2
data.kinds = blob,streak
data.image_size = 16
data.train_samples = 3
data.val_samples = 1
data.test_samples = 2
"""
