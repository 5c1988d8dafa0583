"""Train / validation / test splits regenerated from the data section of the config."""
from dataclasses import dataclass
from typing import Dict, List

from spair.core.rng import Rng
from spair.schemas.reports import ManifestEntry
from spair.schemas.run import DataConfig
from spair.services.losses import DEFAULT_MASK_THRESHOLD
from spair.services.synthdata import Sample, make_dataset

SPLITS = ("train", "val", "test")


@dataclass
class Split:
    samples: List[Sample]
    manifest: List[ManifestEntry]


def split_seeds(seed: int) -> Dict[str, int]:
    rng = Rng(seed)
    return {name: rng.split() for name in SPLITS}


def build_splits(data: DataConfig, tau: float = DEFAULT_MASK_THRESHOLD, workers: int = 0,
                 only=SPLITS) -> Dict[str, Split]:
    sizes = {"train": data.train_samples, "val": data.val_samples, "test": data.test_samples}
    seeds = split_seeds(data.seed)
    out = {}
    for name in only:
        samples, manifest = make_dataset(sizes[name], data.kinds, seeds[name], data.image_size,
                                         data.image_size, data.severity, tau, workers)
        out[name] = Split(samples, manifest)
    return out
