"""Save and rebuild networks through SPTN checkpoints."""
from pathlib import Path
from typing import Optional, Tuple, Union

from spair.core.errors import ConfigError
from spair.models.networks import LocalizationNet, RestorationNet
from spair.repositories import checkpoint
from spair.services.optim import AdamState

Net = Union[LocalizationNet, RestorationNet]


def save_net(path: Path, net: Net, adam: Optional[AdamState] = None) -> None:
    meta = checkpoint.CheckpointMeta(role=net.role, spec=net.spec,
                                     iteration=adam.step if adam is not None else 0,
                                     loc_channels=getattr(net, "loc_channels", None))
    checkpoint.save_model(path, net.store.state_dict(), meta, adam)


def load_net(path: Path, expect: Optional[str] = None) -> Tuple[Net, Optional[AdamState]]:
    params, meta, adam = checkpoint.load_model(path)
    if expect is not None and meta.role != expect:
        raise ConfigError(f"{path} holds a {meta.role} checkpoint, expected {expect}")
    if meta.role == "localizer":
        net: Net = LocalizationNet(meta.spec)
    else:
        net = RestorationNet(meta.spec, meta.loc_channels)
    net.store.load_state_dict(params)
    return net, adam
