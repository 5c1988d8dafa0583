"""Parameter store and the building blocks the networks are assembled from.

Blocks declare their parameters by stable dotted path (``enc.l1.dense.3.conv.weight``)
when constructed; values are allocated later by :meth:`ParamStore.initialize`, so a
network can be planned and its parameters counted without allocating anything.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable, parameter
from spair.core.errors import StructuralError
from spair.core.rng import Rng
from spair.ops import guided

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ParamSpec:
    path: str
    shape: Tuple[int, ...]
    fan_in: int
    role: str = "weight"  # weight | bias | identity

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class ParamStore:
    """Ordered path -> parameter mapping."""

    def __init__(self):
        self.specs: Dict[str, ParamSpec] = {}
        self.values: Dict[str, Variable] = {}

    def declare(self, path: str, shape: Sequence[int], fan_in: int, role: str = "weight") -> str:
        if path in self.specs:
            raise StructuralError(f"parameter path declared twice: {path}")
        self.specs[path] = ParamSpec(path, tuple(int(s) for s in shape), int(fan_in), role)
        return path

    def initialize(self, rng: Rng, dtype=np.float32) -> None:
        """Fan-in scaled uniform weights (leaky-rectifier gain), zero biases, identity mixers."""
        gain = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE ** 2))
        for path, spec in self.specs.items():
            if spec.role == "bias":
                value = np.zeros(spec.shape, dtype=dtype)
            elif spec.role == "identity":
                value = np.eye(spec.shape[0], dtype=dtype)
            else:
                bound = gain * math.sqrt(3.0 / spec.fan_in)
                value = rng.uniform_array(spec.shape, -bound, bound, dtype=dtype)
            self.values[path] = parameter(value, name=path)

    def __getitem__(self, path: str) -> Variable:
        try:
            return self.values[path]
        except KeyError:
            raise StructuralError(f"parameter {path} is not initialized") from None

    def __contains__(self, path: str) -> bool:
        return path in self.specs

    def __iter__(self) -> Iterator[str]:
        return iter(self.specs)

    def count(self) -> int:
        return sum(spec.size for spec in self.specs.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {path: self[path].value for path in self.specs}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        missing = [p for p in self.specs if p not in state]
        unexpected = [p for p in state if p not in self.specs]
        if strict and (missing or unexpected):
            raise StructuralError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for path, spec in self.specs.items():
            if path not in state:
                continue
            value = np.asarray(state[path])
            if value.shape != spec.shape:
                raise StructuralError(f"{path}: stored shape {value.shape} != declared {spec.shape}")
            self.values[path] = parameter(value, name=path)


class Conv:
    """k x k convolution with bias; padding keeps the resolution at stride 1."""

    def __init__(self, store: ParamStore, path: str, c_in: int, c_out: int, k: int = 3, stride: int = 1):
        self.store, self.stride, self.k = store, stride, k
        self.c_in, self.c_out = c_in, c_out
        fan_in = c_in * k * k
        self.weight = store.declare(f"{path}.weight", (c_out, c_in, k, k), fan_in)
        self.bias = store.declare(f"{path}.bias", (c_out,), fan_in, role="bias")

    @property
    def parts(self) -> Tuple[Variable, Variable]:
        return self.store[self.weight], self.store[self.bias]

    def __call__(self, x: Variable) -> Variable:
        return F.conv2d(x, *self.parts, stride=self.stride, padding=(self.k - 1) // 2)


class DenseBlock:
    """Densely connected 3x3 layers with a residual 1x1 transition back to the input width."""

    def __init__(self, store: ParamStore, path: str, channels: int, depth: int, growth: int):
        self.layers = [
            Conv(store, f"{path}.dense.{i}.conv", channels + i * growth, growth)
            for i in range(depth)
        ]
        self.transition = Conv(store, f"{path}.dense.out", channels + depth * growth, channels, k=1)

    def __call__(self, x: Variable) -> Variable:
        features = [x]
        for layer in self.layers:
            inp = features[0] if len(features) == 1 else F.concat(features, axis=1)
            features.append(F.leaky_relu(layer(inp), LEAKY_SLOPE))
        return F.add(x, self.transition(F.concat(features, axis=1)))


class ScModule:
    """Six guided sparse convolutions with dense connectivity and a 1x1 reduction."""

    LAYERS = 6

    def __init__(self, store: ParamStore, path: str, channels: int, growth: int, k: int = 3):
        self.layers = [
            Conv(store, f"{path}.sc.{i}.conv", channels + i * growth, growth, k=k)
            for i in range(self.LAYERS)
        ]
        self.reduce = Conv(store, f"{path}.sc.reduce", channels + self.LAYERS * growth, channels, k=1)

    def block(self) -> guided.ScBlock:
        return guided.ScBlock(layers=[layer.parts for layer in self.layers],
                              reduce=self.reduce.parts, slope=LEAKY_SLOPE)

    def __call__(self, x: Variable, mask: np.ndarray) -> Variable:
        return guided.sc_block_forward(x, mask, self.block())


class SnlLayer:
    """Sparse non-local module: fusion conv, sparse 1x1, fusion conv."""

    def __init__(self, store: ParamStore, path: str, channels: int, policy: str = "clean_only"):
        self.store, self.policy = store, policy
        self.fusion1 = Conv(store, f"{path}.snl.fuse1", channels, 4)
        self.point_weight = store.declare(f"{path}.snl.point.weight", (channels, channels),
                                          channels, role="identity")
        self.point_bias = store.declare(f"{path}.snl.point.bias", (channels,), channels, role="bias")
        self.fusion2 = Conv(store, f"{path}.snl.fuse2", channels, 4)

    def module(self) -> guided.SnlModule:
        return guided.SnlModule(
            fusion1=self.fusion1.parts,
            pointwise=(self.store[self.point_weight], self.store[self.point_bias]),
            fusion2=self.fusion2.parts,
            policy=self.policy,
        )

    def __call__(self, x: Variable, mask: np.ndarray) -> Variable:
        return guided.snl_module_forward(x, mask, self.module())


class SfmFusion:
    """1x1 projection of Net_L features to the trunk width, then spatial feature modulation."""

    def __init__(self, store: ParamStore, path: str, loc_channels: int, channels: int):
        self.loc_channels = loc_channels
        self.project = Conv(store, f"{path}.sfm.proj", loc_channels, channels, k=1)

    def __call__(self, x: Variable, loc_feat: Variable, mask: np.ndarray) -> Variable:
        if loc_feat.shape[1] != self.loc_channels or loc_feat.shape[2:] != x.shape[2:]:
            raise StructuralError(
                f"SFM fusion point expects localizer features ({self.loc_channels}, {x.shape[2:]}), "
                f"got {loc_feat.shape[1:]}"
            )
        return guided.sfm_modulate(x, self.project(loc_feat), mask)


class NonLocal:
    """Unmasked global attention followed by a residual 1x1 projection."""

    def __init__(self, store: ParamStore, path: str, channels: int):
        self.out = Conv(store, f"{path}.nl.out", channels, channels, k=1)

    def __call__(self, x: Variable) -> Variable:
        return guided.global_nonlocal(x, self.out.parts)


def registered(blocks: Dict[str, object], kind: type) -> List[str]:
    """Paths of the registered blocks of one type, in registration order."""
    return [path for path, block in blocks.items() if isinstance(block, kind)]
