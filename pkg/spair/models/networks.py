"""Net_L (localization), Net_R (guided restoration) and the Net1-Net5 ablation ladder."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from spair.autodiff import functional as F
from spair.autodiff.tape import Variable, as_variable
from spair.core.errors import ShapeError, StructuralError
from spair.core.logging import get_logger
from spair.core.rng import Rng
from spair.models.layers import (
    LEAKY_SLOPE,
    Conv,
    DenseBlock,
    NonLocal,
    ParamStore,
    ScModule,
    SfmFusion,
    SnlLayer,
    registered,
)
from spair.ops.tensor_core import as_mask, downsample_mask
from spair.schemas.net import VARIANTS, NetSpec, Variant

logger = get_logger(__name__)

NET1_BUDGET_TOLERANCE = 0.05


def _act(x: Variable) -> Variable:
    return F.leaky_relu(x, LEAKY_SLOPE)


class Net:
    """Shared densely connected U-shaped trunk.

    Layout per encoder level l (factor 2**l): dense block, [SFM], strided 3x3 conv.
    Per decoder level (coarse to fine): nearest upsample + 3x3 conv, skip concat + 1x1,
    then the level's refinement blocks.
    """

    role = "trunk"

    def __init__(self, spec: NetSpec):
        self.spec = spec
        self.store = ParamStore()
        self.blocks: Dict[str, object] = {}
        L = spec.levels
        ch = spec.channels

        self.head = Conv(self.store, "head", 3, ch(0))
        self.enc = [self._register(f"enc.l{l}", DenseBlock(self.store, f"enc.l{l}", ch(l),
                                                            spec.dense_block_depth, spec.growth))
                    for l in range(L)]
        self.down = [Conv(self.store, f"enc.l{l}.down", ch(l), ch(l + 1), stride=2) for l in range(L)]
        self.bottleneck = self._register("mid", DenseBlock(self.store, "mid", ch(L),
                                                           spec.dense_block_depth, spec.growth))
        self.up = [Conv(self.store, f"dec.l{l}.up", ch(l + 1), ch(l)) for l in range(L)]
        self.merge = [Conv(self.store, f"dec.l{l}.merge", 2 * ch(l), ch(l), k=1) for l in range(L)]

    def _register(self, path: str, block):
        self.blocks[path] = block
        return block

    @property
    def params(self) -> Dict[str, Variable]:
        return dict(self.store.values)

    def parameter_count(self) -> int:
        return self.store.count()

    def modules_of(self, kind: type) -> List[str]:
        return registered(self.blocks, kind)

    def initialize(self, seed: int, dtype=np.float32) -> "Net":
        self.store.initialize(Rng(seed), dtype=dtype)
        return self

    def check_resolution(self, image: Variable) -> None:
        if image.value.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected an (n, 3, h, w) image, got {image.shape}")
        factor = 2 ** self.spec.levels
        h, w = image.shape[2:]
        if h % factor or w % factor:
            ph, pw = -(-h // factor) * factor, -(-w // factor) * factor
            raise ShapeError(
                f"resolution {h}x{w} is not divisible by 2**levels={factor}; pad to {ph}x{pw}"
            )

    def _decode_level(self, x: Variable, skip: Variable, level: int) -> Variable:
        x = _act(self.up[level](F.upsample_nearest(x, 2)))
        return _act(self.merge[level](F.concat([x, skip], axis=1)))


class LocalizationNet(Net):
    """Lightweight trunk ending in a single-channel logistic mask head."""

    role = "localizer"

    def __init__(self, spec: NetSpec):
        super().__init__(spec)
        L = spec.levels
        self.dec = [self._register(f"dec.l{l}", DenseBlock(self.store, f"dec.l{l}", spec.channels(l),
                                                            spec.dense_block_depth, spec.growth))
                    for l in range(L)]
        self.tail = Conv(self.store, "tail", spec.channels(0), 1)

    def feature_channels(self) -> List[int]:
        return [self.spec.channels(l) for l in range(self.spec.levels)]

    def forward(self, image) -> Tuple[Variable, List[Variable]]:
        x = as_variable(image)
        self.check_resolution(x)
        h = _act(self.head(x))
        skips, features = [], []
        for l in range(self.spec.levels):
            h = self.enc[l](h)
            skips.append(h)
            features.append(h)
            h = _act(self.down[l](h))
        h = self.bottleneck(h)
        for l in reversed(range(self.spec.levels)):
            h = self.dec[l](self._decode_level(h, skips[l], l))
        return F.sigmoid(self.tail(h)), features


class RestorationNet(Net):
    """Restoration trunk with SFM at strided-conv inputs and SC/NL/SNL in the decoder."""

    role = "restorer"

    def __init__(self, spec: NetSpec, loc_channels: Optional[Sequence[int]] = None):
        super().__init__(spec)
        L = spec.levels
        ch = spec.channels
        if loc_channels is None:
            loc_channels = [spec.localizer().channels(l) for l in range(L)]
        self.loc_channels = list(loc_channels)

        self.sfm = [self._register(f"enc.l{l}.sfm", SfmFusion(self.store, f"enc.l{l}", self.loc_channels[l], ch(l)))
                    for l in range(L)] if spec.has_sfm else []
        if spec.has_sc:
            self.dec = [self._register(f"dec.l{l}.sc", ScModule(self.store, f"dec.l{l}", ch(l), spec.sc_growth))
                        for l in range(L)]
        else:
            self.dec = [self._register(f"dec.l{l}", DenseBlock(self.store, f"dec.l{l}", ch(l),
                                                                spec.dense_block_depth, spec.growth))
                        for l in range(L)]
        # one global layer at the coarsest decoder level keeps H*W x H*W attention affordable
        self.nl = self._register(f"dec.l{L - 1}.nl", NonLocal(self.store, f"dec.l{L - 1}", ch(L - 1))) \
            if spec.has_nl else None
        self.snl = [self._register(f"dec.l{l}.snl", SnlLayer(self.store, f"dec.l{l}", ch(l), spec.snl_policy))
                    for l in range(L)] if spec.has_snl else []
        self.tail = Conv(self.store, "tail", ch(0), 3)

    @property
    def uses_mask(self) -> bool:
        return self.spec.has_sfm or self.spec.has_sc or self.spec.has_snl

    def forward(self, image, mask=None, loc_features: Optional[Sequence] = None) -> Variable:
        x = as_variable(image)
        self.check_resolution(x)
        L = self.spec.levels
        masks: List[Optional[np.ndarray]] = [None] * L
        if self.uses_mask:
            if mask is None:
                raise StructuralError(f"{self.spec.variant} needs a distortion mask")
            n, _, hh, ww = x.shape
            full = as_mask(mask, (n, hh, ww))
            masks = [downsample_mask(full, 2 ** l) for l in range(L)]
        if self.spec.has_sfm:
            if loc_features is None or len(loc_features) != L:
                got = 0 if loc_features is None else len(loc_features)
                raise StructuralError(f"expected {L} localizer feature maps for SFM, got {got}")

        h = _act(self.head(x))
        skips = []
        for l in range(L):
            h = self.enc[l](h)
            skips.append(h)
            if self.spec.has_sfm:
                h = self.sfm[l](h, as_variable(loc_features[l]), masks[l])
            h = _act(self.down[l](h))
        h = self.bottleneck(h)
        for l in reversed(range(L)):
            h = self._decode_level(h, skips[l], l)
            h = self.dec[l](h, masks[l]) if self.spec.has_sc else self.dec[l](h)
            if self.nl is not None and l == L - 1:
                h = self.nl(h)
            if self.spec.has_snl:
                h = self.snl[l](h, masks[l])
        return F.add(x, self.tail(h))


def build_net_l(spec: NetSpec, seed: int, dtype=np.float32) -> LocalizationNet:
    """Net_L for a Net_R spec: half the width and half the dense depth."""
    net = LocalizationNet(spec.localizer()).initialize(seed, dtype)
    logger.debug("net.built", role=net.role, params=net.parameter_count())
    return net


def build_net_r(spec: NetSpec, seed: int, dtype=np.float32,
                loc_channels: Optional[Sequence[int]] = None) -> RestorationNet:
    net = RestorationNet(spec, loc_channels).initialize(seed, dtype)
    logger.debug("net.built", role=net.role, variant=spec.variant, params=net.parameter_count())
    return net


def forward_localize(net_l: LocalizationNet, image) -> Tuple[Variable, List[Variable]]:
    return net_l.forward(image)


def forward_restore(net_r: RestorationNet, image, mask=None, loc_features=None) -> Variable:
    return net_r.forward(image, mask, loc_features)


def binarize(prob, threshold: float = 0.5) -> np.ndarray:
    """(n, 1, h, w) probabilities -> (n, h, w) binary mask in the probability dtype."""
    p = prob.value if isinstance(prob, Variable) else np.asarray(prob)
    return (p[:, 0] > threshold).astype(p.dtype)


def count_parameters(spec: NetSpec, role: str = "restorer") -> int:
    """Parameter count from the declared shapes, without allocating."""
    net = RestorationNet(spec) if role == "restorer" else LocalizationNet(spec)
    return net.parameter_count()


def ablation_variant(spec: NetSpec, variant: Variant) -> NetSpec:
    """Spec of one rung of the ablation ladder.

    Net1 is the plain dense encoder-decoder widened until its parameter count matches
    Net2 plus its localizer; Net2 adds SFM; Net3 swaps decoder dense blocks for SC;
    Net4 adds one global non-local layer; Net5 adds SNL to Net3.
    """
    if variant not in VARIANTS:
        raise ShapeError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    base = spec.model_copy(update={"variant": variant})
    if variant != "Net1":
        return base

    guided = spec.model_copy(update={"variant": "Net2"})
    target = count_parameters(guided) + count_parameters(guided.localizer(), role="localizer")
    best, best_gap = base, None
    for channels in range(spec.base_channels, 2 * spec.base_channels + 1):
        for growth in range(spec.growth, 2 * spec.growth + 1):
            candidate = base.model_copy(update={"base_channels": channels, "growth": growth})
            gap = abs(count_parameters(candidate) - target)
            if best_gap is None or gap < best_gap:
                best, best_gap = candidate, gap
    if best_gap / target > NET1_BUDGET_TOLERANCE:
        logger.warning("net.budget_mismatch", target=target, gap=best_gap)
    return best
