"""Network architecture schema."""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

Variant = Literal["Net1", "Net2", "Net3", "Net4", "Net5"]
SourcePolicy = Literal["clean_only", "all_pixels"]

VARIANTS: tuple[Variant, ...] = ("Net1", "Net2", "Net3", "Net4", "Net5")


class NetSpec(BaseModel):
    """Toy-scale U-shaped encoder/decoder description.

    Encoder level l works at spatial factor 2**l with ``base_channels * 2**l`` channels;
    the bottleneck sits at factor ``2**levels``.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    levels: int = Field(3, ge=1, le=5)
    base_channels: int = Field(16, ge=2)
    dense_block_depth: int = Field(4, ge=1)
    growth: int = Field(8, ge=1)
    sc_growth: int = Field(8, ge=1)
    variant: Variant = "Net5"
    snl_policy: SourcePolicy = "clean_only"

    @property
    def has_sfm(self) -> bool:
        return self.variant != "Net1"

    @property
    def has_sc(self) -> bool:
        return self.variant in ("Net3", "Net4", "Net5")

    @property
    def has_nl(self) -> bool:
        return self.variant == "Net4"

    @property
    def has_snl(self) -> bool:
        return self.variant == "Net5"

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def localizer(self) -> "NetSpec":
        """Lightweight sibling used for Net_L: half the width and half the dense depth."""
        return self.model_copy(update={
            "base_channels": max(2, self.base_channels // 2),
            "dense_block_depth": max(1, self.dense_block_depth // 2),
            "variant": "Net1",
        })
