"""Experiment configuration parsed from the key = value config file."""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from spair.schemas.net import NetSpec, SourcePolicy, Variant

DegradationKind = Literal["streak", "blob", "shadow", "region_blur"]


class TrainConfig(BaseModel):
    """Training hyperparameters. One "epoch" is a fixed block of iterations at toy scale."""
    model_config = ConfigDict(extra="forbid")

    phase: Literal["localize", "restore"] = "restore"
    learning_rate: float = Field(2e-4, gt=0)
    lr_halving_period_epochs: int = Field(50, ge=1)
    iterations_per_epoch: int = Field(10, ge=1)
    batch_size: int = Field(8, ge=1)
    patch_size: int = Field(64, ge=8)
    epochs: int = Field(200, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    mask_threshold: float = Field(0.1, gt=0, lt=1)
    hflip: bool = True
    vflip: bool = True
    snl_policy: SourcePolicy = "clean_only"
    variant: Variant = "Net5"
    mask_source: Literal["predicted", "gt"] = "predicted"
    log_interval: int = Field(10, ge=1)
    val_interval: int = Field(100, ge=1)
    net_l_checkpoint: Optional[str] = None

    @property
    def iterations(self) -> int:
        return self.epochs * self.iterations_per_epoch


class DataConfig(BaseModel):
    """Synthetic dataset sizes and degradation families."""
    model_config = ConfigDict(extra="forbid")

    kinds: List[DegradationKind] = Field(default_factory=lambda: ["blob"], min_length=1)
    seed: int = Field(1234, ge=0, lt=2**64)
    image_size: int = Field(80, ge=16)
    train_samples: int = Field(256, ge=1)
    val_samples: int = Field(16, ge=1)
    test_samples: int = Field(64, ge=1)
    severity: float = Field(1.0, gt=0, le=1)

    @field_validator("kinds", mode="before")
    @classmethod
    def split_kinds(cls, value):
        if isinstance(value, str):
            return [k.strip() for k in value.split(",") if k.strip()]
        return value


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    y_channel: bool = False
    prob_threshold: float = Field(0.5, gt=0, lt=1)


class RunConfig(BaseModel):
    """Whole config file: ``train.*``, ``net.*``, ``data.*`` and ``eval.*`` sections."""
    model_config = ConfigDict(extra="forbid")

    train: TrainConfig = Field(default_factory=TrainConfig)
    net: NetSpec = Field(default_factory=NetSpec)
    data: DataConfig = Field(default_factory=DataConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def check_consistency(self):
        if {"variant", "snl_policy"} & self.net.model_fields_set:
            raise ValueError("variant and snl_policy are set through train.variant / train.snl_policy")
        factor = 2 ** self.net.levels
        if self.train.patch_size % factor:
            raise ValueError(
                f"train.patch_size={self.train.patch_size} must be divisible by 2**levels={factor}"
            )
        if self.data.image_size < self.train.patch_size:
            raise ValueError("data.image_size must be at least train.patch_size")
        if self.data.image_size % factor:
            raise ValueError(
                f"data.image_size={self.data.image_size} must be divisible by 2**levels={factor}"
            )
        return self

    def net_spec(self) -> NetSpec:
        """Architecture with the variant and SNL policy chosen in the train section."""
        return self.net.model_copy(update={
            "variant": self.train.variant,
            "snl_policy": self.train.snl_policy,
        })
