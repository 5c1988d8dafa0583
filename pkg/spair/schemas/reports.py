"""Report records written by the evaluation, gradcheck, bench and ablation jobs."""
from typing import Optional

from pydantic import BaseModel, Field

from spair.schemas.run import DegradationKind


class GradReport(BaseModel):
    """Result of comparing reverse-mode gradients against central differences."""
    op: str
    max_rel_error: float
    max_abs_error: float
    checked: int
    instances: int = 1
    non_finite: bool = False
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return not self.non_finite and self.max_rel_error <= self.tolerance


class QualityReport(BaseModel):
    psnr_db: float
    ssim: float = Field(ge=-1.0, le=1.0)
    psnr_clean_region_db: Optional[float] = None
    psnr_degraded_region_db: Optional[float] = None
    mask_precision: float = 0.0
    mask_recall: float = 0.0
    mask_f1: float = 0.0


class ManifestEntry(BaseModel):
    idx: int = Field(ge=0)
    kind: DegradationKind
    seed: int = Field(ge=0, lt=2**64)
    severity: float = Field(gt=0, le=1)


class BenchRow(BaseModel):
    op: str
    h: int
    w: int
    c: int
    density: float
    wall_ns_median: int
    mac_count: int


class AblationRow(BaseModel):
    variant: str
    params: int
    psnr_db: float
    ssim: float
    clean_mse: float
    rmse_reduction_pct: float
    dssim_reduction_pct: float
    seeds: int
