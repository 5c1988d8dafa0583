"""Pydantic models for configuration and reports."""
from spair.schemas.net import NetSpec, SourcePolicy, Variant, VARIANTS
from spair.schemas.run import DataConfig, EvalConfig, RunConfig, TrainConfig, DegradationKind
from spair.schemas.reports import (
    AblationRow,
    BenchRow,
    GradReport,
    ManifestEntry,
    QualityReport,
)
