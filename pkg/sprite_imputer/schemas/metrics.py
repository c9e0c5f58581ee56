import math
from datetime import datetime
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from sprite_imputer.schemas.domain import ALL_DOMAINS, DomainId


class LossBreakdown(BaseModel):
    """Per-step values of every objective term and both weighted totals."""
    model_config = ConfigDict(frozen=True)

    adv_g: float
    reg: float
    mcyc: float
    ssim: float
    dmn_fake: float
    total_g: float
    adv_d: float
    dmn_real: float
    total_d: float


class StepLoss(BaseModel):
    step: int
    losses: LossBreakdown


def _mean(values: List[float]) -> float:
    return math.fsum(values) / len(values)


class MetricsCell(BaseModel):
    """One (target, source subset) evaluation."""
    target: DomainId
    sources: Tuple[DomainId, ...]
    l1: float
    fid: Optional[float] = None


class TargetSummary(BaseModel):
    target: DomainId
    l1: float
    fid: Optional[float] = None


class MetricsReport(BaseModel):
    """
    L1/FID for one scenario (3, 2 or 1 available sources).

    Averages are derived from the stored cells; the validator rejects a report whose
    stored averages do not recompute exactly.
    """
    sources_available: int = Field(ge=1, le=3)
    extractor: Optional[str] = None
    extractor_dimension: Optional[int] = None
    dataset: str = "dataset"
    dataset_size: int = 0
    checkpoint: Optional[str] = None
    created_at: datetime = Field(default_factory=datetime.now)
    cells: List[MetricsCell]
    per_target: List[TargetSummary] = Field(default_factory=list)
    average_l1: float = 0.0
    average_fid: Optional[float] = None

    @staticmethod
    def summarize(cells: List[MetricsCell]) -> Tuple[List[TargetSummary], float, Optional[float]]:
        summaries = []
        for target in ALL_DOMAINS:
            target_cells = [c for c in cells if c.target == target]
            if not target_cells:
                continue
            fids = [c.fid for c in target_cells]
            summaries.append(TargetSummary(
                target=target,
                l1=_mean([c.l1 for c in target_cells]),
                fid=_mean(fids) if all(f is not None for f in fids) else None,
            ))
        average_l1 = _mean([c.l1 for c in cells])
        all_fids = [c.fid for c in cells]
        average_fid = _mean(all_fids) if all(f is not None for f in all_fids) else None
        return summaries, average_l1, average_fid

    @model_validator(mode="before")
    @classmethod
    def fill_averages(cls, data):
        if isinstance(data, dict) and data.get("cells") and "per_target" not in data:
            cells = [c if isinstance(c, MetricsCell) else MetricsCell.model_validate(c) for c in data["cells"]]
            per_target, average_l1, average_fid = cls.summarize(cells)
            data = {**data, "cells": cells, "per_target": per_target,
                    "average_l1": average_l1, "average_fid": average_fid}
        return data

    @model_validator(mode="after")
    def validate_averages(self) -> "MetricsReport":
        if not self.cells:
            raise ValueError("MetricsReport needs at least one cell")
        per_target, average_l1, average_fid = self.summarize(self.cells)
        if per_target != self.per_target or average_l1 != self.average_l1 or average_fid != self.average_fid:
            raise ValueError("Stored averages do not match the per-cell values")
        return self

    def target_summary(self, target: DomainId) -> TargetSummary:
        for summary in self.per_target:
            if summary.target == target:
                return summary
        raise KeyError(target)
