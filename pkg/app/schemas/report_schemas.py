"""
训练与评估报告数据模型
Train / evaluation report schemas
"""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.config_schemas import SplitName


class EvalReport(BaseModel):
    """各截断位置的 HR@N / NDCG@N"""

    cutoffs: List[int] = Field(..., description="截断位置 N")
    hr: List[float] = Field(..., description="与 cutoffs 对齐的 HR@N")
    ndcg: List[float] = Field(..., description="与 cutoffs 对齐的 NDCG@N")
    num_evaluated_users: int = Field(..., ge=0)
    split: SplitName
    seed: Optional[int] = None
    epoch: Optional[int] = None
    config_hash: Optional[str] = None

    @model_validator(mode="after")
    def _aligned(self) -> "EvalReport":
        if not (len(self.cutoffs) == len(self.hr) == len(self.ndcg)):
            raise ValueError("cutoffs / hr / ndcg 长度不一致")
        for value in self.hr + self.ndcg:
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"指标越界: {value}")
        return self

    def hr_at(self, n: int) -> float:
        return self.hr[self.cutoffs.index(n)]

    def ndcg_at(self, n: int) -> float:
        return self.ndcg[self.cutoffs.index(n)]

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"

    def to_table(self) -> str:
        """按截断位置对齐的纯文本表格（每个 N 一组 HR / NDCG 列）"""
        header_top = ["split".ljust(8)]
        header_sub = ["".ljust(8)]
        row = [self.split.value.ljust(8)]
        for n, hr, ndcg in zip(self.cutoffs, self.hr, self.ndcg):
            header_top.append(f"N={n}".center(19))
            header_sub.append(f"{'HR':>9} {'NDCG':>9}")
            row.append(f"{hr:9.5f} {ndcg:9.5f}")
        lines = [" | ".join(header_top), " | ".join(header_sub), " | ".join(row)]
        meta = f"users={self.num_evaluated_users} seed={self.seed} epoch={self.epoch} config={self.config_hash}"
        return "\n".join(lines + [meta]) + "\n"


class EvalPoint(BaseModel):
    epoch: int
    hr: float
    ndcg: float


class TrainReport(BaseModel):
    """训练过程记录"""

    epoch_objectives: List[float] = Field(default_factory=list, description="每轮平均目标值（越大越好）")
    evals: List[EvalPoint] = Field(default_factory=list, description="验证集 HR/NDCG@cutoff")
    epoch_seconds: List[float] = Field(default_factory=list)
    best_epoch: int = 0
    last_epoch: int = 0
    stopped_early: bool = False
    cutoff: int = 10

    @model_validator(mode="after")
    def _order(self) -> "TrainReport":
        if self.best_epoch > self.last_epoch:
            raise ValueError("best_epoch 不能大于 last_epoch")
        return self

    @property
    def best_ndcg(self) -> Optional[float]:
        for point in self.evals:
            if point.epoch == self.best_epoch:
                return point.ndcg
        return None
