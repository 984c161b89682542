"""
实验配置数据模型
Experiment configuration schemas
"""

from __future__ import annotations

import itertools
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import ConfigError
from config.constants import DEFAULT_CUTOFFS, DEFAULT_F_FLOOR, RATIO_TOLERANCE, SELECTION_CUTOFF
from config.settings import settings


class Objective(str, Enum):
    """训练目标"""
    BPR = "bpr"
    SET2SET = "set2set"
    SET2SET_EASY = "set2set_easy"


class SetSummary(str, Enum):
    """集合到集合比较中正样本集合的摘要方式"""
    SUMMARY = "summary"  # f_pos：全部正样本对的平均
    EASY = "easy"        # g_pos：最“容易”的正样本


class NegMode(str, Enum):
    """未观测物品采样方式"""
    UNIFORM = "uniform"
    POPULARITY = "popularity"


class OptimizerName(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class SplitName(str, Enum):
    VAL = "val"
    TEST = "test"


class SplitStrategy(str, Enum):
    RANDOM = "random"
    TEMPORAL = "temporal"


class RatingFormat(str, Enum):
    TSV = "tsv"
    CSV = "csv"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LossConfig(_Strict):
    """目标函数选择及超参数"""

    objective: Objective = Field(default=Objective.SET2SET, description="bpr / set2set / set2set_easy")
    lambda_: float = Field(default=1.0, alias="lambda", ge=0.0, description="set-to-set 项权重 λ")
    beta: float = Field(default=0.5, gt=0.0, description="间隔参数 β")
    mask_enabled: bool = Field(default=False, description="是否启用自适应 mask")
    f_floor: float = Field(default=DEFAULT_F_FLOOR, gt=0.0, le=1e-6, description="ln 参数下限 ε")
    include_self_pairs: bool = Field(default=True, description="f_pos 内是否包含自身配对 D(x_i, x_i)")
    survivor_normalization: bool = Field(default=False, description="f̃_pos 按存活数而非 L 归一化")
    use_item_to_set: bool = Field(default=True, description="消融：关闭后仅保留 λ·L3")

    @field_validator("lambda_", "beta")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("必须为有限值")
        return v

    @property
    def summary(self) -> SetSummary:
        return SetSummary.EASY if self.objective == Objective.SET2SET_EASY else SetSummary.SUMMARY


class SamplerConfig(_Strict):
    """集合采样配置"""

    L: int = Field(default=2, ge=1, description="观测集合大小")
    K: int = Field(default=5, ge=1, description="未观测集合大小")
    neg_mode: NegMode = Field(default=NegMode.UNIFORM)
    mask_enabled: bool = Field(default=False)
    mask_keep_prob: float = Field(default=0.5, gt=0.0, le=1.0)
    pop_smoothing: float = Field(default=0.0, ge=0.0, description="流行度权重平滑项")
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)

    @model_validator(mode="after")
    def _mask_needs_two(self) -> "SamplerConfig":
        if self.mask_enabled and self.L < 2:
            raise ValueError("启用 mask 时 L 必须 ≥ 2")
        return self


class OptimizerConfig(_Strict):
    name: OptimizerName = Field(default=OptimizerName.ADAM)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class TrainConfig(_Strict):
    """训练配置"""

    epochs: int = Field(default=100, ge=0)
    lr: float = Field(default=1e-3, ge=0.0, description="学习率；0 表示参数冻结")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    l2_reg: float = Field(default=1e-4, ge=0.0)
    eval_every: int = Field(default=1, ge=1)
    patience: int = Field(default=10, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    loss: LossConfig = Field(default_factory=LossConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    dim: int = Field(default=64, ge=1)
    init_scale: float = Field(default=0.1, gt=0.0)
    dtype: str = Field(default="float64", pattern="^(float64|float32)$")
    batch_size: int = Field(default=256, ge=1)
    num_workers: int = Field(default=1, ge=1)
    eval_cutoff: int = Field(default=SELECTION_CUTOFF, ge=1)

    @model_validator(mode="after")
    def _consistency(self) -> "TrainConfig":
        if self.loss.mask_enabled != self.sampler.mask_enabled:
            raise ValueError("loss.mask_enabled 与 sampler.mask_enabled 必须一致")
        if self.loss.objective == Objective.BPR:
            if self.sampler.L != 1 or self.sampler.K != 1 or self.sampler.mask_enabled:
                raise ValueError("bpr 目标要求 L=K=1 且不启用 mask")
        return self


# model 块与 train 块共有的字段
MODEL_SHARED_FIELDS = ("dim", "init_scale", "dtype")


class ModelConfig(_Strict):
    dim: int = Field(default=64, ge=1)
    init_scale: float = Field(default=0.1, gt=0.0)
    dtype: str = Field(default="float64", pattern="^(float64|float32)$")


class DataConfig(_Strict):
    """数据准备配置"""

    path: Optional[str] = Field(default=None, description="原始评分日志")
    dataset_path: Optional[str] = Field(default=None, description="已准备好的二进制数据集")
    format: RatingFormat = Field(default=RatingFormat.TSV)
    skip_header: bool = Field(default=False)
    rating_threshold: float = Field(default=4.0)
    min_interactions: int = Field(default=10, ge=1)
    split_ratios: Tuple[float, float, float] = Field(default=(0.8, 0.1, 0.1))
    split_strategy: SplitStrategy = Field(default=SplitStrategy.RANDOM)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)

    @field_validator("split_ratios")
    @classmethod
    def _ratios(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r < 0 for r in v):
            raise ValueError("划分比例不能为负")
        if abs(sum(v) - 1.0) > RATIO_TOLERANCE:
            raise ValueError(f"划分比例之和必须为 1，当前为 {sum(v)}")
        return v


class EvalConfig(_Strict):
    cutoffs: List[int] = Field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    split: SplitName = Field(default=SplitName.TEST)
    num_workers: int = Field(default=1, ge=1)

    @field_validator("cutoffs")
    @classmethod
    def _cutoffs(cls, v: List[int]) -> List[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("cutoffs 必须为正整数列表")
        return sorted(set(v))


class GridConfig(_Strict):
    """对比网格：未给出的维度沿用 train 配置"""

    L: Optional[List[int]] = None
    K: Optional[List[int]] = None
    objective: Optional[List[Objective]] = None
    beta: Optional[List[float]] = None
    lambda_: Optional[List[float]] = Field(default=None, alias="lambda")

    def axes(self) -> Dict[str, List[Any]]:
        out: Dict[str, List[Any]] = {}
        for key in ("L", "K", "objective", "beta", "lambda_"):
            values = getattr(self, key)
            if values:
                out[key] = list(values)
        return out

    @property
    def size(self) -> int:
        axes = self.axes()
        if not axes:
            return 0
        return math.prod(len(v) for v in axes.values())

    def cells(self) -> List[Dict[str, Any]]:
        axes = self.axes()
        if not axes:
            return []
        keys = list(axes)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


class ExperimentConfig(_Strict):
    """完整实验配置（配置文件的根）"""

    name: str = Field(default="experiment")
    preset: Optional[str] = None
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    grid: Optional[GridConfig] = None

    @model_validator(mode="after")
    def _sync_model_block(self) -> "ExperimentConfig":
        # model 块与 train 块中的同名字段必须一致；只在 train 中给出时反向同步到 model
        for name in MODEL_SHARED_FIELDS:
            in_model = name in self.model.model_fields_set
            in_train = name in self.train.model_fields_set
            model_value = getattr(self.model, name)
            train_value = getattr(self.train, name)
            if in_model and in_train and model_value != train_value:
                raise ConfigError(f"model.{name}={model_value!r} 与 train.{name}={train_value!r} 冲突")
            if in_train and not in_model:
                setattr(self.model, name, train_value)
            else:
                setattr(self.train, name, model_value)
        return self
