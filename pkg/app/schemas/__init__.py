"""
配置与报告数据模型包
Config and report schemas package
"""

from app.schemas.config_schemas import (
    DataConfig,
    EvalConfig,
    ExperimentConfig,
    GridConfig,
    LossConfig,
    ModelConfig,
    NegMode,
    Objective,
    OptimizerConfig,
    OptimizerName,
    RatingFormat,
    SamplerConfig,
    SetSummary,
    SplitName,
    SplitStrategy,
    TrainConfig,
)
from app.schemas.report_schemas import EvalPoint, EvalReport, TrainReport

__all__ = [
    "DataConfig",
    "EvalConfig",
    "EvalPoint",
    "EvalReport",
    "ExperimentConfig",
    "GridConfig",
    "LossConfig",
    "ModelConfig",
    "NegMode",
    "Objective",
    "OptimizerConfig",
    "OptimizerName",
    "RatingFormat",
    "SamplerConfig",
    "SetSummary",
    "SplitName",
    "SplitStrategy",
    "TrainConfig",
]
