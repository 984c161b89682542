"""
应用配置文件
Application Settings Configuration
"""

from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """进程级设置（环境变量 / .env），实验超参数见 app.schemas"""

    # 基础设置
    APP_NAME: str = "set2setrank"
    VERSION: str = "1.0.0"

    # 日志设置
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # 运行目录（每次运行的产物在 RUNS_DIR/<时间戳>-<配置哈希>/ 下）
    RUNS_DIR: str = "runs"

    # 默认随机种子
    DEFAULT_SEED: int = 2021

    # 评估时每批处理的用户数
    EVAL_USER_BATCH: int = 1024

    # 训练进度条
    SHOW_PROGRESS: bool = False

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # 忽略未在模型中定义的多余环境变量
    )


# 创建全局设置实例
settings = Settings()
