"""
日志配置文件
Logging Configuration
"""

from __future__ import annotations

import logging
import logging.handlers
import os
from typing import Optional

from config.settings import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_RUN_HANDLER_NAME = "s2sr-run-file"


def _is_configured() -> bool:
    """检查根 logger 是否已配置 handler。"""
    return bool(logging.getLogger().handlers)


def _resolve_level(level: Optional[str]) -> int:
    name = (level or settings.LOG_LEVEL or "INFO").upper()
    resolved = logging.getLevelName(name)
    return resolved if isinstance(resolved, int) else logging.INFO


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """设置应用日志配置（幂等）。返回根 logger。"""
    root_logger = logging.getLogger()
    if _is_configured():
        if level is not None:
            root_logger.setLevel(_resolve_level(level))
        return root_logger

    formatter = logging.Formatter(LOG_FORMAT, DATE_FORMAT)
    root_logger.setLevel(_resolve_level(level))

    # 控制台处理器
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # 文件处理器 - 按时间轮转（仅在配置 LOG_FILE 时启用）
    if settings.LOG_FILE:
        log_dir = os.path.dirname(settings.LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.handlers.TimedRotatingFileHandler(
            filename=settings.LOG_FILE,
            when="midnight",
            interval=1,
            backupCount=30,
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    root_logger.debug("日志系统初始化完成")
    return root_logger


def attach_run_file_handler(path: str) -> logging.Handler:
    """为单次运行追加文件处理器（run.log），同名处理器只保留一个。"""
    root_logger = setup_logging()
    for handler in list(root_logger.handlers):
        if handler.get_name() == _RUN_HANDLER_NAME:
            root_logger.removeHandler(handler)
            handler.close()
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.set_name(_RUN_HANDLER_NAME)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    root_logger.addHandler(handler)
    return handler


def get_logger(name: str | None = None) -> logging.Logger:
    """获取具名 logger；若未初始化则先初始化。"""
    if not _is_configured():
        setup_logging()
    return logging.getLogger(name or __name__)
