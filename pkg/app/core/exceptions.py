"""
自定义异常和命令行异常处理
Custom Exceptions and CLI Error Handling
"""

import logging
import os
import traceback
from typing import Optional

from pydantic import ValidationError

logger = logging.getLogger(__name__)

# 退出码
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class Set2setError(Exception):
    """工具包异常基类"""

    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str, error_code: str = "SET2SET_ERROR"):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ConfigError(Set2setError):
    """配置异常"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str):
        super().__init__(f"配置错误: {message}", "CONFIG_ERROR")


class ParseError(Set2setError):
    """评分日志解析异常（携带行号）"""

    exit_code = EXIT_USAGE

    def __init__(self, line_no: int, detail: str):
        self.line_no = line_no
        super().__init__(f"第 {line_no} 行格式错误: {detail}", "PARSE_ERROR")


class EmptyDatasetError(Set2setError):
    """数据集为空"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str = "数据集为空"):
        super().__init__(message, "EMPTY_DATASET")


class DatasetFileError(Set2setError):
    """数据集文件损坏或格式不符"""

    exit_code = EXIT_USAGE

    def __init__(self, path: str, detail: str):
        self.path = path
        super().__init__(f"数据集文件无效 {path}: {detail}", "DATASET_FILE_ERROR")


class CheckpointError(Set2setError):
    """检查点文件损坏或格式不符"""

    exit_code = EXIT_USAGE

    def __init__(self, path: str, detail: str):
        self.path = path
        super().__init__(f"检查点无效 {path}: {detail}", "CHECKPOINT_ERROR")


class ShapeError(Set2setError):
    """样本形状与配置不一致"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str):
        super().__init__(f"形状不匹配: {message}", "SHAPE_ERROR")


class IdOutOfRangeError(Set2setError, IndexError):
    """用户/物品编号越界"""

    exit_code = EXIT_USAGE

    def __init__(self, kind: str, index: int, size: int):
        super().__init__(f"{kind} id {index} 超出范围 [0, {size})", "ID_OUT_OF_RANGE")


class DegenerateUserError(Set2setError):
    """用户已与全部物品交互，无法采样未观测物品"""

    def __init__(self, user: int):
        self.user = user
        super().__init__(f"用户 {user} 没有可采样的未观测物品", "DEGENERATE_USER")


class NumericError(Set2setError):
    """梯度/目标出现非有限值"""

    def __init__(self, term: str, detail: str = "non-finite value"):
        self.term = term
        super().__init__(f"数值错误 [{term}]: {detail}", "NUMERIC_ERROR")


class TrainingDivergedError(Set2setError):
    """训练发散"""

    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        self.value = value
        super().__init__(f"训练在第 {epoch} 轮发散 (objective={value})", "TRAINING_DIVERGED")


class EvalError(Set2setError):
    """评估异常"""

    def __init__(self, message: str):
        super().__init__(f"评估失败: {message}", "EVAL_ERROR")


def exit_code_for(exc: BaseException) -> int:
    """异常 -> 进程退出码"""
    if isinstance(exc, Set2setError):
        return exc.exit_code
    if isinstance(exc, (ValidationError, FileNotFoundError, IsADirectoryError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def handle_cli_error(exc: BaseException, *, debug: bool = False) -> int:
    """记录异常并返回退出码"""
    code = exit_code_for(exc)
    if isinstance(exc, Set2setError):
        logger.error("%s - %s", exc.error_code, exc.message)
    elif isinstance(exc, ValidationError):
        details = []
        for error in exc.errors():
            field = " -> ".join(str(x) for x in error["loc"])
            details.append(f"{field}: {error['msg']}")
        logger.error("配置校验失败: %s", "; ".join(details))
    elif isinstance(exc, FileNotFoundError):
        logger.error("文件不存在: %s", exc.filename or exc)
    else:
        logger.error("未处理的异常: %s: %s\n%s", type(exc).__name__, exc, traceback.format_exc())
    if debug and code != EXIT_RUNTIME:
        logger.debug(traceback.format_exc())
    return code


def ensure_file(path: Optional[str], what: str) -> str:
    """校验输入文件存在，不存在时抛 FileNotFoundError（退出码 2）。"""
    if not path:
        raise ConfigError(f"缺少{what}路径")
    if not os.path.isfile(path):
        raise FileNotFoundError(2, f"{what}不存在", path)
    return path
