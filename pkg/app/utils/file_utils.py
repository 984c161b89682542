"""
文件工具模块
File utilities: sidecar JSON, config hashing, run directories
"""

import hashlib
import json
import time
from pathlib import Path
from typing import Any, Dict, Optional, Set, Union

from pydantic import BaseModel

from config.settings import settings

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    """二进制产物对应的 JSON 旁路文件：<path>.json"""
    path = Path(path)
    return path.with_name(path.name + ".json")


def dump_json(obj: Any) -> str:
    """确定性 JSON（键排序、固定缩进），保证重跑逐字节一致"""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding="utf-8")
    return path


def append_jsonl(path: PathLike, obj: Dict[str, Any]) -> None:
    with Path(path).open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n")


def config_hash(config: BaseModel, length: int = 12, include: Optional[Set[str]] = None) -> str:
    """配置哈希：规范化 JSON（按键排序）的 sha256 前缀；include 限定参与哈希的顶层字段"""
    payload = config.model_dump(mode="json", by_alias=True, include=include)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:length]


def create_run_directory(cfg_hash: str, run_dir: Optional[PathLike] = None) -> Path:
    """创建运行目录：RUNS_DIR/<时间戳>-<配置哈希>，或使用显式给出的目录"""
    if run_dir is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run_dir = Path(settings.RUNS_DIR) / f"{stamp}-{cfg_hash}"
    path = Path(run_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path
