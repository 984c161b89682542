"""
运行管理器：配置分层合并、配置哈希与运行目录
Run manager: layered configuration, config hashing and run directories

优先级（低 -> 高）：模型默认值 < 预设 < 配置文件 < --set 覆盖 < 专用命令行参数
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from app.core.exceptions import ConfigError, ensure_file
from app.schemas.config_schemas import ExperimentConfig
from app.utils.file_utils import config_hash, create_run_directory, write_json
from config.constants import PRESETS, RUN_CONFIG_FILE, RUN_LOG_FILE
from config.logging_config import attach_run_file_handler, get_logger

logger = get_logger(__name__)

# 决定训练结果的顶层配置块
TRAINING_BLOCKS = {"model", "train"}

PathLike = Union[str, Path]


def load_config_file(path: PathLike) -> Dict[str, Any]:
    """读取 TOML（.toml）或 JSON（.json）配置文件"""
    path = Path(ensure_file(str(path), "配置文件"))
    text = path.read_text(encoding="utf-8")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            return tomllib.loads(text)
        if suffix == ".json":
            data = json.loads(text)
            if not isinstance(data, dict):
                raise ConfigError("JSON 配置的根必须是对象")
            return data
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"配置文件 {path} 无法解析: {exc}") from exc
    raise ConfigError(f"不支持的配置文件类型 {suffix!r}（支持 .toml / .json）")


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """递归合并，override 优先"""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _parse_value(raw: str) -> Any:
    # JSON 字面量（数字、true/false、列表）；其余按字符串处理
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_override(expr: str) -> Tuple[List[str], Any]:
    """'train.loss.beta=0.2' -> (['train', 'loss', 'beta'], 0.2)"""
    if "=" not in expr:
        raise ConfigError(f"覆盖项格式应为 a.b=c，收到 {expr!r}")
    key, raw = expr.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"覆盖项缺少键名: {expr!r}")
    return keys, _parse_value(raw.strip())


def set_dotted(target: Dict[str, Any], keys: List[str], value: Any) -> None:
    node = target
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def _normalize_aliases(node: Any) -> Any:
    """lambda_ 与 lambda 指向同一字段，统一为别名"""
    if isinstance(node, dict):
        return {("lambda" if k == "lambda_" else k): _normalize_aliases(v) for k, v in node.items()}
    return node


def preset_layer(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"未知预设 {name!r}，可选: {', '.join(sorted(PRESETS))}")
    return {"preset": name, "train": copy.deepcopy(PRESETS[name])}


def build_config(
    config_path: Optional[PathLike] = None,
    *,
    preset: Optional[str] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """按优先级合并各层并校验；flags 为点分键 -> 值（专用命令行参数）"""
    file_layer = load_config_file(config_path) if config_path else {}
    preset_name = preset or file_layer.get("preset")
    merged: Dict[str, Any] = preset_layer(preset_name) if preset_name else {}
    merged = deep_merge(merged, file_layer)
    if preset_name:
        merged["preset"] = preset_name
    for expr in overrides:
        keys, value = parse_override(expr)
        set_dotted(merged, keys, value)
    for dotted, value in (flags or {}).items():
        if value is not None:
            set_dotted(merged, dotted.split("."), value)
    return ExperimentConfig.model_validate(_normalize_aliases(merged))


def seed_flags(seed: Optional[int]) -> Dict[str, Any]:
    """--seed 同时作用于模型初始化与采样随机流"""
    if seed is None:
        return {}
    return {"train.seed": seed, "train.sampler.seed": seed}


def deterministic_flags() -> Dict[str, Any]:
    return {"train.num_workers": 1, "eval.num_workers": 1}


@dataclass(frozen=True)
class RunContext:
    """一次命令运行的上下文：配置、哈希与产物目录"""

    config: ExperimentConfig
    config_hash: str
    path: Path
    # 只覆盖决定模型参数的 model / train 块，评估参数变化不影响它
    training_hash: str = ""

    def artifact(self, name: str) -> Path:
        return self.path / name


def start_run(config: ExperimentConfig, run_dir: Optional[PathLike] = None) -> RunContext:
    """创建运行目录，写入 config.json，并把日志同时写入 run.log"""
    cfg_hash = config_hash(config)
    train_hash = config_hash(config, include=TRAINING_BLOCKS)
    path = create_run_directory(cfg_hash, run_dir)
    write_json(
        path / RUN_CONFIG_FILE,
        {"config_hash": cfg_hash, "training_hash": train_hash, "config": config.model_dump(mode="json", by_alias=True)},
    )
    attach_run_file_handler(str(path / RUN_LOG_FILE))
    logger.info("run directory %s (config %s)", path, cfg_hash)
    return RunContext(config=config, config_hash=cfg_hash, path=path, training_hash=train_hash)
