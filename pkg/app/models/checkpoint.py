"""
模型检查点读写（S2SR-CK1）
Checkpoint IO

布局（小端）：magic(8) | u8 num_users | u8 num_items | u8 dim | f8 user_emb | f8 item_emb
旁路 JSON：<path>.json（config_hash, epoch, dim, dtype）
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from app.core.exceptions import CheckpointError
from app.models.embedding import EmbeddingModel
from app.utils.file_utils import sidecar_path, write_json
from app.utils.log_utils import log_call
from config.constants import CHECKPOINT_MAGIC
from config.logging_config import get_logger

logger = get_logger(__name__)

_U8 = np.dtype("<u8")
_F8 = np.dtype("<f8")
_HEADER = len(CHECKPOINT_MAGIC) + 3 * _U8.itemsize


@log_call
def save_checkpoint(
    model: EmbeddingModel,
    path: Union[str, Path],
    *,
    config_hash: Optional[str] = None,
    epoch: Optional[int] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([model.num_users, model.num_items, model.dim], dtype=_U8).tobytes()
    payload = b"".join(
        [
            CHECKPOINT_MAGIC,
            header,
            np.ascontiguousarray(model.user_emb, dtype=_F8).tobytes(),
            np.ascontiguousarray(model.item_emb, dtype=_F8).tobytes(),
        ]
    )
    path.write_bytes(payload)
    write_json(
        sidecar_path(path),
        {"config_hash": config_hash, "epoch": epoch, "dim": model.dim, "dtype": str(model.dtype)},
    )
    return path


def read_checkpoint_meta(path: Union[str, Path]) -> Dict[str, Any]:
    side = sidecar_path(path)
    if not side.is_file():
        return {}
    try:
        return json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(str(side), f"旁路 JSON 无法解析: {exc}") from exc


@log_call
def load_checkpoint(path: Union[str, Path], expected_config_hash: Optional[str] = None) -> EmbeddingModel:
    """读取检查点；配置哈希与期望不一致时只告警"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(2, "检查点不存在", str(path))
    raw = path.read_bytes()
    if len(raw) < _HEADER or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(str(path), "magic 不匹配或文件头不完整")
    num_users, num_items, dim = (int(x) for x in np.frombuffer(raw, dtype=_U8, count=3, offset=len(CHECKPOINT_MAGIC)))
    expected = _HEADER + (num_users + num_items) * dim * _F8.itemsize
    if len(raw) != expected:
        raise CheckpointError(str(path), f"文件大小 {len(raw)} 与维度不符（期望 {expected}）")

    user_emb = np.frombuffer(raw, dtype=_F8, count=num_users * dim, offset=_HEADER).reshape(num_users, dim)
    item_offset = _HEADER + num_users * dim * _F8.itemsize
    item_emb = np.frombuffer(raw, dtype=_F8, count=num_items * dim, offset=item_offset).reshape(num_items, dim)

    meta = read_checkpoint_meta(path)
    dtype = meta.get("dtype", "float64")
    model = EmbeddingModel(user_emb.astype(dtype), item_emb.astype(dtype))

    stored_hash = meta.get("config_hash")
    if expected_config_hash is not None and stored_hash != expected_config_hash:
        logger.warning(
            "checkpoint %s was written under config %s, current config is %s",
            path, stored_hash, expected_config_hash,
        )
    return model
