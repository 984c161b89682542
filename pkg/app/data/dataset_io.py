"""
数据集二进制读写（S2SR-DS1）
Dataset binary IO

布局（小端）：
    magic(8) | u8 num_users | u8 num_items | u8 flags | f8 split_ratios[3] | i8 seed
    flags：bit0 已划分，bit1 记录了 seed；未划分时 split_ratios 为 0
    对 train / val / test 依次：u8 nnz | i8 offsets[num_users + 1] | i8 ids[nnz]
    i8 popularity[num_items]
旁路 JSON：<path>.json
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from app.core.exceptions import DatasetFileError
from app.data.dataset import InteractionDataset
from app.utils.file_utils import sidecar_path, write_json
from app.utils.log_utils import log_call
from config.constants import DATASET_MAGIC
from config.logging_config import get_logger

logger = get_logger(__name__)

_U8 = np.dtype("<u8")
_I8 = np.dtype("<i8")
_F8 = np.dtype("<f8")
_PARTS = ("train", "val", "test")
_FLAG_SPLIT = 1
_FLAG_SEED = 2


def dataset_to_bytes(ds: InteractionDataset) -> bytes:
    flags = (_FLAG_SPLIT if ds.is_split else 0) | (_FLAG_SEED if ds.seed is not None else 0)
    ratios = ds.split_ratios if ds.is_split else (0.0, 0.0, 0.0)
    chunks = [
        DATASET_MAGIC,
        np.array([ds.num_users, ds.num_items, flags], dtype=_U8).tobytes(),
        np.array(ratios, dtype=_F8).tobytes(),
        np.array([ds.seed if ds.seed is not None else 0], dtype=_I8).tobytes(),
    ]
    for name in _PARTS:
        m = ds.partition(name)
        chunks.append(np.array([m.indptr[-1]], dtype=_U8).tobytes())
        chunks.append(np.asarray(m.indptr, dtype=_I8).tobytes())
        chunks.append(np.asarray(m.indices, dtype=_I8).tobytes())
    chunks.append(np.asarray(ds.popularity, dtype=_I8).tobytes())
    return b"".join(chunks)


@log_call
def save_dataset(
    ds: InteractionDataset,
    path: Union[str, Path],
    *,
    config_hash: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """写入二进制数据集及 JSON 旁路文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset_to_bytes(ds))
    meta: Dict[str, Any] = {
        "num_users": ds.num_users,
        "num_items": ds.num_items,
        "num_interactions": int(sum(ds.partition(p).indptr[-1] for p in _PARTS)),
        "split_ratios": list(ds.split_ratios) if ds.split_ratios else None,
        "seed": ds.seed,
        "config_hash": config_hash,
    }
    if extra:
        meta.update(extra)
    write_json(sidecar_path(path), meta)
    return path


class _Reader:
    def __init__(self, raw: bytes, path: str) -> None:
        self.raw = raw
        self.path = path
        self.offset = 0

    def take(self, dtype: np.dtype, count: int) -> np.ndarray:
        need = dtype.itemsize * count
        if count < 0 or self.offset + need > len(self.raw):
            raise DatasetFileError(self.path, "文件被截断")
        out = np.frombuffer(self.raw, dtype=dtype, count=count, offset=self.offset)
        self.offset += need
        return out


def _read_partition(reader: _Reader, num_users: int, num_items: int) -> sp.csr_matrix:
    nnz = int(reader.take(_U8, 1)[0])
    indptr = reader.take(_I8, num_users + 1).astype(np.int64)
    indices = reader.take(_I8, nnz).astype(np.int64)
    if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr) < 0):
        raise DatasetFileError(reader.path, "offsets 不一致")
    if nnz and (indices.min() < 0 or indices.max() >= num_items):
        raise DatasetFileError(reader.path, "物品编号越界")
    data = np.ones(nnz, dtype=np.int8)
    return sp.csr_matrix((data, indices, indptr), shape=(num_users, num_items))


def _read_sidecar(path: Path) -> Dict[str, Any]:
    side = sidecar_path(path)
    if not side.is_file():
        return {}
    try:
        return json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFileError(str(side), f"旁路 JSON 无法解析: {exc}") from exc


@log_call
def load_dataset(path: Union[str, Path]) -> Tuple[InteractionDataset, Dict[str, Any]]:
    """读取二进制数据集，返回 (数据集, 旁路元数据)"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(2, "数据集文件不存在", str(path))
    raw = path.read_bytes()
    if raw[: len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise DatasetFileError(str(path), "magic 不匹配")
    reader = _Reader(raw, str(path))
    reader.offset = len(DATASET_MAGIC)
    num_users, num_items, flags = (int(x) for x in reader.take(_U8, 3))
    ratios = tuple(float(r) for r in reader.take(_F8, 3))
    seed = int(reader.take(_I8, 1)[0])
    if flags & ~(_FLAG_SPLIT | _FLAG_SEED):
        raise DatasetFileError(str(path), f"未知的 flags: {flags}")
    parts = {name: _read_partition(reader, num_users, num_items) for name in _PARTS}
    popularity = reader.take(_I8, num_items).astype(np.int64)
    if reader.offset != len(raw):
        raise DatasetFileError(str(path), "文件尾部有多余字节")
    if int(popularity.sum()) != int(parts["train"].indptr[-1]):
        raise DatasetFileError(str(path), "popularity 与训练交互数不一致")

    meta = _read_sidecar(path)
    ds = InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=parts["train"],
        val=parts["val"],
        test=parts["test"],
        popularity=popularity,
        split_ratios=ratios if flags & _FLAG_SPLIT else None,
        seed=seed if flags & _FLAG_SEED else None,
    )
    logger.info("loaded dataset %s: users=%s items=%s", path, num_users, num_items)
    return ds, meta
