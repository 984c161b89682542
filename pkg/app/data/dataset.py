"""
交互数据集：CSR 稀疏存储、用户核心过滤、按用户划分与物品流行度
Interaction dataset
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from app.core.exceptions import ConfigError, EmptyDatasetError, IdOutOfRangeError
from app.parsers.ratings_read import Interaction
from app.schemas.config_schemas import SplitName, SplitStrategy
from app.utils.log_utils import log_call
from config.constants import RATIO_TOLERANCE
from config.logging_config import get_logger

logger = get_logger(__name__)

Ratios = Tuple[float, float, float]


def csr_from_pairs(users: np.ndarray, items: np.ndarray, num_users: int, num_items: int) -> sp.csr_matrix:
    """由唯一的 (user, item) 对构造 CSR，行内物品升序"""
    order = np.lexsort((items, users))
    indices = np.asarray(items, dtype=np.int64)[order]
    counts = np.bincount(np.asarray(users, dtype=np.int64), minlength=num_users)
    indptr = np.zeros(num_users + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    data = np.ones(len(indices), dtype=np.int8)
    return sp.csr_matrix((data, indices, indptr), shape=(num_users, num_items))


def empty_csr(num_users: int, num_items: int) -> sp.csr_matrix:
    return sp.csr_matrix((num_users, num_items), dtype=np.int8)


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """每个用户的观测物品集合（train / val / test 三个 CSR 分区）。

    构造后不再修改，可被多个 worker 并发读取。
    """

    num_users: int
    num_items: int
    train: sp.csr_matrix
    val: sp.csr_matrix
    test: sp.csr_matrix
    popularity: np.ndarray
    split_ratios: Optional[Ratios] = None
    seed: Optional[int] = None
    # 与 train.indices 对齐的时间戳（仅未划分数据集，缺失为 NaN）
    train_times: Optional[np.ndarray] = None

    # ---------------- 访问 ----------------
    def partition(self, split: Union[SplitName, str]) -> sp.csr_matrix:
        name = split.value if isinstance(split, SplitName) else str(split)
        if name == "train":
            return self.train
        if name == SplitName.VAL.value:
            return self.val
        if name == SplitName.TEST.value:
            return self.test
        raise ConfigError(f"未知分区 {split!r}")

    def _check_user(self, u: int) -> None:
        if not 0 <= u < self.num_users:
            raise IdOutOfRangeError("user", u, self.num_users)

    def items_of(self, split: Union[SplitName, str], u: int) -> np.ndarray:
        self._check_user(u)
        m = self.partition(split)
        return m.indices[m.indptr[u]:m.indptr[u + 1]]

    def train_items(self, u: int) -> np.ndarray:
        self._check_user(u)
        return self.train.indices[self.train.indptr[u]:self.train.indptr[u + 1]]

    def val_items(self, u: int) -> np.ndarray:
        return self.items_of(SplitName.VAL, u)

    def test_items(self, u: int) -> np.ndarray:
        return self.items_of(SplitName.TEST, u)

    @cached_property
    def train_counts(self) -> np.ndarray:
        return np.diff(self.train.indptr)

    @property
    def num_train_interactions(self) -> int:
        return int(self.train.indptr[-1])

    @property
    def is_split(self) -> bool:
        return self.split_ratios is not None

    @cached_property
    def train_keys(self) -> np.ndarray:
        """全局有序的 user * num_items + item 键，用于向量化成员判断"""
        rows = np.repeat(np.arange(self.num_users, dtype=np.int64), self.train_counts)
        return rows * self.num_items + self.train.indices.astype(np.int64)

    def in_train(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """逐元素判断 item ∈ train(user)（广播）"""
        keys = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        all_keys = self.train_keys
        if len(all_keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(all_keys, keys)
        pos = np.minimum(pos, len(all_keys) - 1)
        return all_keys[pos] == keys


# ---------------- 构建 ----------------


def _densify(ids: np.ndarray) -> Tuple[np.ndarray, int]:
    uniq, inverse = np.unique(ids, return_inverse=True)
    return inverse.astype(np.int64), len(uniq)


def dataset_from_arrays(
    users: np.ndarray,
    items: np.ndarray,
    min_interactions: int,
    times: Optional[np.ndarray] = None,
) -> InteractionDataset:
    """由交互数组构建（未划分）数据集；过滤交互数不足的用户并重新稠密化编号"""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if len(users) == 0:
        raise EmptyDatasetError("交互列表为空")

    # 重复 (user, item) 只保留第一次出现
    _, first = np.unique(users * (int(items.max()) + 1) + items, return_index=True)
    first = np.sort(first)
    users, items = users[first], items[first]
    if times is not None:
        times = np.asarray(times, dtype=np.float64)[first]

    counts = np.bincount(users)
    keep_user = counts >= min_interactions
    keep = keep_user[users]
    dropped = int(np.count_nonzero(counts > 0) - np.count_nonzero(keep_user))
    if dropped:
        logger.info("core filter dropped %s users with < %s interactions", dropped, min_interactions)
    if not keep.any():
        raise EmptyDatasetError(f"所有用户交互数均少于 {min_interactions}")

    users, num_users = _densify(users[keep])
    items, num_items = _densify(items[keep])
    train = csr_from_pairs(users, items, num_users, num_items)

    train_times = None
    if times is not None:
        kept_times = np.asarray(times, dtype=np.float64)[keep]
        if not np.isnan(kept_times).all():
            train_times = kept_times[np.lexsort((items, users))]

    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=train,
        val=empty_csr(num_users, num_items),
        test=empty_csr(num_users, num_items),
        popularity=np.bincount(items, minlength=num_items).astype(np.int64),
        train_times=train_times,
    )


@log_call
def build_dataset(interactions: Sequence[Interaction], min_interactions: int = 10) -> InteractionDataset:
    """核心过滤（仅用户侧）后构建未划分数据集，全部交互位于 train"""
    if not interactions:
        raise EmptyDatasetError("交互列表为空")
    users = np.fromiter((x.user for x in interactions), dtype=np.int64, count=len(interactions))
    items = np.fromiter((x.item for x in interactions), dtype=np.int64, count=len(interactions))
    times = np.fromiter(
        (np.nan if x.timestamp is None else float(x.timestamp) for x in interactions),
        dtype=np.float64,
        count=len(interactions),
    )
    ds = dataset_from_arrays(users, items, min_interactions, times)
    logger.info(
        "built dataset: users=%s items=%s interactions=%s",
        ds.num_users, ds.num_items, ds.num_train_interactions,
    )
    return ds


# ---------------- 划分 ----------------


def split_counts(n: int, ratios: Ratios) -> Optional[Tuple[int, int, int]]:
    """单个用户的 (train, val, test) 数量：val/test 向下取整，余数归 train，再保证各至少 1。

    n < 3 时返回 None（该用户被丢弃）。
    """
    if n < 3:
        return None
    n_val = max(1, math.floor(n * ratios[1] + 1e-9))
    n_test = max(1, math.floor(n * ratios[2] + 1e-9))
    while n - n_val - n_test < 1:
        if n_val >= n_test and n_val > 1:
            n_val -= 1
        else:
            n_test -= 1
    return n - n_val - n_test, n_val, n_test


def _check_ratios(ratios: Sequence[float]) -> Ratios:
    if len(ratios) != 3:
        raise ConfigError("划分比例需要 (train, val, test) 三个值")
    if any(r < 0 for r in ratios):
        raise ConfigError("划分比例不能为负")
    if abs(sum(ratios) - 1.0) > RATIO_TOLERANCE:
        raise ConfigError(f"划分比例之和必须为 1，当前为 {sum(ratios)!r}")
    return float(ratios[0]), float(ratios[1]), float(ratios[2])


@log_call
def split_dataset(
    ds: InteractionDataset,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 2021,
    strategy: Union[SplitStrategy, str] = SplitStrategy.RANDOM,
) -> InteractionDataset:
    """按用户随机（或按时间）划分 train / val / test，给定 seed 时结果确定。

    少于 3 条训练交互的用户被丢弃并记录日志。
    """
    ratios = _check_ratios(ratios)
    strategy = SplitStrategy(strategy)
    if strategy == SplitStrategy.TEMPORAL and ds.train_times is None:
        raise ConfigError("按时间划分需要时间戳")

    rng = np.random.default_rng(seed)
    parts: Dict[str, Tuple[List[np.ndarray], List[np.ndarray]]] = {
        "train": ([], []), "val": ([], []), "test": ([], []),
    }
    dropped: List[int] = []
    new_user = 0
    for u in range(ds.num_users):
        lo, hi = ds.train.indptr[u], ds.train.indptr[u + 1]
        items = ds.train.indices[lo:hi]
        counts = split_counts(len(items), ratios)
        if counts is None:
            dropped.append(u)
            continue
        _, n_val, n_test = counts
        if strategy == SplitStrategy.TEMPORAL:
            stamps = ds.train_times[lo:hi]
            order = np.lexsort((items, np.nan_to_num(stamps, nan=-np.inf)))
            ordered = items[order]
            test, val, train = ordered[-n_test:], ordered[-n_test - n_val:-n_test], ordered[:-n_test - n_val]
        else:
            perm = rng.permutation(items)
            test, val, train = perm[:n_test], perm[n_test:n_test + n_val], perm[n_test + n_val:]
        for name, chunk in (("train", train), ("val", val), ("test", test)):
            parts[name][0].append(np.full(len(chunk), new_user, dtype=np.int64))
            parts[name][1].append(np.asarray(chunk, dtype=np.int64))
        new_user += 1

    if dropped:
        logger.warning("split dropped %s users with < 3 interactions: %s", len(dropped), dropped[:20])
    if new_user == 0:
        raise EmptyDatasetError("划分后没有可用用户")

    def _csr(name: str) -> sp.csr_matrix:
        us, its = parts[name]
        return csr_from_pairs(np.concatenate(us), np.concatenate(its), new_user, ds.num_items)

    train = _csr("train")
    return InteractionDataset(
        num_users=new_user,
        num_items=ds.num_items,
        train=train,
        val=_csr("val"),
        test=_csr("test"),
        popularity=np.bincount(train.indices, minlength=ds.num_items).astype(np.int64),
        split_ratios=ratios,
        seed=seed,
    )


# ---------------- 统计 ----------------


def popularity_distribution(ds: InteractionDataset, smoothing: float = 0.0) -> np.ndarray:
    """weight(v) ∝ popularity(v) + smoothing，和为 1"""
    if smoothing < 0:
        raise ConfigError("smoothing 不能为负")
    weights = ds.popularity.astype(np.float64) + smoothing
    total = weights.sum()
    if total <= 0:
        raise EmptyDatasetError("训练集为空，无法计算流行度")
    return weights / total


def dataset_stats(ds: InteractionDataset) -> Dict[str, float]:
    n_train = ds.num_train_interactions
    n_val = int(ds.val.indptr[-1])
    n_test = int(ds.test.indptr[-1])
    total = n_train + n_val + n_test
    return {
        "users": ds.num_users,
        "items": ds.num_items,
        "interactions": total,
        "train_interactions": n_train,
        "val_interactions": n_val,
        "test_interactions": n_test,
        "density": total / float(ds.num_users * ds.num_items),
    }


def synthetic_dataset(
    num_users: int,
    num_items: int,
    interactions_per_user: int,
    seed: int = 0,
    popularity_skew: float = 0.8,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
) -> InteractionDataset:
    """生成已划分的合成数据集：物品流行度服从 Zipf 型分布"""
    if interactions_per_user > num_items:
        raise ConfigError("每个用户的交互数不能超过物品数")
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.power(np.arange(1, num_items + 1, dtype=np.float64), popularity_skew)
    weights /= weights.sum()
    items = np.concatenate(
        [rng.choice(num_items, size=interactions_per_user, replace=False, p=weights) for _ in range(num_users)]
    )
    users = np.repeat(np.arange(num_users, dtype=np.int64), interactions_per_user)
    ds = dataset_from_arrays(users, items, min_interactions=3)
    return split_dataset(ds, ratios, seed=seed)
