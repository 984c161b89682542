"""
pytest 配置文件
"""

import os
import sys
from typing import Dict, Iterable, Optional

import numpy as np
import pytest

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.data.dataset import InteractionDataset, csr_from_pairs, synthetic_dataset  # noqa: E402
from app.schemas.config_schemas import LossConfig, SamplerConfig, TrainConfig  # noqa: E402


def _pairs(rows: Optional[Dict[int, Iterable[int]]]):
    users, items = [], []
    for u, its in (rows or {}).items():
        for v in its:
            users.append(u)
            items.append(v)
    return np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64)


def make_dataset(
    train: Dict[int, Iterable[int]],
    num_items: int,
    val: Optional[Dict[int, Iterable[int]]] = None,
    test: Optional[Dict[int, Iterable[int]]] = None,
    num_users: Optional[int] = None,
) -> InteractionDataset:
    """直接由 {user: items} 字典构造已划分的数据集"""
    num_users = num_users if num_users is not None else 1 + max(
        list(train) + list((val or {}).keys()) + list((test or {}).keys())
    )
    tu, ti = _pairs(train)
    vu, vi = _pairs(val)
    su, si = _pairs(test)
    train_csr = csr_from_pairs(tu, ti, num_users, num_items)
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=train_csr,
        val=csr_from_pairs(vu, vi, num_users, num_items),
        test=csr_from_pairs(su, si, num_users, num_items),
        popularity=np.bincount(ti, minlength=num_items).astype(np.int64),
        split_ratios=(0.8, 0.1, 0.1),
        seed=0,
    )


@pytest.fixture
def dataset_factory():
    """返回 make_dataset 构造函数"""
    return make_dataset


@pytest.fixture
def toy_dataset() -> InteractionDataset:
    """5 个用户 × 8 个物品的稠密观测模式"""
    train = {
        0: [0, 1, 2, 3],
        1: [1, 2, 3, 4],
        2: [2, 3, 4, 5],
        3: [0, 4, 5, 6],
        4: [0, 1, 6, 7],
    }
    val = {0: [4], 1: [5], 2: [6], 3: [7], 4: [2]}
    test = {0: [5], 1: [6], 2: [7], 3: [1], 4: [3]}
    return make_dataset(train, 8, val, test)


@pytest.fixture
def small_synthetic():
    """60 个用户、40 个物品的合成数据集"""
    return synthetic_dataset(60, 40, 12, seed=7)


@pytest.fixture
def fast_train_config():
    """小规模、快速的训练配置（SGD，无正则）"""

    def _make(**overrides) -> TrainConfig:
        loss = overrides.pop("loss", LossConfig())
        sampler = overrides.pop("sampler", SamplerConfig(L=2, K=3, seed=11))
        base = dict(
            epochs=5,
            lr=0.05,
            l2_reg=0.0,
            seed=3,
            dim=8,
            batch_size=16,
            patience=50,
            loss=loss,
            sampler=sampler,
            optimizer={"name": "sgd"},
        )
        base.update(overrides)
        return TrainConfig(**base)

    return _make


@pytest.fixture
def isolated_runs(tmp_path, monkeypatch):
    """运行目录指向临时目录"""
    from config.settings import settings

    runs = tmp_path / "runs"
    monkeypatch.setattr(settings, "RUNS_DIR", str(runs))
    return runs
