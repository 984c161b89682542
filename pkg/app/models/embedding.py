"""
矩阵分解嵌入模型：用户/物品嵌入表，偏好分数为内积
Matrix-factorization embedding model
"""

from __future__ import annotations

from typing import Union

import numpy as np

from app.core.exceptions import ConfigError, IdOutOfRangeError, ShapeError

ArrayLike = Union[np.ndarray, list]


class EmbeddingModel:
    """user_emb: num_users × D，item_emb: num_items × D；score(u, v) = e_u · e_v。

    只有训练器会修改嵌入表；读操作可并发。
    """

    def __init__(self, user_emb: np.ndarray, item_emb: np.ndarray) -> None:
        user_emb = np.asarray(user_emb)
        item_emb = np.asarray(item_emb)
        if user_emb.ndim != 2 or item_emb.ndim != 2 or user_emb.shape[1] != item_emb.shape[1]:
            raise ShapeError(f"嵌入表维度不一致: {user_emb.shape} vs {item_emb.shape}")
        if user_emb.dtype != item_emb.dtype:
            raise ShapeError("用户与物品嵌入表 dtype 不一致")
        self.user_emb = user_emb
        self.item_emb = item_emb

    @property
    def dim(self) -> int:
        return int(self.user_emb.shape[1])

    @property
    def num_users(self) -> int:
        return int(self.user_emb.shape[0])

    @property
    def num_items(self) -> int:
        return int(self.item_emb.shape[0])

    @property
    def dtype(self) -> np.dtype:
        return self.user_emb.dtype

    def _check_user(self, u: int) -> int:
        if not 0 <= int(u) < self.num_users:
            raise IdOutOfRangeError("user", int(u), self.num_users)
        return int(u)

    def _check_item(self, v: int) -> int:
        if not 0 <= int(v) < self.num_items:
            raise IdOutOfRangeError("item", int(v), self.num_items)
        return int(v)

    def score(self, u: int, v: int) -> float:
        """r̂_uv = e_u · e_v"""
        u = self._check_user(u)
        v = self._check_item(v)
        return float(np.dot(self.user_emb[u], self.item_emb[v]))

    def score_all_items(self, u: int) -> np.ndarray:
        """用户 u 对全部物品的分数向量"""
        u = self._check_user(u)
        return self.item_emb @ self.user_emb[u]

    def score_users(self, users: ArrayLike) -> np.ndarray:
        """一批用户的 len(users) × num_items 分数矩阵"""
        users = np.asarray(users, dtype=np.int64)
        if users.size and (users.min() < 0 or users.max() >= self.num_users):
            bad = int(users[(users < 0) | (users >= self.num_users)][0])
            raise IdOutOfRangeError("user", bad, self.num_users)
        return self.user_emb[users] @ self.item_emb.T

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.user_emb).all() and np.isfinite(self.item_emb).all())

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.user_emb.copy(), self.item_emb.copy())

    def __repr__(self) -> str:
        return f"EmbeddingModel(users={self.num_users}, items={self.num_items}, dim={self.dim}, dtype={self.dtype})"


def init_model(
    num_users: int,
    num_items: int,
    dim: int = 64,
    init_scale: float = 0.1,
    seed: int = 2021,
    dtype: str = "float64",
) -> EmbeddingModel:
    """嵌入项独立同分布 N(0, init_scale²)；给定 seed 时逐位确定"""
    if num_users <= 0 or num_items <= 0:
        raise ConfigError(f"用户数与物品数必须为正 (users={num_users}, items={num_items})")
    if dim < 1:
        raise ConfigError("dim 必须 ≥ 1")
    if not init_scale > 0:
        raise ConfigError("init_scale 必须 > 0")
    rng = np.random.default_rng(seed)
    user_emb = rng.normal(0.0, init_scale, size=(num_users, dim))
    item_emb = rng.normal(0.0, init_scale, size=(num_items, dim))
    return EmbeddingModel(user_emb.astype(dtype, copy=False), item_emb.astype(dtype, copy=False))
