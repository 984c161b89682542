"""
稀疏优化器：只更新本步涉及的嵌入行
Sparse row-wise optimizers (SGD / lazy Adam)

传入的梯度是“待最大化目标”的梯度；内部按最小化 −objective 实现下降。
"""

from __future__ import annotations

import numpy as np

from app.core.exceptions import ConfigError
from app.models.embedding import EmbeddingModel
from app.schemas.config_schemas import OptimizerConfig, OptimizerName


class SparseOptimizer:
    def __init__(self, model: EmbeddingModel, lr: float) -> None:
        if lr < 0:
            raise ConfigError("lr 不能为负")
        self.model = model
        self.lr = lr
        self.steps = 0

    def _update(self, table: str, rows: np.ndarray, descent_grad: np.ndarray) -> None:
        raise NotImplementedError

    def step(
        self,
        user_rows: np.ndarray,
        user_grads: np.ndarray,
        item_rows: np.ndarray,
        item_grads: np.ndarray,
    ) -> None:
        """rows 须唯一；grads 为目标函数的上升方向"""
        self.steps += 1
        self._update("user", user_rows, -user_grads)
        self._update("item", item_rows, -item_grads)

    def _table(self, table: str) -> np.ndarray:
        return self.model.user_emb if table == "user" else self.model.item_emb


class SparseSGD(SparseOptimizer):
    def _update(self, table: str, rows: np.ndarray, descent_grad: np.ndarray) -> None:
        params = self._table(table)
        params[rows] -= self.lr * descent_grad


class SparseAdam(SparseOptimizer):
    """惰性 Adam：只有被触及的行更新一、二阶矩；偏差校正使用全局步数"""

    def __init__(
        self,
        model: EmbeddingModel,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        super().__init__(model, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {
            "user": np.zeros(model.user_emb.shape, dtype=np.float64),
            "item": np.zeros(model.item_emb.shape, dtype=np.float64),
        }
        self._v = {
            "user": np.zeros(model.user_emb.shape, dtype=np.float64),
            "item": np.zeros(model.item_emb.shape, dtype=np.float64),
        }

    def _update(self, table: str, rows: np.ndarray, descent_grad: np.ndarray) -> None:
        m = self._m[table]
        v = self._v[table]
        m[rows] = self.beta1 * m[rows] + (1.0 - self.beta1) * descent_grad
        v[rows] = self.beta2 * v[rows] + (1.0 - self.beta2) * descent_grad * descent_grad
        m_hat = m[rows] / (1.0 - self.beta1 ** self.steps)
        v_hat = v[rows] / (1.0 - self.beta2 ** self.steps)
        params = self._table(table)
        params[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def build_optimizer(model: EmbeddingModel, lr: float, config: OptimizerConfig) -> SparseOptimizer:
    if config.name == OptimizerName.SGD:
        return SparseSGD(model, lr)
    return SparseAdam(model, lr, config.beta1, config.beta2, config.eps)
