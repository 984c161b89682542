"""
目标函数对嵌入行的解析梯度（稀疏）
Analytic sparse gradients of the set objectives
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import NumericError
from app.losses.set2set import LossBreakdown, objective_gradients_batch, total_loss
from app.models.embedding import EmbeddingModel
from app.sampling.sampler import SampleBatch, SetSample
from app.schemas.config_schemas import LossConfig


@dataclass
class SparseGradient:
    """∂total/∂e_u 与样本中出现的物品行的梯度；未出现的物品没有条目"""

    user: int
    user_grad: np.ndarray
    items: np.ndarray
    item_grads: np.ndarray
    breakdown: Optional[LossBreakdown] = None

    def as_dict(self) -> Dict[int, np.ndarray]:
        return {int(v): g for v, g in zip(self.items, self.item_grads)}


@dataclass
class BatchGradient:
    """一批样本的目标值与按行聚合后的稀疏梯度"""

    totals: np.ndarray
    user_rows: np.ndarray
    user_grads: np.ndarray
    item_rows: np.ndarray
    item_grads: np.ndarray


def _check_finite(term: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(term)


def aggregate_rows(rows: np.ndarray, grads: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """按行号聚合梯度（重复出现的行累加），行号升序"""
    uniq, inverse = np.unique(rows, return_inverse=True)
    out = np.zeros((len(uniq), grads.shape[1]), dtype=np.float64)
    np.add.at(out, inverse.reshape(-1), grads)
    return uniq, out


def batch_gradients(
    users: np.ndarray,
    pos_items: np.ndarray,
    neg_items: np.ndarray,
    model: EmbeddingModel,
    config: LossConfig,
    masks: Optional[np.ndarray] = None,
) -> BatchGradient:
    """一批样本目标之和对嵌入行的梯度（链式法则：r̂ = e_u · e_v）"""
    users = np.asarray(users, dtype=np.int64)
    eu = model.user_emb[users].astype(np.float64)
    ep = model.item_emb[pos_items].astype(np.float64)
    en = model.item_emb[neg_items].astype(np.float64)
    pos_scores = np.einsum("bd,bld->bl", eu, ep)
    neg_scores = np.einsum("bd,bkd->bk", eu, en)
    _check_finite("scores", pos_scores)
    _check_finite("scores", neg_scores)

    totals, g_pos, g_neg = objective_gradients_batch(pos_scores, neg_scores, config, masks)
    _check_finite("total", totals)
    _check_finite("d_total/d_pos_scores", g_pos)
    _check_finite("d_total/d_neg_scores", g_neg)

    g_user = np.einsum("bl,bld->bd", g_pos, ep) + np.einsum("bk,bkd->bd", g_neg, en)
    g_pos_rows = g_pos[:, :, None] * eu[:, None, :]
    g_neg_rows = g_neg[:, :, None] * eu[:, None, :]
    dim = eu.shape[1]
    item_rows, item_grads = aggregate_rows(
        np.concatenate([np.asarray(pos_items).reshape(-1), np.asarray(neg_items).reshape(-1)]),
        np.concatenate([g_pos_rows.reshape(-1, dim), g_neg_rows.reshape(-1, dim)]),
    )
    user_rows, user_grads = aggregate_rows(users, g_user)
    _check_finite("d_total/d_user_emb", user_grads)
    _check_finite("d_total/d_item_emb", item_grads)
    return BatchGradient(totals, user_rows, user_grads, item_rows, item_grads)


def loss_gradients(sample: SetSample, model: EmbeddingModel, config: LossConfig) -> SparseGradient:
    """单个样本 total_loss 的精确梯度；min/max 取前向选中元素的次梯度"""
    masks = None if sample.mask is None else np.asarray(sample.mask)[None, :]
    grad = batch_gradients(
        np.array([sample.user]),
        np.asarray(sample.pos_items, dtype=np.int64)[None, :],
        np.asarray(sample.neg_items, dtype=np.int64)[None, :],
        model,
        config,
        masks,
    )
    pos_scores = model.item_emb[sample.pos_items] @ model.user_emb[sample.user]
    neg_scores = model.item_emb[sample.neg_items] @ model.user_emb[sample.user]
    return SparseGradient(
        user=sample.user,
        user_grad=grad.user_grads[0],
        items=grad.item_rows,
        item_grads=grad.item_grads,
        breakdown=total_loss(pos_scores, neg_scores, config, sample.mask),
    )


def sample_batch_gradients(batch: SampleBatch, model: EmbeddingModel, config: LossConfig) -> BatchGradient:
    return batch_gradients(batch.users, batch.pos_items, batch.neg_items, model, config, batch.masks)
