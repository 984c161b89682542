"""
集合比较目标函数：item-to-set 与 set-to-set 两级比较（含自适应 mask 与 BPR 基线）
Set comparison objectives

所有函数返回“待最大化”的目标值；训练器对其做梯度上升。
标量接口（单个样本）与批量接口共用同一套前向/反向实现。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from app.core.exceptions import ShapeError
from app.schemas.config_schemas import LossConfig, Objective, SetSummary
from config.constants import DEFAULT_F_FLOOR

ArrayLike = Union[np.ndarray, list, tuple]


@dataclass(frozen=True)
class LossBreakdown:
    """单个样本的目标分解"""

    l2: float
    l3: float
    total: float
    hard_neg_index: int
    easy_pos_index: int = 0


# ---------------- 基础比较 ----------------


def pref_gain(x, y):
    """D(x, y) = σ(x − y)"""
    return expit(np.subtract(x, y))


def _mask_weights(pos: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return np.ones_like(pos)
    mask = np.asarray(mask, dtype=pos.dtype)
    if mask.shape != pos.shape:
        raise ShapeError(f"mask 形状 {mask.shape} 与观测集合 {pos.shape} 不一致")
    return mask


def set_compare(pos_scores: ArrayLike, y: float, mask: Optional[ArrayLike] = None) -> float:
    """F(X, y) = Σ_i D(x_i, y) · m_i"""
    pos = np.asarray(pos_scores, dtype=np.float64)
    m = _mask_weights(pos, None if mask is None else np.asarray(mask))
    return float(np.sum(pref_gain(pos, y) * m))


def _neg_terms(pos: np.ndarray, neg: np.ndarray, m: np.ndarray, f_floor: float):
    """批量 F(S+, y_j)：pos (B,L), neg (B,K) -> s (B,L,K), F (B,K)"""
    s = expit(pos[:, :, None] - neg[:, None, :])
    F = np.einsum("bl,blk->bk", m, s)
    return s, F, np.maximum(F, f_floor)


def _pos_terms(pos: np.ndarray, m: np.ndarray, f_floor: float, include_self: bool):
    """批量 F(S+, x_k)：s[b,i,k] = σ(x_i − x_k)，权重 W[b,i,k] = m_i（可去掉 i = k）"""
    L = pos.shape[1]
    s = expit(pos[:, :, None] - pos[:, None, :])
    W = np.broadcast_to(m[:, :, None], s.shape)
    if not include_self:
        W = W * (1.0 - np.eye(L, dtype=pos.dtype))[None, :, :]
    P = np.einsum("bik,bik->bk", W, s)
    return s, W, P, np.maximum(P, f_floor)


# ---------------- 批量前向 / 反向 ----------------


@dataclass
class SetLossBatch:
    """一批样本的前向中间量，供反向复用"""

    pos: np.ndarray
    neg: np.ndarray
    mask: np.ndarray
    s_neg: np.ndarray
    F: np.ndarray
    F_clamped: np.ndarray
    ln_F: np.ndarray
    s_pos: np.ndarray
    W: np.ndarray
    P: np.ndarray
    P_clamped: np.ndarray
    ln_P: np.ndarray
    denom: np.ndarray
    f_pos: np.ndarray
    g_pos: np.ndarray
    easy_index: np.ndarray
    f_neg: np.ndarray
    hard_index: np.ndarray
    z: np.ndarray
    l2: np.ndarray
    l3: np.ndarray
    total: np.ndarray

    def breakdown(self, row: int = 0) -> LossBreakdown:
        return LossBreakdown(
            l2=float(self.l2[row]),
            l3=float(self.l3[row]),
            total=float(self.total[row]),
            hard_neg_index=int(self.hard_index[row]),
            easy_pos_index=int(self.easy_index[row]),
        )


def forward_batch(
    pos: np.ndarray,
    neg: np.ndarray,
    mask: Optional[np.ndarray] = None,
    *,
    beta: float = 0.5,
    lam: float = 1.0,
    summary: SetSummary = SetSummary.SUMMARY,
    f_floor: float = DEFAULT_F_FLOOR,
    include_self: bool = True,
    survivor_normalization: bool = False,
    use_item_to_set: bool = True,
) -> SetLossBatch:
    """set2set 目标的批量前向。pos (B,L)，neg (B,K)，mask (B,L) 或 None"""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.ndim != 2 or neg.ndim != 2 or pos.shape[0] != neg.shape[0]:
        raise ShapeError(f"批量形状不一致: pos {pos.shape}, neg {neg.shape}")
    if pos.shape[1] < 1 or neg.shape[1] < 1:
        raise ShapeError("观测/未观测集合不能为空")
    m = _mask_weights(pos, mask)
    rows = np.arange(pos.shape[0])

    s_neg, F, F_clamped = _neg_terms(pos, neg, m, f_floor)
    ln_F = np.log(F_clamped)
    l2 = ln_F.sum(axis=1)

    s_pos, W, P, P_clamped = _pos_terms(pos, m, f_floor, include_self)
    ln_P = np.log(P_clamped)
    denom = m.sum(axis=1) if survivor_normalization else np.full(pos.shape[0], float(pos.shape[1]))
    f_pos = ln_P.sum(axis=1) / denom

    # 并列时取最小下标
    easy_index = np.argmax(ln_P, axis=1)
    g_pos = ln_P[rows, easy_index]
    hard_index = np.argmin(ln_F, axis=1)
    f_neg = ln_F[rows, hard_index]

    reference = g_pos if summary == SetSummary.EASY else f_pos
    z = f_neg - beta * reference
    l3 = -np.logaddexp(0.0, -z)
    total = (l2 if use_item_to_set else 0.0) + lam * l3

    return SetLossBatch(
        pos=pos, neg=neg, mask=m,
        s_neg=s_neg, F=F, F_clamped=F_clamped, ln_F=ln_F,
        s_pos=s_pos, W=W, P=P, P_clamped=P_clamped, ln_P=ln_P,
        denom=denom, f_pos=f_pos, g_pos=g_pos, easy_index=easy_index,
        f_neg=f_neg, hard_index=hard_index, z=z,
        l2=l2, l3=l3, total=np.asarray(total, dtype=np.float64),
    )


def backward_batch(
    c: SetLossBatch,
    *,
    beta: float = 0.5,
    lam: float = 1.0,
    summary: SetSummary = SetSummary.SUMMARY,
    use_item_to_set: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """∂total/∂pos (B,L) 与 ∂total/∂neg (B,K)。

    min / max 取前向选中的元素（次梯度）；被下限截断的 F 项梯度为 0。
    """
    B = c.pos.shape[0]
    rows = np.arange(B)
    coef_l3 = lam * expit(-c.z)  # ∂(λ·L3)/∂z

    g_lnF = np.full(c.F.shape, 1.0 if use_item_to_set else 0.0)
    g_lnF[rows, c.hard_index] += coef_l3
    g_F = np.where(c.F >= c.F_clamped, g_lnF / c.F_clamped, 0.0)

    d_ref = -beta * coef_l3  # ∂total/∂(f_pos 或 g_pos)
    if summary == SetSummary.EASY:
        g_lnP = np.zeros(c.P.shape)
        g_lnP[rows, c.easy_index] = d_ref
    else:
        g_lnP = np.broadcast_to((d_ref / c.denom)[:, None], c.P.shape)
    g_P = np.where(c.P >= c.P_clamped, g_lnP / c.P_clamped, 0.0)

    # F_j = Σ_i m_i σ(x_i − y_j)
    d_neg = c.mask[:, :, None] * c.s_neg * (1.0 - c.s_neg)
    g_pos = np.einsum("bk,blk->bl", g_F, d_neg)
    g_neg = -np.einsum("bk,blk->bk", g_F, d_neg)

    # P_k = Σ_i W_ik σ(x_i − x_k)；i = k 的自身项两部分相互抵消
    d_pos = c.W * c.s_pos * (1.0 - c.s_pos)
    g_pos = g_pos + np.einsum("bk,bik->bi", g_P, d_pos) - g_P * d_pos.sum(axis=1)
    return g_pos, g_neg


# ---------------- BPR ----------------


def bpr_forward(pos: np.ndarray, neg: np.ndarray, f_floor: float = DEFAULT_F_FLOOR) -> np.ndarray:
    """ln σ(r̂⁺ − r̂⁻)，pos/neg 形状 (B,1)"""
    d = np.asarray(pos, dtype=np.float64)[:, 0] - np.asarray(neg, dtype=np.float64)[:, 0]
    return np.log(np.maximum(expit(d), f_floor))


def bpr_backward(pos: np.ndarray, neg: np.ndarray, f_floor: float = DEFAULT_F_FLOOR) -> Tuple[np.ndarray, np.ndarray]:
    d = np.asarray(pos, dtype=np.float64)[:, 0] - np.asarray(neg, dtype=np.float64)[:, 0]
    g = np.where(expit(d) > f_floor, expit(-d), 0.0)
    return g[:, None], -g[:, None]


# ---------------- 按配置分派 ----------------


def _kwargs(config: LossConfig) -> dict:
    return dict(
        beta=config.beta,
        lam=config.lambda_,
        summary=config.summary,
        f_floor=config.f_floor,
        include_self=config.include_self_pairs,
        survivor_normalization=config.survivor_normalization,
        use_item_to_set=config.use_item_to_set,
    )


def _backward_kwargs(config: LossConfig) -> dict:
    return dict(beta=config.beta, lam=config.lambda_, summary=config.summary, use_item_to_set=config.use_item_to_set)


def _check_bpr_shape(pos: np.ndarray, neg: np.ndarray) -> None:
    if pos.shape[1] != 1 or neg.shape[1] != 1:
        raise ShapeError(f"bpr 目标要求 L=K=1，收到 L={pos.shape[1]}, K={neg.shape[1]}")


def objective_batch(
    pos: np.ndarray, neg: np.ndarray, config: LossConfig, mask: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, Optional[SetLossBatch]]:
    """每个样本的 total（待最大化），以及 set2set 的前向缓存"""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if config.objective == Objective.BPR:
        _check_bpr_shape(pos, neg)
        return bpr_forward(pos, neg, config.f_floor), None
    cache = forward_batch(pos, neg, mask, **_kwargs(config))
    return cache.total, cache


def objective_gradients_batch(
    pos: np.ndarray, neg: np.ndarray, config: LossConfig, mask: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(total (B,), ∂total/∂pos (B,L), ∂total/∂neg (B,K))"""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if config.objective == Objective.BPR:
        _check_bpr_shape(pos, neg)
        g_pos, g_neg = bpr_backward(pos, neg, config.f_floor)
        return bpr_forward(pos, neg, config.f_floor), g_pos, g_neg
    cache = forward_batch(pos, neg, mask, **_kwargs(config))
    g_pos, g_neg = backward_batch(cache, **_backward_kwargs(config))
    return cache.total, g_pos, g_neg


# ---------------- 标量接口 ----------------


def _single(pos_scores: ArrayLike, neg_scores: Optional[ArrayLike], mask: Optional[ArrayLike]):
    pos = np.asarray(pos_scores, dtype=np.float64).reshape(1, -1)
    neg = None if neg_scores is None else np.asarray(neg_scores, dtype=np.float64).reshape(1, -1)
    m = None if mask is None else np.asarray(mask, dtype=np.float64).reshape(1, -1)
    return pos, neg, m


def item_to_set_loss(
    pos_scores: ArrayLike,
    neg_scores: ArrayLike,
    mask: Optional[ArrayLike] = None,
    f_floor: float = DEFAULT_F_FLOOR,
) -> float:
    """L2 = Σ_j ln max(F(S+, y_j), ε)"""
    pos, neg, m = _single(pos_scores, neg_scores, mask)
    _, _, F_clamped = _neg_terms(pos, neg, _mask_weights(pos, m), f_floor)
    return float(np.log(F_clamped).sum())


def pos_summary(
    pos_scores: ArrayLike,
    mask: Optional[ArrayLike] = None,
    f_floor: float = DEFAULT_F_FLOOR,
    include_self: bool = True,
    survivor_normalization: bool = False,
) -> float:
    """f_pos = (1/L) Σ_k ln F(S+, x_k)；外层遍历全部 L 个位置，mask 只作用于 F 内部"""
    pos, _, m = _single(pos_scores, None, mask)
    weights = _mask_weights(pos, m)
    *_, P_clamped = _pos_terms(pos, weights, f_floor, include_self)
    denom = weights.sum() if survivor_normalization else pos.shape[1]
    return float(np.log(P_clamped).sum() / denom)


def easy_pos_summary(
    pos_scores: ArrayLike,
    mask: Optional[ArrayLike] = None,
    f_floor: float = DEFAULT_F_FLOOR,
    include_self: bool = True,
) -> Tuple[float, int]:
    """g_pos = max_k ln F(S+, x_k)，返回 (值, 下标)"""
    pos, _, m = _single(pos_scores, None, mask)
    *_, P_clamped = _pos_terms(pos, _mask_weights(pos, m), f_floor, include_self)
    ln_P = np.log(P_clamped[0])
    index = int(np.argmax(ln_P))
    return float(ln_P[index]), index


def hard_neg_summary(
    pos_scores: ArrayLike,
    neg_scores: ArrayLike,
    mask: Optional[ArrayLike] = None,
    f_floor: float = DEFAULT_F_FLOOR,
) -> Tuple[float, int]:
    """f_neg = min_j ln F(S+, y_j)，返回 (值, 下标)，并列取最小下标"""
    pos, neg, m = _single(pos_scores, neg_scores, mask)
    _, _, F_clamped = _neg_terms(pos, neg, _mask_weights(pos, m), f_floor)
    ln_F = np.log(F_clamped[0])
    index = int(np.argmin(ln_F))
    return float(ln_F[index]), index


def set_to_set_loss(
    pos_scores: ArrayLike,
    neg_scores: ArrayLike,
    beta: float,
    mask: Optional[ArrayLike] = None,
    variant: Union[SetSummary, str] = SetSummary.SUMMARY,
    f_floor: float = DEFAULT_F_FLOOR,
    include_self: bool = True,
    survivor_normalization: bool = False,
) -> float:
    """summary: ln σ(f_neg − β·f_pos)；easy: ln σ(f_neg − β·g_pos)"""
    pos, neg, m = _single(pos_scores, neg_scores, mask)
    cache = forward_batch(
        pos, neg, m,
        beta=beta, lam=1.0, summary=SetSummary(variant), f_floor=f_floor,
        include_self=include_self, survivor_normalization=survivor_normalization,
    )
    return float(cache.l3[0])


def total_loss(
    pos_scores: ArrayLike,
    neg_scores: ArrayLike,
    config: LossConfig,
    mask: Optional[ArrayLike] = None,
) -> LossBreakdown:
    """按配置计算单个样本的目标分解"""
    pos, neg, m = _single(pos_scores, neg_scores, mask)
    if m is not None and m.sum() < 2:
        raise ShapeError("mask 至少保留两个观测样本")
    if config.objective == Objective.BPR:
        _check_bpr_shape(pos, neg)
        value = float(bpr_forward(pos, neg, config.f_floor)[0])
        return LossBreakdown(l2=value, l3=0.0, total=value, hard_neg_index=0)
    return forward_batch(pos, neg, m, **_kwargs(config)).breakdown(0)
