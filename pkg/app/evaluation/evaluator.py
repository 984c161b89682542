"""
全量排序评估：候选集为 train(u) 之外的全部物品
Full-ranking evaluator
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import EvalError, ShapeError
from app.data.dataset import InteractionDataset
from app.evaluation.metrics import discounts
from app.models.embedding import EmbeddingModel
from app.schemas.config_schemas import SplitName
from app.schemas.report_schemas import EvalReport
from app.utils.log_utils import log_call
from config.constants import DEFAULT_CUTOFFS
from config.logging_config import get_logger
from config.settings import settings

logger = get_logger(__name__)


def rank_candidates(
    model: EmbeddingModel,
    ds: InteractionDataset,
    u: int,
    split: Union[SplitName, str] = SplitName.TEST,
) -> np.ndarray:
    """按分数降序排列 train(u) 之外的物品，同分时物品 id 小者在前。

    val / test 共用同一候选池，split 只做合法性检查。
    """
    SplitName(split)
    scores = model.score_all_items(u)
    candidates = np.setdiff1d(np.arange(ds.num_items), ds.train_items(u), assume_unique=True)
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order]


def _evaluate_batch(
    model: EmbeddingModel,
    ds: InteractionDataset,
    users: np.ndarray,
    split: SplitName,
    cutoffs: Sequence[int],
) -> Tuple[np.ndarray, np.ndarray]:
    """一批用户的逐用户 HR/NDCG，形状 (n_users_with_targets, len(cutoffs))"""
    target_part = ds.partition(split)[users]
    n_targets = np.diff(target_part.indptr)
    keep = n_targets > 0
    users = users[keep]
    n_targets = n_targets[keep]
    if len(users) == 0:
        empty = np.zeros((0, len(cutoffs)))
        return empty, empty

    targets = ds.partition(split)[users].toarray().astype(bool)
    scores = model.score_users(users).astype(np.float64)
    train_rows = ds.train[users]
    # 训练物品排到最后；它们不会是目标，也不会挤占候选位置
    scores[np.repeat(np.arange(len(users)), np.diff(train_rows.indptr)), train_rows.indices] = -np.inf

    max_n = min(max(cutoffs), ds.num_items)
    order = np.argsort(-scores, axis=1, kind="stable")[:, :max_n]
    hits = np.take_along_axis(targets, order, axis=1)
    disc = discounts(max_n)
    ideal = np.cumsum(discounts(max(cutoffs)))

    hr = np.empty((len(users), len(cutoffs)))
    ndcg = np.empty((len(users), len(cutoffs)))
    for c, n in enumerate(cutoffs):
        top = hits[:, :n]
        denom = np.minimum(n, n_targets)
        hr[:, c] = top.sum(axis=1) / denom
        ndcg[:, c] = (top * disc[: top.shape[1]]).sum(axis=1) / ideal[denom - 1]
    return hr, ndcg


@log_call
def evaluate(
    model: EmbeddingModel,
    ds: InteractionDataset,
    split: Union[SplitName, str] = SplitName.TEST,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    *,
    num_workers: int = 1,
    user_batch: Optional[int] = None,
    seed: Optional[int] = None,
    epoch: Optional[int] = None,
    config_hash: Optional[str] = None,
) -> EvalReport:
    """对 split 中有目标物品的用户取 HR@N / NDCG@N 的平均"""
    split = SplitName(split)
    cutoffs = sorted(set(int(n) for n in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise EvalError("cutoffs 必须为正整数")
    if model.num_users != ds.num_users or model.num_items != ds.num_items:
        raise ShapeError(
            f"模型 ({model.num_users}×{model.num_items}) 与数据集 ({ds.num_users}×{ds.num_items}) 不匹配"
        )

    batch = user_batch or settings.EVAL_USER_BATCH
    all_users = np.arange(ds.num_users)
    groups = [all_users[i:i + batch] for i in range(0, ds.num_users, batch)]

    def _run(users: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _evaluate_batch(model, ds, users, split, cutoffs)

    if num_workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            results: List[Tuple[np.ndarray, np.ndarray]] = list(pool.map(_run, groups))
    else:
        results = [_run(g) for g in groups]

    # 按用户 id 顺序归约
    hr = np.concatenate([r[0] for r in results])
    ndcg = np.concatenate([r[1] for r in results])
    if len(hr) == 0:
        raise EvalError(f"{split.value} 分区没有可评估的用户")

    report = EvalReport(
        cutoffs=cutoffs,
        hr=[float(x) for x in hr.mean(axis=0)],
        ndcg=[float(x) for x in ndcg.mean(axis=0)],
        num_evaluated_users=len(hr),
        split=split,
        seed=seed,
        epoch=epoch,
        config_hash=config_hash,
    )
    logger.info(
        "%s: users=%d HR@%d=%.5f NDCG@%d=%.5f",
        split.value, report.num_evaluated_users, cutoffs[0], report.hr[0], cutoffs[0], report.ndcg[0],
    )
    return report
