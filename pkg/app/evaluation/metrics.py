"""
排序指标 HR@N / NDCG@N
Ranking metrics
"""

from __future__ import annotations

from typing import Iterable, Sequence, Set, Tuple

import numpy as np

from app.core.exceptions import EvalError


def discounts(n: int) -> np.ndarray:
    """1 / log2(p + 1)，p 从 1 开始"""
    return 1.0 / np.log2(np.arange(2, n + 2, dtype=np.float64))


def _hits(ranked: Sequence[int], targets: Iterable[int], N: int) -> Tuple[np.ndarray, Set[int]]:
    target_set = set(int(t) for t in targets)
    if not target_set:
        raise EvalError("目标集合为空")
    if N < 1:
        raise EvalError(f"截断位置必须为正，当前 {N}")
    return np.fromiter((int(v) in target_set for v in list(ranked)[:N]), dtype=bool), target_set


def hr_at_n(ranked: Sequence[int], targets: Iterable[int], N: int) -> float:
    """|top-N ∩ targets| / min(N, |targets|)"""
    hits, target_set = _hits(ranked, targets, N)
    return float(hits.sum()) / min(N, len(target_set))


def ndcg_at_n(ranked: Sequence[int], targets: Iterable[int], N: int) -> float:
    hits, target_set = _hits(ranked, targets, N)
    disc = discounts(N)
    dcg = float(np.sum(disc[: len(hits)][hits]))
    idcg = float(np.sum(disc[: min(N, len(target_set))]))
    return dcg / idcg
