"""
集合采样：观测集合 / 未观测集合、自适应 mask 与 epoch 调度
Set sampling, adaptive masks and epoch scheduling
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Set

import numpy as np

from app.core.exceptions import ConfigError, DegenerateUserError, ShapeError
from app.data.dataset import InteractionDataset, popularity_distribution
from app.schemas.config_schemas import NegMode, SamplerConfig
from config.logging_config import get_logger

logger = get_logger(__name__)

# 拒绝采样轮数上限，超过后改为在补集上精确采样
MAX_REJECTION_ROUNDS = 32
# 补集流行度质量低于该值视为无法采样
_MIN_COMPLEMENT_MASS = 1e-12


def worker_rng(base_seed: int, worker_id: int = 0, epoch: int = 0) -> np.random.Generator:
    """每个 (worker, epoch) 独立、可复现的随机流"""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(worker_id, epoch)))


@dataclass(frozen=True)
class SetSample:
    """一次训练步的观测集合 S+、未观测集合 S− 与可选 mask"""

    user: int
    pos_items: np.ndarray
    neg_items: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if len(self.pos_items) < 1 or len(self.neg_items) < 1:
            raise ShapeError("S+ 与 S− 都不能为空")
        if self.mask is not None:
            if len(self.mask) != len(self.pos_items):
                raise ShapeError(f"mask 长度 {len(self.mask)} ≠ L={len(self.pos_items)}")
            if int(np.sum(self.mask)) < 2:
                raise ShapeError("mask 至少保留两个观测样本")

    @property
    def L(self) -> int:
        return len(self.pos_items)

    @property
    def K(self) -> int:
        return len(self.neg_items)


@dataclass(frozen=True)
class ScheduledChunk:
    """epoch 调度产出的一个观测块；maskable 为 False 的块不加 mask"""

    user: int
    items: np.ndarray
    maskable: bool = True


@dataclass(frozen=True)
class SampleBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray
    masks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.users)

    def samples(self) -> Iterator[SetSample]:
        for b in range(len(self.users)):
            yield SetSample(
                user=int(self.users[b]),
                pos_items=self.pos_items[b],
                neg_items=self.neg_items[b],
                mask=None if self.masks is None else self.masks[b],
            )


# ---------------- 未观测物品 ----------------


def _complement(ds: InteractionDataset, u: int) -> np.ndarray:
    return np.setdiff1d(np.arange(ds.num_items, dtype=np.int64), ds.train_items(u), assume_unique=True)


def _draw_candidates(n: int, num_items: int, rng: np.random.Generator, cdf: Optional[np.ndarray]) -> np.ndarray:
    if cdf is None:
        return rng.integers(0, num_items, size=n, dtype=np.int64)
    # 逆 CDF；权重为 0 的物品不会被选中
    picks = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return np.minimum(picks, num_items - 1).astype(np.int64)


def _restricted_draw(
    ds: InteractionDataset, u: int, n: int, rng: np.random.Generator, weights: Optional[np.ndarray]
) -> np.ndarray:
    comp = _complement(ds, u)
    if weights is None:
        return rng.choice(comp, size=n, replace=True)
    p = weights[comp]
    return rng.choice(comp, size=n, replace=True, p=p / p.sum())


def draw_negatives(
    ds: InteractionDataset,
    users: np.ndarray,
    K: int,
    rng: np.random.Generator,
    weights: Optional[np.ndarray] = None,
    max_rounds: int = MAX_REJECTION_ROUNDS,
) -> np.ndarray:
    """为每个用户有放回地抽取 K 个未观测物品，返回 (len(users), K)。

    先按全局分布抽样并拒绝 train(u) 中的物品；剩余位置在补集上精确采样。
    调用方保证 users 都不是退化用户。
    """
    users = np.asarray(users, dtype=np.int64)
    cdf = None if weights is None else np.cumsum(weights)
    out = np.empty((len(users), K), dtype=np.int64)
    pending = np.ones(out.size, dtype=bool)
    flat_out = out.reshape(-1)

    for _ in range(max_rounds):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        cand = _draw_candidates(idx.size, ds.num_items, rng, cdf)
        ok = ~ds.in_train(users[idx // K], cand)
        flat_out[idx[ok]] = cand[ok]
        pending[idx[ok]] = False

    if pending.any():
        rows = np.flatnonzero(pending.reshape(len(users), K).any(axis=1))
        for b in rows:
            cols = np.flatnonzero(pending[b * K:(b + 1) * K])
            out[b, cols] = _restricted_draw(ds, int(users[b]), len(cols), rng, weights)
    return out


def is_degenerate(ds: InteractionDataset, u: int, weights: Optional[np.ndarray] = None) -> bool:
    """补集为空（或补集流行度质量为 0）的用户无法采样未观测物品"""
    items = ds.train_items(u)
    if len(items) >= ds.num_items:
        return True
    if weights is not None:
        return float(weights.sum() - weights[items].sum()) <= _MIN_COMPLEMENT_MASS
    return False


def sample_unobserved(
    ds: InteractionDataset,
    u: int,
    K: int,
    neg_mode: NegMode = NegMode.UNIFORM,
    rng: Optional[np.random.Generator] = None,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """从 train(u) 的补集中有放回地抽取 K 个物品。

    popularity 模式按 weights（缺省为训练集流行度分布）在补集上归一化抽样。
    """
    if K < 1:
        raise ConfigError("K 必须 ≥ 1")
    rng = rng if rng is not None else np.random.default_rng()
    if NegMode(neg_mode) == NegMode.POPULARITY and weights is None:
        weights = popularity_distribution(ds)
    elif NegMode(neg_mode) == NegMode.UNIFORM:
        weights = None
    if is_degenerate(ds, u, weights):
        raise DegenerateUserError(u)
    return draw_negatives(ds, np.array([u]), K, rng, weights)[0]


# ---------------- mask ----------------


def _check_mask_args(L: int, keep_prob: float) -> None:
    if L < 2:
        raise ConfigError(f"mask 需要 L ≥ 2，当前 L={L}")
    if not 0.0 < keep_prob <= 1.0:
        raise ConfigError(f"keep_prob 必须在 (0, 1] 内，当前 {keep_prob}")


def generate_masks(n: int, L: int, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    """n 个独立 mask，形状 (n, L)。

    每个位置独立以 keep_prob 保留；存活不足 2 个时，在被遮住的位置中均匀选取补足到恰好 2 个。
    """
    _check_mask_args(L, keep_prob)
    mask = rng.random((n, L)) < keep_prob
    need = np.maximum(2 - mask.sum(axis=1), 0)
    if need.any():
        keys = rng.random((n, L))
        keys[mask] = np.inf
        rank = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")
        mask |= rank < need[:, None]
    return mask.astype(np.int8)


def generate_mask(L: int, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    return generate_masks(1, L, keep_prob, rng)[0]


# ---------------- epoch 调度 ----------------


def epoch_schedule(
    ds: InteractionDataset,
    L: int,
    rng: np.random.Generator,
    mask_enabled: bool = False,
) -> Iterator[ScheduledChunk]:
    """一个 epoch：用户顺序打乱；每个用户的 train(u) 打乱后切成 ⌈n/L⌉ 块，
    末尾不足 L 的块从 train(u) 均匀重采样补齐。"""
    if L < 1:
        raise ConfigError("L 必须 ≥ 1")
    for u in rng.permutation(ds.num_users):
        items = ds.train_items(int(u))
        n = len(items)
        if n == 0:
            continue
        n_chunks = math.ceil(n / L)
        perm = rng.permutation(items)
        pad = n_chunks * L - n
        if pad:
            perm = np.concatenate([perm, rng.choice(items, size=pad, replace=True)])
        maskable = (not mask_enabled) or n >= 2
        for c in range(n_chunks):
            yield ScheduledChunk(int(u), perm[c * L:(c + 1) * L].astype(np.int64), maskable)


def draw_sample(
    ds: InteractionDataset,
    user: int,
    pos_chunk: np.ndarray,
    config: SamplerConfig,
    rng: np.random.Generator,
    weights: Optional[np.ndarray] = None,
    maskable: bool = True,
) -> SetSample:
    """为一个观测块补上 K 个未观测物品，启用 mask 时附上 mask"""
    pos_chunk = np.asarray(pos_chunk, dtype=np.int64)
    if len(pos_chunk) != config.L:
        raise ShapeError(f"观测块大小 {len(pos_chunk)} ≠ L={config.L}")
    if config.neg_mode == NegMode.POPULARITY and weights is None:
        weights = popularity_distribution(ds, config.pop_smoothing)
    neg = sample_unobserved(ds, user, config.K, config.neg_mode, rng, weights)
    mask = None
    if config.mask_enabled and maskable:
        mask = generate_mask(config.L, config.mask_keep_prob, rng)
    return SetSample(user=int(user), pos_items=pos_chunk, neg_items=neg, mask=mask)


# ---------------- 批量采样 ----------------


class BatchSampler:
    """按 epoch 产出 SampleBatch；负样本与 mask 按批向量化生成"""

    def __init__(self, ds: InteractionDataset, config: SamplerConfig, batch_size: int = 256) -> None:
        if batch_size < 1:
            raise ConfigError("batch_size 必须 ≥ 1")
        self.ds = ds
        self.config = config
        self.batch_size = batch_size
        self.weights: Optional[np.ndarray] = None
        if config.neg_mode == NegMode.POPULARITY:
            self.weights = popularity_distribution(ds, config.pop_smoothing)
        self.degenerate = self._find_degenerate()
        self._warned: Set[int] = set()

    def _find_degenerate(self) -> np.ndarray:
        counts = self.ds.train_counts
        flags = counts >= self.ds.num_items
        if self.weights is not None:
            rows = np.repeat(np.arange(self.ds.num_users), counts)
            mass = np.bincount(rows, weights=self.weights[self.ds.train.indices], minlength=self.ds.num_users)
            flags |= (self.weights.sum() - mass) <= _MIN_COMPLEMENT_MASS
        return flags

    def epoch_rng(self, epoch: int, worker_id: int = 0) -> np.random.Generator:
        return worker_rng(self.config.seed, worker_id, epoch)

    def epoch_chunks(self, rng: np.random.Generator) -> List[ScheduledChunk]:
        chunks = []
        for chunk in epoch_schedule(self.ds, self.config.L, rng, self.config.mask_enabled):
            if self.degenerate[chunk.user]:
                if chunk.user not in self._warned:
                    self._warned.add(chunk.user)
                    logger.warning("%s, skipped", DegenerateUserError(chunk.user).message)
                continue
            chunks.append(chunk)
        return chunks

    def num_chunks(self) -> int:
        """每个 epoch 的块数 Σ_u ⌈|train(u)|/L⌉（不含退化用户）"""
        counts = self.ds.train_counts[~self.degenerate]
        return int(np.sum(-(-counts // self.config.L)))

    def _build_batch(self, chunks: List[ScheduledChunk], rng: np.random.Generator) -> SampleBatch:
        users = np.array([c.user for c in chunks], dtype=np.int64)
        pos = np.stack([c.items for c in chunks])
        neg = draw_negatives(self.ds, users, self.config.K, rng, self.weights)
        masks = None
        if self.config.mask_enabled:
            masks = generate_masks(len(chunks), self.config.L, self.config.mask_keep_prob, rng)
            unmaskable = np.array([not c.maskable for c in chunks])
            masks[unmaskable] = 1
        return SampleBatch(users, pos, neg, masks)

    def batches(self, epoch: int) -> Iterator[SampleBatch]:
        rng = self.epoch_rng(epoch)
        chunks = self.epoch_chunks(rng)
        for start in range(0, len(chunks), self.batch_size):
            yield self._build_batch(chunks[start:start + self.batch_size], rng)
