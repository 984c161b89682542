"""
集合采样单元测试
Unit tests for set sampling, masks and epoch scheduling
"""

import logging
from collections import Counter

import numpy as np
import pytest

from app.core.exceptions import ConfigError, DegenerateUserError, ShapeError
from app.sampling.sampler import (
    BatchSampler,
    SetSample,
    draw_negatives,
    draw_sample,
    epoch_schedule,
    generate_mask,
    generate_masks,
    sample_unobserved,
    worker_rng,
)
from app.schemas.config_schemas import NegMode, SamplerConfig


class TestSampleUnobserved:
    """未观测物品采样"""

    def test_single_candidate(self, dataset_factory):
        """只剩一个候选时必然全部是它"""
        ds = dataset_factory({0: range(9)}, 10)
        out = sample_unobserved(ds, 0, 3, NegMode.UNIFORM, np.random.default_rng(0))
        assert out.tolist() == [9, 9, 9]

    def test_never_returns_observed(self, toy_dataset):
        """10⁵ 次抽样中不出现 train(u) 内的物品"""
        rng = np.random.default_rng(5)
        users = np.repeat(np.arange(toy_dataset.num_users), 20000)
        out = draw_negatives(toy_dataset, users, 1, rng)[:, 0]
        assert not toy_dataset.in_train(users, out).any()

    def test_uniform_over_complement(self, dataset_factory):
        """均匀模式下补集内各物品频率在 3σ 内"""
        ds = dataset_factory({0: [0, 1, 2, 3]}, 10)
        out = sample_unobserved(ds, 0, 60000, NegMode.UNIFORM, np.random.default_rng(1))
        counts = Counter(out.tolist())
        assert set(counts) == {4, 5, 6, 7, 8, 9}
        p = 1 / 6
        sigma = np.sqrt(60000 * p * (1 - p))
        for c in counts.values():
            assert abs(c - 60000 * p) <= 3 * sigma

    def test_popularity_frequency(self, dataset_factory):
        """流行度模式：按补集上归一化的权重抽样"""
        ds = dataset_factory({0: [2]}, 3)
        weights = np.array([0.9, 0.1, 0.0])
        out = sample_unobserved(ds, 0, 100000, NegMode.POPULARITY, np.random.default_rng(2), weights)
        freq = float(np.mean(out == 0))
        assert 0.885 <= freq <= 0.915
        assert not np.any(out == 2)

    def test_popularity_excludes_observed_mass(self, dataset_factory):
        """被观测的高流行度物品不会被选中"""
        ds = dataset_factory({0: [0]}, 3)
        weights = np.array([0.98, 0.01, 0.01])
        out = sample_unobserved(ds, 0, 5000, NegMode.POPULARITY, np.random.default_rng(4), weights)
        assert set(out.tolist()) <= {1, 2}

    def test_degenerate_user(self, dataset_factory):
        """与全部物品交互过的用户"""
        ds = dataset_factory({0: range(4)}, 4)
        with pytest.raises(DegenerateUserError):
            sample_unobserved(ds, 0, 2, NegMode.UNIFORM, np.random.default_rng(0))

    def test_invalid_k(self, toy_dataset):
        with pytest.raises(ConfigError):
            sample_unobserved(toy_dataset, 0, 0)


class TestMasks:
    """自适应 mask"""

    def test_keep_all(self):
        mask = generate_mask(6, 1.0, np.random.default_rng(0))
        assert mask.tolist() == [1] * 6

    def test_repair_to_two(self):
        """keep_prob 接近 0 时修复为恰好两个存活"""
        masks = generate_masks(2000, 5, 1e-9, np.random.default_rng(1))
        assert np.all(masks.sum(axis=1) == 2)
        # 修复位置近似均匀
        assert np.all(masks.mean(axis=0) > 0.3)

    def test_mean_survivors(self):
        """L=4, p=0.5 的期望存活数为 2.375"""
        masks = generate_masks(100000, 4, 0.5, np.random.default_rng(2))
        assert 2.30 <= masks.sum(axis=1).mean() <= 2.45

    @pytest.mark.parametrize("keep_prob", [0.1, 0.5, 0.9])
    def test_at_least_two(self, keep_prob):
        rng = np.random.default_rng(int(keep_prob * 10))
        for L in range(2, 9):
            masks = generate_masks(15000, L, keep_prob, rng)
            assert masks.min() >= 0 and masks.max() <= 1
            assert np.all(masks.sum(axis=1) >= 2)

    @pytest.mark.parametrize("L,keep_prob", [(1, 0.5), (4, 0.0), (4, 1.5)])
    def test_invalid_arguments(self, L, keep_prob):
        with pytest.raises(ConfigError):
            generate_mask(L, keep_prob, np.random.default_rng(0))


class TestEpochSchedule:
    """epoch 调度"""

    def test_ragged_user(self, dataset_factory):
        """|train(u)|=7, L=2 → 4 块，覆盖全部物品，只有一个填充位"""
        ds = dataset_factory({0: range(7)}, 10)
        chunks = list(epoch_schedule(ds, 2, np.random.default_rng(0)))
        assert len(chunks) == 4
        flat = np.concatenate([c.items for c in chunks])
        assert set(flat[:7].tolist()) == set(range(7))
        assert flat[7] in range(7)

    def test_even_user(self, dataset_factory):
        ds = dataset_factory({0: [1, 3, 5, 7]}, 10)
        chunks = list(epoch_schedule(ds, 2, np.random.default_rng(0)))
        assert len(chunks) == 2
        assert sorted(np.concatenate([c.items for c in chunks]).tolist()) == [1, 3, 5, 7]

    def test_total_chunks(self, small_synthetic):
        """总块数 = Σ_u ⌈|train(u)|/L⌉"""
        for L in (1, 2, 3, 5):
            chunks = list(epoch_schedule(small_synthetic, L, np.random.default_rng(L)))
            expected = int(np.sum(-(-small_synthetic.train_counts // L)))
            assert len(chunks) == expected
            sampler = BatchSampler(small_synthetic, SamplerConfig(L=L, K=2, seed=1), batch_size=8)
            assert sampler.num_chunks() == expected

    def test_unmaskable_small_users(self, dataset_factory):
        """启用 mask 时只有一个观测物品的用户产生不加 mask 的块"""
        ds = dataset_factory({0: [0], 1: [1, 2, 3]}, 6)
        chunks = list(epoch_schedule(ds, 2, np.random.default_rng(0), mask_enabled=True))
        flags = {c.user: c.maskable for c in chunks}
        assert flags == {0: False, 1: True}
        assert all(c.items.tolist() == [0, 0] for c in chunks if c.user == 0)

    def test_invalid_l(self, toy_dataset):
        with pytest.raises(ConfigError):
            list(epoch_schedule(toy_dataset, 0, np.random.default_rng(0)))


class TestDrawSample:
    """单个训练样本"""

    def test_shapes(self, toy_dataset):
        cfg = SamplerConfig(L=2, K=5)
        sample = draw_sample(toy_dataset, 0, np.array([0, 1]), cfg, np.random.default_rng(0))
        assert (sample.L, sample.K) == (2, 5)
        assert sample.mask is None

    def test_invariants_over_many_draws(self, small_synthetic):
        cfg = SamplerConfig(L=3, K=4, mask_enabled=True, mask_keep_prob=0.3, seed=9)
        rng = np.random.default_rng(9)
        chunks = list(epoch_schedule(small_synthetic, 3, rng, mask_enabled=True))
        for i in range(10000):
            chunk = chunks[i % len(chunks)]
            sample = draw_sample(small_synthetic, chunk.user, chunk.items, cfg, rng, maskable=chunk.maskable)
            assert small_synthetic.in_train(np.full(3, sample.user), sample.pos_items).all()
            assert not small_synthetic.in_train(np.full(4, sample.user), sample.neg_items).any()
            assert sample.mask is not None and sample.mask.sum() >= 2

    def test_chunk_size_mismatch(self, toy_dataset):
        with pytest.raises(ShapeError):
            draw_sample(toy_dataset, 0, np.array([0, 1, 2]), SamplerConfig(L=2, K=1), np.random.default_rng(0))

    def test_set_sample_contract(self):
        with pytest.raises(ShapeError):
            SetSample(user=0, pos_items=np.array([1, 2]), neg_items=np.array([3]), mask=np.array([1, 0]))
        with pytest.raises(ShapeError):
            SetSample(user=0, pos_items=np.array([1]), neg_items=np.array([], dtype=np.int64))


class TestBatchSampler:
    """批量采样与确定性"""

    def _epoch(self, ds, cfg, epoch):
        return list(BatchSampler(ds, cfg, batch_size=16).batches(epoch))

    def test_seeded_determinism(self, small_synthetic):
        cfg = SamplerConfig(L=2, K=3, mask_enabled=True, seed=21)
        a = self._epoch(small_synthetic, cfg, 0)
        b = self._epoch(small_synthetic, cfg, 0)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.users, y.users)
            np.testing.assert_array_equal(x.pos_items, y.pos_items)
            np.testing.assert_array_equal(x.neg_items, y.neg_items)
            np.testing.assert_array_equal(x.masks, y.masks)

    def test_epochs_differ(self, small_synthetic):
        cfg = SamplerConfig(L=2, K=3, seed=21)
        a = self._epoch(small_synthetic, cfg, 0)
        b = self._epoch(small_synthetic, cfg, 1)
        assert not np.array_equal(a[0].users, b[0].users)

    def test_worker_streams_independent(self):
        a = worker_rng(5, 0, 0).random(4)
        b = worker_rng(5, 1, 0).random(4)
        c = worker_rng(5, 0, 0).random(4)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, c)

    def test_batch_membership(self, small_synthetic):
        cfg = SamplerConfig(L=2, K=5, seed=2)
        for batch in self._epoch(small_synthetic, cfg, 0):
            assert len(batch) <= 16
            users = batch.users[:, None]
            assert small_synthetic.in_train(users, batch.pos_items).all()
            assert not small_synthetic.in_train(users, batch.neg_items).any()
            assert batch.masks is None

    def test_degenerate_user_skipped_once(self, dataset_factory, caplog):
        """退化用户被跳过，每个用户只告警一次"""
        ds = dataset_factory({0: range(5), 1: [0, 1]}, 5)
        sampler = BatchSampler(ds, SamplerConfig(L=1, K=2, seed=0), batch_size=4)
        with caplog.at_level(logging.WARNING):
            for epoch in range(3):
                users = np.concatenate([b.users for b in sampler.batches(epoch)])
                assert set(users.tolist()) == {1}
        warnings = [r for r in caplog.records if r.levelno == logging.WARNING and "skipped" in r.getMessage()]
        assert len(warnings) == 1
        assert sampler.num_chunks() == 2

    def test_popularity_degenerate_mass(self, dataset_factory):
        """补集流行度为 0 的用户在流行度模式下同样退化"""
        ds = dataset_factory({0: [0, 1], 1: [0]}, 3)
        sampler = BatchSampler(ds, SamplerConfig(L=1, K=1, neg_mode="popularity", seed=0))
        assert sampler.degenerate.tolist() == [True, False]
