"""
集合比较目标函数单元测试
Unit tests for the set comparison objectives
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from app.core.exceptions import ShapeError
from app.losses.set2set import (
    bpr_forward,
    easy_pos_summary,
    forward_batch,
    hard_neg_summary,
    item_to_set_loss,
    pos_summary,
    pref_gain,
    set_compare,
    set_to_set_loss,
    total_loss,
)
from app.schemas.config_schemas import LossConfig, Objective, SetSummary

POS = [0.8, 0.3]
NEG = [0.1, -0.4]


# ---------------- 扩展精度的逐字转写 ----------------


def _ld(x):
    return np.longdouble(x)


def _sig(d):
    return _ld(1) / (_ld(1) + np.exp(-_ld(d)))


def _oracle(pos, neg, mask, beta, lam, easy, include_self=True, floor=1e-12):
    L = len(pos)
    m = [1] * L if mask is None else list(mask)
    F = [sum(_ld(m[i]) * _sig(_ld(pos[i]) - _ld(y)) for i in range(L)) for y in neg]
    lnF = [np.log(max(f, _ld(floor))) for f in F]
    P = []
    for k in range(L):
        acc = _ld(0)
        for i in range(L):
            if i == k and not include_self:
                continue
            acc += _ld(m[i]) * _sig(_ld(pos[i]) - _ld(pos[k]))
        P.append(acc)
    lnP = [np.log(max(p, _ld(floor))) for p in P]
    l2 = sum(lnF)
    f_pos = sum(lnP) / L
    g_pos = max(lnP)
    f_neg = min(lnF)
    ref = g_pos if easy else f_pos
    l3 = np.log(_sig(f_neg - _ld(beta) * ref))
    return {
        "l2": l2,
        "f_pos": f_pos,
        "g_pos": g_pos,
        "f_neg": f_neg,
        "hard": int(np.argmin(np.array(lnF, dtype=np.longdouble))),
        "l3": l3,
        "total": l2 + _ld(lam) * l3,
    }


class TestDerivedValues:
    """小实例上的推导值"""

    def test_pref_gain_values(self):
        assert pref_gain(3.7, 3.7) == 0.5
        assert pref_gain(5.0, 0.0) == pytest.approx(0.993307, abs=1e-6)
        assert pref_gain(1.3, -0.2) + pref_gain(-0.2, 1.3) == pytest.approx(1.0, abs=1e-15)

    def test_set_compare(self):
        assert set_compare(POS, 0.1) == pytest.approx(1.21802, abs=1e-5)
        assert set_compare(POS, 0.1, mask=[1, 0]) == pytest.approx(0.66819, abs=1e-5)
        assert set_compare([0.4, 0.4, 0.4], 0.4, mask=[1, 0, 1]) == pytest.approx(1.0)

    def test_item_to_set_loss(self):
        assert item_to_set_loss(POS, NEG) == pytest.approx(0.55947, abs=1e-3)
        # L=1, K=1 退化为 BPR
        assert item_to_set_loss([1.1], [0.2]) == pytest.approx(math.log(1 / (1 + math.exp(-0.9))), abs=1e-12)
        # 全部相等：K·ln(0.5·L_eff)
        assert item_to_set_loss([0.2] * 3, [0.2] * 4) == pytest.approx(4 * math.log(1.5), abs=1e-12)

    def test_pos_summary(self):
        assert pos_summary(POS) == pytest.approx(-0.00755, abs=1e-4)
        assert pos_summary([0.6, 0.6]) == pytest.approx(0.0, abs=1e-15)
        assert pos_summary([2.0]) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_hard_neg_summary(self):
        value, index = hard_neg_summary(POS, NEG)
        assert value == pytest.approx(0.19714, abs=1e-3)
        assert index == 0
        value, index = hard_neg_summary(POS, [0.3])
        assert index == 0
        assert value == pytest.approx(math.log(set_compare(POS, 0.3)), abs=1e-12)
        # 重复负样本取第一次出现的下标
        _, index = hard_neg_summary(POS, [-1.0, 0.5, 0.5])
        assert index == 1

    def test_set_to_set_loss(self):
        assert set_to_set_loss(POS, NEG, beta=0.5) == pytest.approx(-0.59772, abs=1e-3)
        # L=1 时两种变体一致
        a = set_to_set_loss([0.7], NEG, beta=0.5, variant=SetSummary.SUMMARY)
        b = set_to_set_loss([0.7], NEG, beta=0.5, variant=SetSummary.EASY)
        assert a == pytest.approx(b, abs=1e-15)

    def test_set_to_set_at_margin_is_log_half(self):
        # 单个正样本 x 与单个负样本 y：f_neg = ln σ(x−y)，f_pos = ln 0.5
        x = 0.0
        beta = 0.5
        f_pos = math.log(0.5)
        target_f_neg = beta * f_pos
        y = x - math.log(math.exp(target_f_neg) / (1 - math.exp(target_f_neg)))
        assert set_to_set_loss([x], [y], beta=beta) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_total_loss_combination(self):
        cfg = LossConfig(objective=Objective.SET2SET, lambda_=1.0, beta=0.5)
        out = total_loss(POS, NEG, cfg)
        assert out.total == pytest.approx(-0.03825, abs=1e-3)
        assert out.total == pytest.approx(out.l2 + out.l3, abs=1e-12)
        assert out.hard_neg_index == 0

        doubled = total_loss(POS, NEG, LossConfig(lambda_=2.0, beta=0.5))
        assert doubled.total - doubled.l2 == pytest.approx(2 * doubled.l3, abs=1e-12)

    def test_easy_variant_uses_max_positive(self):
        value, index = easy_pos_summary(POS)
        assert index == 1  # 0.3 对应 F(S+, 0.3) 更大
        cfg = LossConfig(objective=Objective.SET2SET_EASY, beta=0.5)
        out = total_loss(POS, NEG, cfg)
        expected_l3 = math.log(1 / (1 + math.exp(-(hard_neg_summary(POS, NEG)[0] - 0.5 * value))))
        assert out.l3 == pytest.approx(expected_l3, abs=1e-12)
        assert out.easy_pos_index == 1


class TestBprDegeneration:
    """λ=0、L=K=1 时与 BPR 完全一致"""

    def test_random_instances_match_bpr(self):
        rng = np.random.default_rng(0)
        set_cfg = LossConfig(objective=Objective.SET2SET, lambda_=0.0)
        bpr_cfg = LossConfig(objective=Objective.BPR, lambda_=0.0)
        for _ in range(1000):
            x, y = rng.uniform(-3, 3, size=2)
            a = total_loss([x], [y], set_cfg).total
            b = total_loss([x], [y], bpr_cfg).total
            assert abs(a - b) <= 1e-12

    def test_bpr_requires_single_pair(self):
        with pytest.raises(ShapeError):
            total_loss(POS, NEG, LossConfig(objective=Objective.BPR))

    def test_bpr_forward_closed_form(self):
        out = bpr_forward(np.array([[2.0]]), np.array([[0.5]]))
        assert out[0] == pytest.approx(math.log(1 / (1 + math.exp(-1.5))), abs=1e-15)


class TestOracleEquivalence:
    """与扩展精度逐字转写一致（1e-10）"""

    @pytest.mark.parametrize("easy", [False, True])
    @pytest.mark.parametrize("masked", [False, True])
    def test_batched_forward_matches_oracle(self, easy, masked):
        rng = np.random.default_rng(101 + 2 * easy + masked)
        checked = 0
        for L in range(1 if not masked else 2, 5):
            for K in range(1, 5):
                B = 200
                pos = rng.uniform(-3, 3, size=(B, L))
                neg = rng.uniform(-3, 3, size=(B, K))
                mask = None
                if masked:
                    mask = (rng.random((B, L)) < 0.6).astype(np.int8)
                    mask[:, :2] = 1
                beta = float(rng.uniform(0.1, 2.0))
                lam = float(rng.uniform(0.0, 2.0))
                summary = SetSummary.EASY if easy else SetSummary.SUMMARY
                c = forward_batch(pos, neg, mask, beta=beta, lam=lam, summary=summary)
                for b in range(B):
                    ref = _oracle(pos[b], neg[b], None if mask is None else mask[b], beta, lam, easy)
                    assert abs(c.l2[b] - float(ref["l2"])) <= 1e-10
                    assert abs(c.f_pos[b] - float(ref["f_pos"])) <= 1e-10
                    assert abs(c.g_pos[b] - float(ref["g_pos"])) <= 1e-10
                    assert abs(c.f_neg[b] - float(ref["f_neg"])) <= 1e-10
                    assert c.hard_index[b] == ref["hard"]
                    assert abs(c.l3[b] - float(ref["l3"])) <= 1e-10
                    assert abs(c.total[b] - float(ref["total"])) <= 1e-10
                    checked += 1
        assert checked >= 2000

    def test_scalar_operations_match_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            L, K = rng.integers(1, 5, size=2)
            pos = rng.uniform(-3, 3, size=L)
            neg = rng.uniform(-3, 3, size=K)
            ref = _oracle(pos, neg, None, 0.5, 1.0, False)
            assert abs(item_to_set_loss(pos, neg) - float(ref["l2"])) <= 1e-10
            assert abs(pos_summary(pos) - float(ref["f_pos"])) <= 1e-10
            assert abs(hard_neg_summary(pos, neg)[0] - float(ref["f_neg"])) <= 1e-10
            assert abs(set_to_set_loss(pos, neg, 0.5) - float(ref["l3"])) <= 1e-10
            assert abs(total_loss(pos, neg, LossConfig()).total - float(ref["total"])) <= 1e-10

    def test_excluding_self_pairs(self):
        pos = [0.9, -0.1, 0.4]
        ref = _oracle(pos, NEG, None, 0.5, 1.0, False, include_self=False)
        assert pos_summary(pos, include_self=False) == pytest.approx(float(ref["f_pos"]), abs=1e-12)

    def test_survivor_normalization(self):
        pos = [0.9, -0.1, 0.4, 0.2]
        mask = [1, 0, 1, 0]
        literal = pos_summary(pos, mask)
        survivors = pos_summary(pos, mask, survivor_normalization=True)
        assert survivors == pytest.approx(literal * 4 / 2, abs=1e-12)


scores = st.floats(min_value=-3, max_value=3, allow_nan=False)


class TestProperties:
    """平移不变性、单调性与取值范围"""

    @hyp_settings(max_examples=300, deadline=None)
    @given(
        pos=st.lists(scores, min_size=1, max_size=4),
        neg=st.lists(scores, min_size=1, max_size=4),
        shift=st.floats(min_value=-5, max_value=5),
    )
    def test_translation_invariance(self, pos, neg, shift):
        cfg = LossConfig(beta=0.7, lambda_=1.3)
        a = total_loss(pos, neg, cfg)
        b = total_loss([x + shift for x in pos], [y + shift for y in neg], cfg)
        assert abs(a.l2 - b.l2) <= 1e-10
        assert abs(a.l3 - b.l3) <= 1e-10
        assert abs(pos_summary(pos) - pos_summary([x + shift for x in pos])) <= 1e-10

    @hyp_settings(max_examples=300, deadline=None)
    @given(
        pos=st.lists(scores, min_size=1, max_size=4),
        neg=st.lists(scores, min_size=1, max_size=4),
        j=st.integers(min_value=0, max_value=3),
        bump=st.floats(min_value=0.0, max_value=2.0),
    )
    def test_item_to_set_monotone_in_negatives(self, pos, neg, j, bump):
        j = j % len(neg)
        raised = list(neg)
        raised[j] += bump
        assert item_to_set_loss(pos, raised) <= item_to_set_loss(pos, neg) + 1e-12

    @hyp_settings(max_examples=300, deadline=None)
    @given(
        pos=st.lists(scores, min_size=2, max_size=4),
        neg=st.lists(scores, min_size=1, max_size=4),
        data=st.data(),
    )
    def test_bounds(self, pos, neg, data):
        mask = data.draw(st.lists(st.integers(0, 1), min_size=len(pos), max_size=len(pos)))
        mask[0] = mask[1] = 1
        l_eff = sum(mask)
        for y in neg:
            f = set_compare(pos, y, mask)
            assert 0.0 < f <= l_eff
            assert 0.0 < pref_gain(pos[0], y) < 1.0
        assert item_to_set_loss(pos, neg, mask) <= len(neg) * math.log(l_eff) + 1e-12

    def test_hard_negative_is_highest_scored(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            pos = rng.normal(size=rng.integers(1, 5))
            neg = rng.normal(size=rng.integers(1, 6))
            assert hard_neg_summary(pos, neg)[1] == int(np.argmax(neg))

    def test_mask_shape_mismatch(self):
        with pytest.raises(ShapeError):
            total_loss(POS, NEG, LossConfig(), mask=[1, 1, 1])
        with pytest.raises(ShapeError):
            total_loss(POS, NEG, LossConfig(), mask=[1, 0])


def _random_batch(rng, L, K, B, masked, grid=False):
    if grid:
        # 取值落在粗网格上，制造并列的负样本分数
        pos = rng.integers(-6, 7, size=(B, L)) / 2.0
        neg = rng.integers(-6, 7, size=(B, K)) / 2.0
    else:
        pos = rng.uniform(-3, 3, size=(B, L))
        neg = rng.uniform(-3, 3, size=(B, K))
    mask = None
    if masked:
        mask = (rng.random((B, L)) < 0.5).astype(np.float64)
        mask[:, :2] = 1.0
    return pos, neg, mask


def _shapes():
    for L in range(1, 5):
        for K in range(1, 5):
            for masked in ([False, True] if L >= 2 else [False]):
                yield L, K, masked


class TestInvarianceSweep:
    """一万个随机实例上的平移 / 置换不变性（含 mask）"""

    B = 700

    @pytest.mark.parametrize("summary", [SetSummary.SUMMARY, SetSummary.EASY])
    def test_translation(self, summary):
        rng = np.random.default_rng(2024)
        checked = 0
        for L, K, masked in _shapes():
            pos, neg, mask = _random_batch(rng, L, K, self.B, masked)
            shift = rng.uniform(-5, 5, size=(self.B, 1))
            a = forward_batch(pos, neg, mask, beta=0.7, lam=1.3, summary=summary)
            b = forward_batch(pos + shift, neg + shift, mask, beta=0.7, lam=1.3, summary=summary)
            for name in ("F", "l2", "f_pos", "g_pos", "f_neg", "l3", "total"):
                np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=0, atol=1e-10)
            checked += self.B
        assert checked >= 10_000

    def test_permuting_positives(self):
        """观测集合与 mask 同步置换时，各汇总量不变"""
        rng = np.random.default_rng(7)
        rows = np.arange(self.B)[:, None]
        checked = 0
        for L, K, masked in _shapes():
            pos, neg, mask = _random_batch(rng, L, K, self.B, masked)
            perm = np.argsort(rng.random((self.B, L)), axis=1)
            pos_p = pos[rows, perm]
            mask_p = None if mask is None else mask[rows, perm]
            a = forward_batch(pos, neg, mask, beta=0.5, lam=1.0)
            b = forward_batch(pos_p, neg, mask_p, beta=0.5, lam=1.0)
            for name in ("F", "l2", "f_pos", "g_pos", "f_neg", "l3", "total"):
                np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=0, atol=1e-10)
            checked += self.B
        assert checked >= 10_000

    def test_permuting_negatives_moves_hard_index(self):
        """置换未观测集合：f_neg 不变，最难负样本下标随置换移动，并列取最小下标"""
        rng = np.random.default_rng(11)
        rows = np.arange(self.B)
        ties = 0
        checked = 0
        for L, K, masked in _shapes():
            pos, neg, mask = _random_batch(rng, L, K, self.B, masked, grid=True)
            perm = np.argsort(rng.random((self.B, K)), axis=1)
            neg_p = neg[rows[:, None], perm]
            a = forward_batch(pos, neg, mask)
            b = forward_batch(pos, neg_p, mask)
            np.testing.assert_allclose(a.f_neg, b.f_neg, rtol=0, atol=1e-10)
            np.testing.assert_allclose(a.l2, b.l2, rtol=0, atol=1e-10)
            for r in range(self.B):
                # 与最难负样本分数相同的位置构成并列集合
                tied = np.flatnonzero(neg[r] == neg[r, a.hard_index[r]])
                assert a.hard_index[r] == tied[0]
                assert neg[r, a.hard_index[r]] == neg[r].max()
                expected = int(np.flatnonzero(np.isin(perm[r], tied))[0])
                assert b.hard_index[r] == expected
                ties += len(tied) > 1
            checked += self.B
        assert checked >= 10_000
        assert ties > 0
