"""
训练器：按 epoch 做随机梯度上升，验证集 NDCG 早停
Trainer
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import linregress
from tqdm import tqdm

from app.core.exceptions import ConfigError, EvalError, NumericError, TrainingDivergedError
from app.data.dataset import InteractionDataset
from app.evaluation.evaluator import evaluate
from app.losses.gradients import BatchGradient, aggregate_rows, batch_gradients
from app.models.embedding import EmbeddingModel, init_model
from app.sampling.sampler import BatchSampler, SampleBatch
from app.schemas.config_schemas import Objective, SplitName, TrainConfig
from app.schemas.report_schemas import EvalPoint, TrainReport
from app.training.optimizers import build_optimizer
from app.utils.file_utils import append_jsonl
from app.utils.log_utils import log_call
from config.logging_config import get_logger
from config.settings import settings

logger = get_logger(__name__)

PathLike = Union[str, Path]


def _shards(batch: SampleBatch, n: int) -> List[SampleBatch]:
    bounds = np.linspace(0, len(batch), n + 1).astype(int)
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            out.append(
                SampleBatch(
                    batch.users[lo:hi],
                    batch.pos_items[lo:hi],
                    batch.neg_items[lo:hi],
                    None if batch.masks is None else batch.masks[lo:hi],
                )
            )
    return out


def _merge(parts: List[BatchGradient]) -> BatchGradient:
    """按分片顺序合并，结果与线程调度无关"""
    if len(parts) == 1:
        return parts[0]
    user_rows, user_grads = aggregate_rows(
        np.concatenate([p.user_rows for p in parts]), np.concatenate([p.user_grads for p in parts])
    )
    item_rows, item_grads = aggregate_rows(
        np.concatenate([p.item_rows for p in parts]), np.concatenate([p.item_grads for p in parts])
    )
    return BatchGradient(np.concatenate([p.totals for p in parts]), user_rows, user_grads, item_rows, item_grads)


class Trainer:
    """单写者训练循环：梯度可按线程分片计算，参数更新串行执行"""

    def __init__(
        self,
        ds: InteractionDataset,
        config: TrainConfig,
        *,
        log_path: Optional[PathLike] = None,
        model: Optional[EmbeddingModel] = None,
        run_validation: bool = True,
        show_progress: Optional[bool] = None,
    ) -> None:
        if not ds.is_split:
            raise ConfigError("训练前需要先划分数据集")
        self.ds = ds
        self.config = config
        self.log_path = Path(log_path) if log_path else None
        if model is None:
            model = init_model(ds.num_users, ds.num_items, config.dim, config.init_scale, config.seed, config.dtype)
        self.model = model
        self.run_validation = run_validation and ds.val.indptr[-1] > 0
        if run_validation and not self.run_validation:
            logger.warning("validation split is empty, early stopping disabled")
        self.show_progress = settings.SHOW_PROGRESS if show_progress is None else show_progress
        self.sampler = BatchSampler(ds, config.sampler, config.batch_size)
        self.optimizer = build_optimizer(self.model, config.lr, config.optimizer)

    # 测试中可替换的目标梯度
    def _objective_gradients(self, batch: SampleBatch, model: EmbeddingModel) -> BatchGradient:
        return batch_gradients(
            batch.users, batch.pos_items, batch.neg_items, model, self.config.loss, batch.masks
        )

    def _batch_gradient(self, batch: SampleBatch, pool: Optional[ThreadPoolExecutor]) -> BatchGradient:
        if pool is None or len(batch) < 2:
            return self._objective_gradients(batch, self.model)
        parts = _shards(batch, self.config.num_workers)
        return _merge(list(pool.map(lambda b: self._objective_gradients(b, self.model), parts)))

    def _apply(self, grad: BatchGradient, batch_len: int) -> None:
        """批内目标取平均；正则项 −l2_reg·θ 只作用于本步涉及的行"""
        scale = 1.0 / batch_len
        l2 = self.config.l2_reg
        user_grads = grad.user_grads * scale - l2 * self.model.user_emb[grad.user_rows]
        item_grads = grad.item_grads * scale - l2 * self.model.item_emb[grad.item_rows]
        self.optimizer.step(grad.user_rows, user_grads, grad.item_rows, item_grads)

    def _run_epoch(self, epoch: int, pool: Optional[ThreadPoolExecutor]) -> float:
        total = 0.0
        count = 0
        n_batches = math.ceil(self.sampler.num_chunks() / self.config.batch_size)
        batches = tqdm(
            self.sampler.batches(epoch),
            total=n_batches,
            desc=f"epoch {epoch}",
            disable=not self.show_progress,
            leave=False,
        )
        try:
            for batch in batches:
                grad = self._batch_gradient(batch, pool)
                self._apply(grad, len(batch))
                total += float(np.sum(grad.totals))
                count += len(batch)
        except NumericError as exc:
            raise TrainingDivergedError(epoch, float("nan")) from exc
        mean = total / count if count else 0.0
        if not math.isfinite(mean) or not self.model.is_finite():
            raise TrainingDivergedError(epoch, mean)
        return mean

    def _validate(self, epoch: int) -> EvalPoint:
        cutoff = self.config.eval_cutoff
        report = evaluate(self.model, self.ds, SplitName.VAL, [cutoff], seed=self.config.seed, epoch=epoch)
        return EvalPoint(epoch=epoch, hr=report.hr_at(cutoff), ndcg=report.ndcg_at(cutoff))

    @log_call
    def run(self) -> Tuple[EmbeddingModel, TrainReport]:
        cfg = self.config
        report = TrainReport(cutoff=cfg.eval_cutoff)
        best_model = self.model.copy()
        best_ndcg = -math.inf
        stale = 0
        logger.info(
            "training %s: L=%d K=%d epochs=%d lr=%g optimizer=%s",
            cfg.loss.objective.value, cfg.sampler.L, cfg.sampler.K, cfg.epochs, cfg.lr, cfg.optimizer.name.value,
        )

        pool = ThreadPoolExecutor(max_workers=cfg.num_workers) if cfg.num_workers > 1 else None
        try:
            for epoch in range(1, cfg.epochs + 1):
                start = time.perf_counter()
                objective = self._run_epoch(epoch, pool)
                seconds = time.perf_counter() - start
                report.epoch_objectives.append(objective)
                report.epoch_seconds.append(seconds)
                report.last_epoch = epoch

                point: Optional[EvalPoint] = None
                # 最后一轮总是评估，保证返回的模型不差于最终模型
                if self.run_validation and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
                    point = self._validate(epoch)
                    report.evals.append(point)
                    if point.ndcg > best_ndcg:
                        best_ndcg = point.ndcg
                        best_model = self.model.copy()
                        report.best_epoch = epoch
                        stale = 0
                    else:
                        stale += 1
                self._log_epoch(epoch, objective, seconds, point)

                if stale >= cfg.patience:
                    report.stopped_early = True
                    logger.info("early stopping at epoch %d (best epoch %d)", epoch, report.best_epoch)
                    break
        finally:
            if pool is not None:
                pool.shutdown()

        if not report.evals:
            best_model = self.model.copy()
            report.best_epoch = report.last_epoch
        return best_model, report

    def _log_epoch(self, epoch: int, objective: float, seconds: float, point: Optional[EvalPoint]) -> None:
        cutoff = self.config.eval_cutoff
        record: Dict[str, Optional[float]] = {
            "epoch": epoch,
            "objective": objective,
            "seconds": round(seconds, 6),
            f"val_hr@{cutoff}": None if point is None else point.hr,
            f"val_ndcg@{cutoff}": None if point is None else point.ndcg,
        }
        if point is None:
            logger.info("epoch %d objective=%.6f (%.2fs)", epoch, objective, seconds)
        else:
            logger.info(
                "epoch %d objective=%.6f val HR@%d=%.5f NDCG@%d=%.5f (%.2fs)",
                epoch, objective, cutoff, point.hr, cutoff, point.ndcg, seconds,
            )
        if self.log_path is not None:
            append_jsonl(self.log_path, record)


def train(
    ds: InteractionDataset,
    config: TrainConfig,
    *,
    log_path: Optional[PathLike] = None,
    model: Optional[EmbeddingModel] = None,
) -> Tuple[EmbeddingModel, TrainReport]:
    """训练并返回验证集 NDCG 最优的模型"""
    return Trainer(ds, config, log_path=log_path, model=model).run()


# ---------------- 复杂度探测 ----------------


@log_call
def epoch_time_probe(
    ds: InteractionDataset,
    config: TrainConfig,
    K_values: Sequence[int],
    epochs: int = 3,
) -> Dict[int, float]:
    """固定 L，逐个 K 训练 epochs 轮（不做验证），返回每轮平均耗时"""
    if epochs < 3:
        raise ConfigError("每个 K 至少测量 3 个 epoch")
    if config.loss.objective == Objective.BPR:
        raise ConfigError("bpr 目标固定 K=1，无法做 K 扫描")
    if not K_values:
        raise ConfigError("K_values 不能为空")
    timings: Dict[int, float] = {}
    for K in K_values:
        cfg = config.model_copy(deep=True)
        cfg.sampler.K = int(K)
        cfg.epochs = epochs
        _, report = Trainer(ds, cfg, run_validation=False, show_progress=False).run()
        timings[int(K)] = float(np.mean(report.epoch_seconds))
        logger.info("probe K=%d L=%d: %.4fs/epoch", K, cfg.sampler.L, timings[int(K)])
    return timings


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """最小二乘直线拟合，返回 (slope, intercept, R²)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise EvalError("线性拟合至少需要两个点")
    if np.ptp(x) == 0:
        raise EvalError("线性拟合需要至少两个不同的 x")
    if np.ptp(y) == 0:
        # 耗时完全相同：水平直线精确拟合
        return 0.0, float(y[0]), 1.0
    fit = linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue) ** 2
