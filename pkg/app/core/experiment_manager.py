"""
实验管理器：把数据准备、训练、评估、对比网格与复杂度探测串成命令
Experiment manager: command orchestration

说明：
- 每个命令接收已校验的 ExperimentConfig 与 RunContext
- 所有产物写入运行目录，并携带配置哈希
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from app.core.exceptions import ConfigError, ensure_file
from app.core.run_manager import RunContext
from app.data.dataset import InteractionDataset, build_dataset, dataset_stats, split_dataset, synthetic_dataset
from app.data.dataset_io import load_dataset, save_dataset
from app.evaluation.evaluator import evaluate
from app.models.checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint
from app.parsers.ratings_read import parse_ratings_file
from app.schemas.config_schemas import DataConfig, EvalConfig, ExperimentConfig, Objective, TrainConfig
from app.schemas.report_schemas import EvalReport, TrainReport
from app.training.trainer import epoch_time_probe, linear_fit_r2, train
from app.utils.file_utils import write_json
from app.utils.log_utils import log_call
from config.constants import (
    CHECKPOINT_FILE,
    COMPARE_JSON_FILE,
    COMPARE_TEXT_FILE,
    DATASET_FILE,
    EVAL_JSON_FILE,
    EVAL_TEXT_FILE,
    PROBE_FILE,
    SELECTION_CUTOFF,
    TRAIN_LOG_FILE,
    TRAIN_REPORT_FILE,
)
from config.logging_config import get_logger

logger = get_logger(__name__)


# ---------------- 数据 ----------------


def prepare_dataset(data: DataConfig) -> InteractionDataset:
    """解析 -> 用户核心过滤 -> 按用户划分"""
    path = ensure_file(data.path, "评分日志")
    interactions = parse_ratings_file(path, data.format, data.rating_threshold, skip_header=data.skip_header)
    ds = build_dataset(interactions, min_interactions=data.min_interactions)
    return split_dataset(ds, data.split_ratios, seed=data.seed, strategy=data.split_strategy)


def resolve_dataset(config: ExperimentConfig, dataset_path: Optional[str] = None) -> InteractionDataset:
    """优先读取已准备的数据集文件，否则从原始评分日志现场准备"""
    path = dataset_path or config.data.dataset_path
    if path:
        ds, _ = load_dataset(ensure_file(path, "数据集文件"))
        return ds
    if config.data.path:
        return prepare_dataset(config.data)
    raise ConfigError("需要 data.dataset_path 或 data.path")


@log_call
def cmd_prepare(config: ExperimentConfig, run: RunContext) -> Tuple[Path, Dict[str, float]]:
    ds = prepare_dataset(config.data)
    out = Path(config.data.dataset_path) if config.data.dataset_path else run.artifact(DATASET_FILE)
    save_dataset(ds, out, config_hash=run.config_hash)
    stats = dataset_stats(ds)
    logger.info(
        "dataset: users=%d items=%d interactions=%d density=%.6f -> %s",
        stats["users"], stats["items"], stats["interactions"], stats["density"], out,
    )
    return out, stats


# ---------------- 训练 / 评估 ----------------


@log_call
def cmd_train(config: ExperimentConfig, run: RunContext, dataset_path: Optional[str] = None) -> Tuple[Path, TrainReport]:
    ds = resolve_dataset(config, dataset_path)
    model, report = train(ds, config.train, log_path=run.artifact(TRAIN_LOG_FILE))
    ckpt = save_checkpoint(model, run.artifact(CHECKPOINT_FILE), config_hash=run.training_hash, epoch=report.best_epoch)
    write_json(run.artifact(TRAIN_REPORT_FILE), report.model_dump(mode="json"))
    logger.info("best epoch %d (val NDCG@%d=%s), checkpoint %s", report.best_epoch, report.cutoff, report.best_ndcg, ckpt)
    return ckpt, report


def write_eval_report(report: EvalReport, run: RunContext) -> Tuple[Path, Path]:
    json_path = run.artifact(EVAL_JSON_FILE)
    text_path = run.artifact(EVAL_TEXT_FILE)
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.to_table(), encoding="utf-8")
    return json_path, text_path


@log_call
def cmd_evaluate(
    config: ExperimentConfig,
    run: RunContext,
    checkpoint: str,
    dataset_path: Optional[str] = None,
) -> EvalReport:
    ensure_file(checkpoint, "检查点")
    meta = read_checkpoint_meta(checkpoint)
    model = load_checkpoint(checkpoint, expected_config_hash=run.training_hash)
    ds = resolve_dataset(config, dataset_path)
    report = evaluate(
        model,
        ds,
        config.eval.split,
        config.eval.cutoffs,
        num_workers=config.eval.num_workers,
        seed=config.train.seed,
        epoch=meta.get("epoch"),
        config_hash=run.config_hash,
    )
    write_eval_report(report, run)
    return report


# ---------------- 对比网格 ----------------


def cell_config(base: TrainConfig, cell: Dict[str, Any], no_item_to_set: bool = False, no_set_to_set: bool = False) -> TrainConfig:
    """把网格单元与消融开关应用到 train 配置，并重新校验"""
    data = base.model_dump(mode="json", by_alias=True)
    if "L" in cell:
        data["sampler"]["L"] = int(cell["L"])
    if "K" in cell:
        data["sampler"]["K"] = int(cell["K"])
    if "objective" in cell:
        data["loss"]["objective"] = Objective(cell["objective"]).value
    if "beta" in cell:
        data["loss"]["beta"] = float(cell["beta"])
    if "lambda_" in cell:
        data["loss"]["lambda"] = float(cell["lambda_"])
    if no_item_to_set:
        data["loss"]["use_item_to_set"] = False
    if no_set_to_set:
        data["loss"]["lambda"] = 0.0
    return TrainConfig.model_validate(data)


def cell_label(cfg: TrainConfig) -> str:
    loss = cfg.loss
    label = f"{loss.objective.value}(L={cfg.sampler.L},K={cfg.sampler.K},beta={loss.beta:g},lambda={loss.lambda_:g})"
    if not loss.use_item_to_set:
        label += "[no-item-to-set]"
    if loss.mask_enabled:
        label += "[mask]"
    return label


def run_cell(ds: InteractionDataset, train_cfg: TrainConfig, eval_cfg: EvalConfig) -> Dict[str, Any]:
    """训练一个网格单元并在测试集上评估；进程池中执行时需可 pickle"""
    model, train_report = train(ds, train_cfg)
    report = evaluate(model, ds, eval_cfg.split, eval_cfg.cutoffs, seed=train_cfg.seed, epoch=train_report.best_epoch)
    row: Dict[str, Any] = {
        "label": cell_label(train_cfg),
        "objective": train_cfg.loss.objective.value,
        "L": train_cfg.sampler.L,
        "K": train_cfg.sampler.K,
        "beta": train_cfg.loss.beta,
        "lambda": train_cfg.loss.lambda_,
        "best_epoch": train_report.best_epoch,
    }
    for n, hr, ndcg in zip(report.cutoffs, report.hr, report.ndcg):
        row[f"hr@{n}"] = hr
        row[f"ndcg@{n}"] = ndcg
    return row


def format_compare_table(rows: List[Dict[str, Any]], cutoffs: Sequence[int]) -> str:
    width = max([len("cell")] + [len(r["label"]) for r in rows])
    header = "cell".ljust(width) + "".join(f" | {'HR@' + str(n):>9} {'NDCG@' + str(n):>9}" for n in cutoffs)
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(r["label"].ljust(width) + "".join(f" | {r[f'hr@{n}']:9.5f} {r[f'ndcg@{n}']:9.5f}" for n in cutoffs))
    return "\n".join(lines) + "\n"


@log_call
def cmd_compare(
    config: ExperimentConfig,
    run: RunContext,
    *,
    parallel: int = 1,
    no_item_to_set: bool = False,
    no_set_to_set: bool = False,
    dataset_path: Optional[str] = None,
) -> List[Dict[str, Any]]:
    """逐单元训练（共享数据与种子），按 NDCG@10 降序输出一张表"""
    if config.grid is None or config.grid.size == 0:
        raise ConfigError("compare 需要非空的 grid 配置")
    cells = config.grid.cells()
    logger.info("grid size: %d cells", len(cells))
    print(f"grid size: {len(cells)}")

    cfgs = [cell_config(config.train, cell, no_item_to_set, no_set_to_set) for cell in cells]
    ds = resolve_dataset(config, dataset_path)
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(run_cell, [ds] * len(cfgs), cfgs, [config.eval] * len(cfgs)))
    else:
        rows = [run_cell(ds, cfg, config.eval) for cfg in cfgs]

    key = SELECTION_CUTOFF if SELECTION_CUTOFF in config.eval.cutoffs else config.eval.cutoffs[0]
    rows.sort(key=lambda r: -r[f"ndcg@{key}"])
    write_json(
        run.artifact(COMPARE_JSON_FILE),
        {"config_hash": run.config_hash, "grid_size": len(cells), "sort_key": f"ndcg@{key}", "rows": rows},
    )
    run.artifact(COMPARE_TEXT_FILE).write_text(format_compare_table(rows, config.eval.cutoffs), encoding="utf-8")
    return rows


# ---------------- 复杂度探测 ----------------


@log_call
def cmd_probe_complexity(
    config: ExperimentConfig,
    run: RunContext,
    *,
    K_values: Sequence[int] = (5, 10, 20, 40),
    epochs: int = 3,
    synthetic: Optional[Tuple[int, int, int]] = None,
) -> Dict[str, Any]:
    """每个 K 训练 ≥3 轮测量单轮耗时，并对 (K+L) 做线性拟合。

    synthetic = (users, items, interactions_per_user) 时使用合成数据集。
    """
    if synthetic is not None:
        users, items, per_user = synthetic
        ds = synthetic_dataset(users, items, per_user, seed=config.data.seed)
    else:
        ds = resolve_dataset(config)
    timings = epoch_time_probe(ds, config.train, K_values, epochs=epochs)
    L = config.train.sampler.L
    result: Dict[str, Any] = {
        "config_hash": run.config_hash,
        "L": L,
        "epochs": epochs,
        "seconds_per_epoch": {str(k): v for k, v in timings.items()},
        "slope": None,
        "intercept": None,
        "r2": None,
    }
    if len(timings) >= 2:
        slope, intercept, r2 = linear_fit_r2([k + L for k in timings], list(timings.values()))
        result.update(slope=slope, intercept=intercept, r2=r2)
        logger.info("time vs (K+L): slope=%.6f intercept=%.6f R2=%.4f", slope, intercept, r2)
    write_json(run.artifact(PROBE_FILE), result)
    return result
