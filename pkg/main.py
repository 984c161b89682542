#!/usr/bin/env python3
"""
Set2setRank 命令行主入口
Set2setRank command-line entry point

命令：prepare / train / evaluate / compare / probe-complexity
退出码：0 成功，2 用法或配置错误，3 运行期错误
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.core.exceptions import EXIT_OK, ConfigError, handle_cli_error  # noqa: E402
from app.core.experiment_manager import (  # noqa: E402
    cmd_compare,
    cmd_evaluate,
    cmd_prepare,
    cmd_probe_complexity,
    cmd_train,
)
from app.core.run_manager import build_config, deterministic_flags, seed_flags, start_run  # noqa: E402
from config.constants import PRESETS  # noqa: E402
from config.logging_config import get_logger, setup_logging  # noqa: E402


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML / JSON 实验配置文件")
    common.add_argument("--preset", choices=sorted(PRESETS), help="超参数预设（优先级低于配置文件）")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="a.b=c",
        help="覆盖单个配置项，可重复，例如 --set train.loss.beta=0.2",
    )
    common.add_argument("--seed", type=int, help="覆盖训练与采样种子")
    common.add_argument("--deterministic", action="store_true", help="单线程、单进程运行，保证逐字节可复现")
    common.add_argument("--run-dir", help="运行目录（默认 RUNS_DIR/<时间戳>-<配置哈希>）")
    common.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="日志级别（默认取环境变量 LOG_LEVEL）",
    )
    common.add_argument("--debug", action="store_true", help="出错时输出完整堆栈")

    parser = argparse.ArgumentParser(
        description="Set2setRank 协同排序实验工具",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  # 准备数据集（解析、过滤、划分）
  python main.py prepare --config exp.toml

  # 以默认超参数预设训练
  python main.py train --config exp.toml --preset paper-default

  # 评估检查点
  python main.py evaluate --config exp.toml --checkpoint runs/<run>/model.ckpt

  # 对比网格与消融
  python main.py compare --config grid.toml --no-set-to-set --parallel 4

  # 复杂度探测（合成数据）
  python main.py probe-complexity --synthetic 2000,1000,20
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="解析评分日志并写出数据集文件")
    p.add_argument("--input", help="原始评分日志（覆盖 data.path）")
    p.add_argument("--output", help="数据集输出路径（覆盖 data.dataset_path）")

    p = sub.add_parser("train", parents=[common], help="训练并写出检查点与训练日志")
    p.add_argument("--dataset", help="已准备的数据集文件")

    p = sub.add_parser("evaluate", parents=[common], help="全量排序评估检查点")
    p.add_argument("--checkpoint", required=True, help="检查点路径")
    p.add_argument("--dataset", help="已准备的数据集文件")
    p.add_argument("--cutoffs", type=_int_list, help="截断位置，例如 10,20,30,40,50")
    p.add_argument("--split", choices=["val", "test"], help="评估分区")

    p = sub.add_parser("compare", parents=[common], help="按 grid 训练并汇总对比表")
    p.add_argument("--dataset", help="已准备的数据集文件")
    p.add_argument("--parallel", type=int, default=1, help="并行进程数（默认 1）")
    p.add_argument("--no-item-to-set", action="store_true", help="消融：去掉 item-to-set 项")
    p.add_argument("--no-set-to-set", action="store_true", help="消融：去掉 set-to-set 项（λ=0）")

    p = sub.add_parser("probe-complexity", parents=[common], help="测量单轮耗时随 K 的变化")
    p.add_argument("--k-values", type=_int_list, default=[5, 10, 20, 40], help="K 列表（默认 5,10,20,40）")
    p.add_argument("--epochs", type=int, default=3, help="每个 K 的测量轮数（≥3）")
    p.add_argument("--synthetic", type=_int_list, metavar="USERS,ITEMS,PER_USER", help="使用合成数据集")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    flags: Dict[str, Any] = dict(seed_flags(args.seed))
    if args.command == "prepare":
        flags["data.path"] = args.input
        flags["data.dataset_path"] = args.output
    if args.command == "evaluate":
        flags["eval.cutoffs"] = args.cutoffs
        flags["eval.split"] = args.split
    if args.deterministic:
        flags.update(deterministic_flags())
    return flags


def run_command(args: argparse.Namespace) -> None:
    config = build_config(args.config, preset=args.preset, overrides=args.overrides, flags=_flags(args))
    run = start_run(config, args.run_dir)

    if args.command == "prepare":
        out, stats = cmd_prepare(config, run)
        print(
            f"users={stats['users']} items={stats['items']} interactions={stats['interactions']} "
            f"density={stats['density']:.6f}"
        )
        print(f"dataset: {out}")
    elif args.command == "train":
        ckpt, report = cmd_train(config, run, args.dataset)
        print(f"best epoch {report.best_epoch} / {report.last_epoch}, checkpoint: {ckpt}")
    elif args.command == "evaluate":
        report = cmd_evaluate(config, run, args.checkpoint, args.dataset)
        print(report.to_table(), end="")
    elif args.command == "compare":
        parallel = 1 if args.deterministic else max(1, args.parallel)
        rows = cmd_compare(
            config, run,
            parallel=parallel,
            no_item_to_set=args.no_item_to_set,
            no_set_to_set=args.no_set_to_set,
            dataset_path=args.dataset,
        )
        print(run.artifact("compare.txt").read_text(encoding="utf-8"), end="")
        print(f"{len(rows)} cells -> {run.path}")
    elif args.command == "probe-complexity":
        synthetic = None
        if args.synthetic:
            if len(args.synthetic) != 3:
                raise ConfigError("--synthetic 需要 USERS,ITEMS,PER_USER 三个整数")
            synthetic = tuple(args.synthetic)
        result = cmd_probe_complexity(config, run, K_values=args.k_values, epochs=args.epochs, synthetic=synthetic)
        for k, seconds in result["seconds_per_epoch"].items():
            print(f"K={k}: {seconds:.4f}s/epoch")
        if result["r2"] is not None:
            print(f"R2(time ~ K+L) = {result['r2']:.4f}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    logger = get_logger(__name__)
    try:
        run_command(args)
    except KeyboardInterrupt:
        logger.info("收到中断信号，退出")
        return 130
    except Exception as exc:
        return handle_cli_error(exc, debug=args.debug)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
