from __future__ import annotations

from typing import Any, Dict

# 二进制文件头
DATASET_MAGIC = b"S2SR-DS1"
CHECKPOINT_MAGIC = b"S2SR-CK1"

# 评估截断位置
DEFAULT_CUTOFFS = (10, 20, 30, 40, 50)
SELECTION_CUTOFF = 10

# ln 参数下限
DEFAULT_F_FLOOR = 1e-12

# 数值比较容差（划分比例之和）
RATIO_TOLERANCE = 1e-9

# 产物文件名
DATASET_FILE = "dataset.bin"
CHECKPOINT_FILE = "model.ckpt"
TRAIN_LOG_FILE = "train_log.jsonl"
TRAIN_REPORT_FILE = "train_report.json"
EVAL_JSON_FILE = "eval_report.json"
EVAL_TEXT_FILE = "eval_report.txt"
COMPARE_JSON_FILE = "compare.json"
COMPARE_TEXT_FILE = "compare.txt"
PROBE_FILE = "probe.json"
RUN_CONFIG_FILE = "config.json"
RUN_LOG_FILE = "run.log"

# 预设：按嵌套键覆盖 ExperimentConfig 的 train 块
PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-default": {
        "loss": {"objective": "set2set", "lambda": 1.0, "beta": 0.5, "mask_enabled": False},
        "sampler": {"L": 2, "K": 5, "mask_enabled": False},
    },
    "paper-adaptive": {
        "loss": {"objective": "set2set", "lambda": 1.0, "beta": 0.2, "mask_enabled": True},
        "sampler": {"L": 4, "K": 5, "mask_enabled": True, "mask_keep_prob": 0.5},
    },
    "paper-easy": {
        "loss": {"objective": "set2set_easy", "lambda": 1.0, "beta": 0.5, "mask_enabled": False},
        "sampler": {"L": 2, "K": 5, "mask_enabled": False},
    },
    "bpr": {
        "loss": {"objective": "bpr", "lambda": 0.0, "mask_enabled": False},
        "sampler": {"L": 1, "K": 1, "mask_enabled": False},
    },
    # 同等负采样预算（K=5）的 BPR：L=1 时 item-to-set 项即 K 个成对项之和
    "bpr-k5": {
        "loss": {"objective": "set2set", "lambda": 0.0, "mask_enabled": False},
        "sampler": {"L": 1, "K": 5, "mask_enabled": False},
    },
    "pop-sampling": {
        "loss": {"objective": "set2set", "lambda": 0.0, "mask_enabled": False},
        "sampler": {"L": 1, "K": 5, "mask_enabled": False, "neg_mode": "popularity"},
    },
}
