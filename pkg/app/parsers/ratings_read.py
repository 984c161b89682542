"""
评分日志读取：原始 user/item/rating[/timestamp] 文本 -> 隐式反馈交互列表
Rating log reader
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from app.core.exceptions import EmptyDatasetError, ParseError
from app.schemas.config_schemas import RatingFormat
from app.utils.log_utils import log_call
from config.logging_config import get_logger

logger = get_logger(__name__)

_SEPARATORS = {RatingFormat.TSV: "\t", RatingFormat.CSV: ","}
_COLUMNS = ["user", "item", "rating", "timestamp"]


@dataclass(frozen=True, slots=True)
class Interaction:
    """一条观测反馈（稠密 0 起始编号）"""

    user: int
    item: int
    timestamp: Optional[int] = None


def _line_no_from_parser_error(exc: Exception) -> int:
    match = re.search(r"line (\d+)", str(exc))
    return int(match.group(1)) if match else 0


def _read_frame(path: Path, sep: str, skip_header: bool) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            header=None,
            names=_COLUMNS,
            dtype=str,
            skiprows=1 if skip_header else 0,
            skip_blank_lines=True,
            keep_default_na=False,
            encoding="utf-8",
            engine="c",
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=_COLUMNS)
    except pd.errors.ParserError as exc:
        raise ParseError(_line_no_from_parser_error(exc), "字段数量超过 4") from exc
    # 缺失的尾部字段按空串处理，由调用方判定
    return frame.fillna("")


def _source_line_numbers(path: Path, skip_header: bool) -> np.ndarray:
    """DataFrame 行号 -> 文件行号（1 起始，跳过空行）"""
    numbers: List[int] = []
    with path.open("r", encoding="utf-8") as handle:
        for i, line in enumerate(handle, start=1):
            if skip_header and i == 1:
                continue
            if line.strip():
                numbers.append(i)
    return np.asarray(numbers, dtype=np.int64)


@log_call
def parse_ratings_file(
    path: Union[str, Path],
    format: Union[RatingFormat, str] = RatingFormat.TSV,
    rating_threshold: float = 4.0,
    *,
    skip_header: bool = False,
) -> List[Interaction]:
    """解析评分日志为隐式反馈交互。

    - 原始 id 按首次出现顺序映射为稠密编号（仅统计通过阈值的行）
    - rating < rating_threshold 的行被丢弃
    - 重复 (user, item) 合并，保留最早的 timestamp

    Raises:
        FileNotFoundError: 文件不存在
        ParseError: 行格式错误（携带行号）
        EmptyDatasetError: 过滤后为空
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(2, "评分文件不存在", str(path))
    fmt = RatingFormat(format)
    frame = _read_frame(path, _SEPARATORS[fmt], skip_header)
    if frame.empty:
        raise EmptyDatasetError(f"评分文件为空: {path}")

    ratings = pd.to_numeric(frame["rating"], errors="coerce")
    timestamps = pd.to_numeric(frame["timestamp"].replace("", np.nan), errors="coerce")
    bad = (
        (frame["user"].str.strip() == "")
        | (frame["item"].str.strip() == "")
        | ratings.isna()
        | (frame["timestamp"].ne("") & timestamps.isna())
    )
    if bad.any():
        line_numbers = _source_line_numbers(path, skip_header)
        first = int(np.flatnonzero(bad.to_numpy())[0])
        line_no = int(line_numbers[first]) if first < len(line_numbers) else first + 1
        raise ParseError(line_no, "需要 user<sep>item<sep>rating[<sep>timestamp]")

    frame = frame.assign(rating=ratings, timestamp=timestamps)
    frame = frame[frame["rating"] >= rating_threshold]
    if frame.empty:
        raise EmptyDatasetError(f"阈值 {rating_threshold} 过滤后没有交互")

    # 编号在去重之前按原始行序分配，保证首次出现顺序
    frame = frame.reset_index(drop=True).reset_index(names="row")
    user_codes, user_labels = pd.factorize(frame["user"], sort=False)
    item_codes, item_labels = pd.factorize(frame["item"], sort=False)
    frame = frame.assign(uid=user_codes, iid=item_codes)
    frame["first_row"] = frame.groupby(["uid", "iid"])["row"].transform("min")

    # 去重：同一 (user, item) 保留最早时间戳，按该对首次出现的行序输出
    frame = frame.sort_values(["timestamp", "row"], kind="stable", na_position="last")
    frame = frame.drop_duplicates(subset=["uid", "iid"], keep="first").sort_values("first_row", kind="stable")
    stamps = frame["timestamp"].to_numpy()

    interactions = [
        Interaction(int(u), int(i), None if np.isnan(t) else int(t))
        for u, i, t in zip(frame["uid"].to_numpy(), frame["iid"].to_numpy(), stamps)
    ]
    logger.info(
        "parsed %s interactions (%s users, %s items) from %s",
        len(interactions), len(user_labels), len(item_labels), path,
    )
    return interactions
