"""
结果持久化模块: CSV 与 JSON
"""

import csv
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from config import CSV_DIGITS, RESULTS_DIR
from logger import setup_logger

logger = setup_logger("results")


def format_value(value) -> str:
    """数值保留 12 位有效数字, 其余原样转成字符串"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, (float, np.floating)):
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{float(value):.{CSV_DIGITS}g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def _to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        if np.isnan(value):
            return "nan"
        return value
    if isinstance(value, Fraction):
        return float(value)
    if hasattr(value, "to_json"):
        return value.to_json()
    return value


class ResultStore:
    def __init__(self, results_dir: Optional[str] = None):
        """
        初始化结果目录

        Args:
            results_dir: 输出目录, 缺省取 MWLAB_RESULTS_DIR
        """
        self.root = Path(results_dir or RESULTS_DIR)
        # 确保输出目录存在
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """写出 CSV, 数值保留 12 位有效数字"""
        target = self.path(name)
        try:
            with target.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                count = 0
                for row in rows:
                    writer.writerow([format_value(v) for v in row])
                    count += 1
            logger.info(f"已写出 {count} 行到 {target}")
            return target
        except OSError as e:
            logger.error(f"写出 CSV 失败 {target}: {str(e)}")
            raise

    def write_json(self, name: str, data) -> Path:
        target = self.path(name)
        try:
            with target.open("w", encoding="utf-8") as fh:
                json.dump(_to_jsonable(data), fh, indent=2, ensure_ascii=False)
            logger.info(f"已写出 {target}")
            return target
        except OSError as e:
            logger.error(f"写出 JSON 失败 {target}: {str(e)}")
            raise

    def read_json(self, name: str):
        with self.path(name).open("r", encoding="utf-8") as fh:
            return json.load(fh)
