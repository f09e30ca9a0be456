"""
配置文件 (Configuration)
"""

import os
from dotenv import load_dotenv

# 从 .env 文件加载环境变量
load_dotenv()


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"环境变量 {name} 必须是整数, 当前值: {raw!r}")
    if value < minimum:
        raise ValueError(f"环境变量 {name} 必须 >= {minimum}, 当前值: {value}")
    return value


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"环境变量 {name} 必须是数字, 当前值: {raw!r}")
    if not value > 0:
        raise ValueError(f"环境变量 {name} 必须为正数, 当前值: {value}")
    return value


# 运行设置
THREADS = _env_int("MWLAB_THREADS", 1, minimum=1)  # 工作线程数 (命令行 --threads 优先)
SEED = _env_int("MWLAB_SEED", 0)
RESULTS_DIR = os.getenv("MWLAB_RESULTS_DIR", "results")

# 日志设置
LOG_LEVEL = os.getenv("MWLAB_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("MWLAB_LOG_FILE", "")
if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
    raise ValueError(f"MWLAB_LOG_LEVEL 无效: {LOG_LEVEL}")

# MVEE (Khachiyan) 求解器
MVEE_TOLERANCE = _env_float("MWLAB_MVEE_TOL", 1e-6)
MVEE_MAX_ITER = _env_int("MWLAB_MVEE_MAX_ITER", 100000, minimum=1)

# 数值常量
EPS_PD = 1e-10              # 权重矩阵最小特征值
EPS_RIDGE = 1e-12           # 退化约化算子求逆前加的岭
NULL_DIRECTION_RATIO = 1e-12  # 特征值 < ratio * ||A|| 视为零方向
SYMMETRY_TOL = 1e-12        # ||W - W^T|| 上限

# 方向网格
MIN_DIRECTIONS = 200        # N_dir = max(200, 40 n^2)
DIRECTIONS_PER_DIM2 = 40
VERIFY_SEED_OFFSET = 7919   # 验证网格与构造网格使用不同种子

# 平均算子 oracle
ORACLE_STARTS = 16          # 多起点数
ORACLE_MAX_SWEEPS = 60      # 交替最大化轮数上限
ORACLE_GRID = 64            # 二维因子的初始角度网格

# 结果输出
CSV_DIGITS = 12
