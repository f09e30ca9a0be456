"""
球面方向网格工具
"""

from functools import lru_cache

import numpy as np
from scipy.stats import norm, qmc

from config import DIRECTIONS_PER_DIM2, MIN_DIRECTIONS

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def default_count(n: int) -> int:
    """N_dir = max(200, 40 n^2)"""
    return max(MIN_DIRECTIONS, DIRECTIONS_PER_DIM2 * n * n)


@lru_cache(maxsize=256)
def direction_net(n: int, count: int, seed: int = 0) -> np.ndarray:
    """
    确定性低差异单位方向网格, 同一 (n, count, seed) 总是返回同一网格

    Args:
        n: 空间维数
        count: 方向个数
        seed: 种子, 不同种子给出互不相同的网格

    Returns:
        np.ndarray: (count, n) 单位向量, 只读
    """
    if n < 1 or count < 1:
        raise ValueError(f"无效的方向网格参数: n={n}, count={count}")
    if n == 1:
        net = np.ones((1, 1))
    elif n == 2:
        # 对称体只需半圆; 种子决定角度偏移
        offset = (seed * GOLDEN) % 1.0
        theta = np.pi * (np.arange(count) + offset) / count
        net = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        sampler = qmc.Halton(d=n, scramble=True, seed=seed)
        points = sampler.random(count)
        points = np.clip(points, 1e-12, 1 - 1e-12)
        gauss = norm.ppf(points)
        net = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
        if seed == 0:
            net[: min(n, count)] = np.eye(n)[: min(n, count)]
    net.setflags(write=False)
    return net


def with_extra(net: np.ndarray, extra) -> np.ndarray:
    """在网格后追加若干方向 (自动单位化, 零向量跳过)"""
    extra = np.atleast_2d(np.asarray(extra, dtype=float))
    lengths = np.linalg.norm(extra, axis=1)
    keep = lengths > 0
    if not keep.any():
        return np.asarray(net)
    return np.vstack([net, extra[keep] / lengths[keep, None]])
