"""
矩阵权: 分片常值 SPD 权场, 张量权, 约化算子
"""

import itertools
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from config import EPS_PD, EPS_RIDGE, MVEE_TOLERANCE, SYMMETRY_TOL, VERIFY_SEED_OFFSET
from harmonics.convex import SymmetricHull, john_ellipsoid
from harmonics.errors import InputError
from harmonics.geometry import Cube, Grid
from harmonics.tensor import batched_kron
from logger import setup_logger
from utils.directions import default_count, direction_net
from utils.results import ResultStore

logger = setup_logger("weights")

_ids = itertools.count(1)


def reciprocal(p) -> Fraction:
    """1/p, p = inf 时为 0"""
    if isinstance(p, str) and p.strip().lower() in ("inf", "infinity", "∞"):
        return Fraction(0)
    if isinstance(p, float) and np.isinf(p):
        if p < 0:
            raise InputError("指数不能为 -inf")
        return Fraction(0)
    value = Fraction(p).limit_denominator(10 ** 9) if isinstance(p, float) else Fraction(p)
    if value == 0:
        raise InputError("指数不能为 0")
    return 1 / value


def power_mean(values: np.ndarray, recip, axis: int = 0) -> np.ndarray:
    """
    (avg v^t)^{1/t}, 以 1/t 给出指数

    Args:
        values: 非负数组
        recip: 1/t; 0 表示最大值, 负数表示负指数 (数据须严格为正)
        axis: 平均所在的轴

    Returns:
        np.ndarray: 沿 axis 的幂平均
    """
    values = np.asarray(values, dtype=float)
    r = float(recip)
    if r == 0:
        return values.max(axis=axis)
    t = 1.0 / r
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logs = np.log(values)
        count = values.shape[axis]
        log_mean = logsumexp(t * logs, axis=axis) - np.log(count)
        return np.exp(log_mean / t)


def _spd_function(values: np.ndarray, fn) -> np.ndarray:
    """逐格对对称矩阵做谱函数, values: (N, n, n)"""
    w, v = np.linalg.eigh(values)
    return np.einsum("cij,cj,ckj->cik", v, fn(w), v)


@dataclass(eq=False)
class MatrixWeightField:
    """分片常值矩阵权, values[c] 为第 c 个格子上的 n x n SPD 矩阵"""

    grid: Grid
    values: np.ndarray
    name: str = "weight"
    weight_id: int = field(default_factory=lambda: next(_ids))
    _inverse: Optional["MatrixWeightField"] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise InputError(f"权值形状无效: {values.shape}")
        if values.shape[0] != self.grid.n_cells:
            raise InputError(f"权值个数 {values.shape[0]} 与格子数 {self.grid.n_cells} 不符")
        asym = np.abs(values - values.transpose(0, 2, 1)).max(axis=(1, 2))
        bad = np.flatnonzero(asym > SYMMETRY_TOL * np.maximum(1.0, np.abs(values).max(axis=(1, 2))))
        if bad.size:
            raise InputError(f"权 {self.name} 在格子 {int(bad[0])} 不对称")
        values = (values + values.transpose(0, 2, 1)) / 2
        lowest = np.linalg.eigvalsh(values)[:, 0]
        bad = np.flatnonzero(~(lowest >= EPS_PD))
        if bad.size:
            cell = int(bad[0])
            raise InputError(f"权 {self.name} 在格子 {cell} 的最小特征值 {lowest[cell]:.3e} < {EPS_PD}")
        values.setflags(write=False)
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def scalar(self) -> np.ndarray:
        """n = 1 时的数值表"""
        if self.n != 1:
            raise InputError("只有 n = 1 的权才是数量权")
        return self.values[:, 0, 0]

    @classmethod
    def from_scalar(cls, grid: Grid, values, name: str = "scalar") -> "MatrixWeightField":
        return cls(grid, np.asarray(values, dtype=float)[:, None, None], name)

    def inverse(self) -> "MatrixWeightField":
        if self._inverse is None:
            inv = MatrixWeightField(self.grid, _spd_function(self.values, lambda w: 1.0 / w),
                                    f"{self.name}^-1")
            inv._inverse = self
            self._inverse = inv
        return self._inverse

    def scale(self, c: float) -> "MatrixWeightField":
        return MatrixWeightField(self.grid, c * self.values, f"{c}*{self.name}")

    def matrix_power(self, alpha: float) -> "MatrixWeightField":
        return MatrixWeightField(self.grid, _spd_function(self.values, lambda w: w ** alpha),
                                 f"{self.name}^{alpha}")

    def power(self, rho: float) -> "MatrixWeightField":
        """数量权的幂 w^ρ"""
        return MatrixWeightField.from_scalar(self.grid, self.scalar ** rho, f"{self.name}^{rho}")

    def project(self, u) -> np.ndarray:
        """数量场 x -> ‖W(x) u‖"""
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.n:
            raise InputError("向量维数与权不符")
        return np.linalg.norm(self.values @ u, axis=1)

    def operator_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, ord=2, axis=(1, 2))

    def on_cube(self, cube: Cube) -> np.ndarray:
        return self.values[self.grid.cells_in(cube)]

    def to_csv(self, store: ResultStore, name: str):
        """每行: 格子编号, 矩阵元 (行优先)"""
        header = ["cell"] + [f"w{i}{j}" for i in range(self.n) for j in range(self.n)]
        rows = ([c] + list(self.values[c].ravel()) for c in range(self.n_cells))
        return store.write_csv(name, header, rows)


def _rotation(theta: np.ndarray, n: int) -> np.ndarray:
    r = np.tile(np.eye(n), (len(theta), 1, 1))
    r[:, 0, 0] = np.cos(theta)
    r[:, 0, 1] = -np.sin(theta)
    r[:, 1, 0] = np.sin(theta)
    r[:, 1, 1] = np.cos(theta)
    return r


def _distance(grid: Grid, spec: dict) -> np.ndarray:
    x0 = np.asarray(spec.get("x0", [0.0] * grid.d), dtype=float)
    if x0.size != grid.d:
        raise InputError("x0 维数与网格不符")
    return np.linalg.norm(grid.centers - x0, axis=1)


def make_weight(spec: dict, grid: Grid) -> MatrixWeightField:
    """
    由 JSON 描述生成测试权

    Args:
        spec: kind ∈ {identity, constant, cells, scalar_power, diagonal, rotating, random},
            可选 scale 乘子
        grid: 离散网格

    Returns:
        MatrixWeightField: 已检验 SPD 并缓存逆的权场

    Raises:
        InputError: 未知类型, 或某格最小特征值 < ε_pd
    """
    kind = spec.get("kind")
    n_cells = grid.n_cells
    name = spec.get("name", kind or "weight")
    if kind == "identity":
        n = int(spec.get("n", 1))
        values = np.tile(np.eye(n), (n_cells, 1, 1))
    elif kind == "constant":
        matrix = np.atleast_2d(np.asarray(spec["matrix"], dtype=float))
        values = np.tile(matrix, (n_cells, 1, 1))
    elif kind == "cells":
        values = np.asarray(spec["values"], dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
    elif kind == "scalar_power":
        n = int(spec.get("n", 1))
        scalar = _distance(grid, spec) ** float(spec["alpha"])
        values = scalar[:, None, None] * np.eye(n)
    elif kind == "diagonal":
        alphas = np.asarray(spec["alphas"], dtype=float)
        dist = _distance(grid, spec)
        values = np.zeros((n_cells, len(alphas), len(alphas)))
        idx = np.arange(len(alphas))
        values[:, idx, idx] = dist[:, None] ** alphas[None, :]
    elif kind == "rotating":
        alphas = np.asarray(spec.get("alphas", [1.0, -1.0]), dtype=float)
        n = len(alphas)
        if n < 2:
            raise InputError("rotating 权至少需要 n = 2")
        dist = _distance(grid, spec)
        diag = np.zeros((n_cells, n, n))
        diag[:, np.arange(n), np.arange(n)] = dist[:, None] ** alphas[None, :]
        theta = 2 * np.pi * float(spec.get("frequency", 1.0)) * grid.centers[:, 0]
        r = _rotation(theta, n)
        values = r @ diag @ r.transpose(0, 2, 1)
    elif kind == "random":
        n = int(spec.get("n", 2))
        lipschitz = float(spec.get("lipschitz", 1.0))
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        base = rng.standard_normal((n, n))
        slopes = rng.standard_normal((grid.d, n, n))
        slopes = (slopes + slopes.transpose(0, 2, 1)) / 2
        slopes /= np.linalg.norm(slopes, ord=2, axis=(1, 2))[:, None, None] * grid.d
        x = (grid.centers - np.array([float(c) for c in grid.box.corner])) / float(grid.box.side)
        # log W 关于 x 是 lipschitz-Lipschitz 的
        logs = (base + base.T) / 4 + lipschitz * np.einsum("ci,ijk->cjk", x, slopes)
        values = _spd_function(logs, np.exp)
    else:
        raise InputError(f"未知的权类型: {kind!r}")
    values = float(spec.get("scale", 1.0)) * values
    weight = MatrixWeightField(grid, values, name)
    weight.inverse()
    return weight


def tensor_weight(fields: Sequence[MatrixWeightField]) -> MatrixWeightField:
    """𝐖 = ⊗W_j, 逐格 Kronecker 积"""
    if not fields:
        raise InputError("至少需要一个权")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise InputError("张量权要求公共网格")
    values = fields[0].values
    for f in fields[1:]:
        values = batched_kron(values, f.values)
    return MatrixWeightField(grid, values, "⊗".join(f.name for f in fields))


def average_norms(weight: MatrixWeightField, cube: Cube, p, vectors: np.ndarray) -> np.ndarray:
    """
    q(u) = (avg_Q ‖W(x)u‖^p)^{1/p}, p = inf 时取格子上的最大值

    Args:
        vectors: (k, n)

    Returns:
        np.ndarray: (k,)
    """
    matrices = weight.on_cube(cube)
    images = np.einsum("cij,kj->cki", matrices, np.atleast_2d(vectors))
    return power_mean(np.linalg.norm(images, axis=2), reciprocal(p), axis=0)


def quasi_constant_recip(recip) -> float:
    """K_p = 2^{(1/p - 1)_+}, 以 1/p 给出"""
    return float(2.0 ** max(float(recip) - 1.0, 0.0))


def quasi_constant(p) -> float:
    return quasi_constant_recip(reciprocal(p))


@dataclass
class ReducingOperator:
    """
    约化算子 A: K_p^{-n}(1-τ')q(u) <= ‖Au‖ <= √n(1+τ')q(u)
    """

    A: np.ndarray
    weight_id: int
    cube: Cube
    recip_p: Fraction
    tolerance: float
    slack: float
    lower_ratio: float
    upper_ratio: float
    null_directions: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.null_directions.shape[1] > 0

    def sandwich(self) -> Tuple[float, float]:
        """(下常数, 上常数) 已含 τ'"""
        k = quasi_constant_recip(self.recip_p)
        return k ** (-self.n) * (1 - self.slack), np.sqrt(self.n) * (1 + self.slack)


_CACHE: Dict[tuple, ReducingOperator] = {}
_CACHE_LOCK = threading.Lock()


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def reducing_operator(weight: MatrixWeightField, cube: Cube, p, tol: float = MVEE_TOLERANCE,
                      count: Optional[int] = None, use_cache: bool = True) -> ReducingOperator:
    """
    构造 q(u) = (avg_Q ‖W u‖^p)^{1/p} 的约化算子

    Args:
        weight: 矩阵权
        cube: 与网格对齐的立方体
        p: 指数 (0, inf]
        tol: MVEE 容差
        count: 构造网格方向数, 缺省 max(200, 40 n^2)
        use_cache: 是否使用 (权, 立方体, p) 缓存

    Returns:
        ReducingOperator: 在独立验证网格上核对过夹逼的 A
    """
    recip = reciprocal(p)
    if recip < 0:
        raise InputError(f"约化算子的指数必须为正: p={p}")
    n = weight.n
    count = count or default_count(n)
    key = (weight.weight_id, cube, recip, tol, count)
    if use_cache:
        with _CACHE_LOCK:
            cached = _CACHE.get(key)
        if cached is not None:
            return cached

    k_p = quasi_constant_recip(recip)
    if n == 1:
        value = float(average_norms(weight, cube, p, np.ones((1, 1)))[0])
        op = ReducingOperator(np.array([[value]]), weight.weight_id, cube, recip, tol, 0.0, 1.0, 1.0,
                              np.zeros((1, 0)))
    else:
        net = direction_net(n, count)
        q = average_norms(weight, cube, p, net)
        # {q <= 1} 的边界点; p < 1 时取对称凸包
        john = john_ellipsoid(SymmetricHull(net / q[:, None]), tol=tol)
        shape = john.c_in * john.A
        if john.degenerate:
            logger.warning(f"权 {weight.name} 在 {cube} 上退化, 加岭 {EPS_RIDGE}")
            shape = shape + EPS_RIDGE * np.eye(n)
        a = np.linalg.inv(shape)
        a = (a + a.T) / 2
        verify = direction_net(n, count, seed=VERIFY_SEED_OFFSET)
        ratios = np.linalg.norm(verify @ a, axis=1) / average_norms(weight, cube, p, verify)
        lower, upper = float(ratios.min()), float(ratios.max())
        slack = max(0.0, upper / np.sqrt(n) - 1.0, 1.0 - lower * k_p ** n)
        op = ReducingOperator(a, weight.weight_id, cube, recip, tol, slack, lower, upper,
                              john.null_directions)
        logger.debug(f"约化算子 {weight.name} {cube} p={p}: 比值 [{lower:.6g}, {upper:.6g}], τ'={slack:.3g}")
    if use_cache:
        with _CACHE_LOCK:
            op = _CACHE.setdefault(key, op)
    return op


def matrix_reducing_norms(weight: MatrixWeightField, cube: Cube, p, matrix) -> Tuple[float, float, float, float]:
    """
    (avg_Q ‖W(x)M‖^p)^{1/p} 与 ‖A M‖ 的比较

    Returns:
        (lhs, rhs, 下常数, 上常数), 满足 下常数·rhs <= lhs <= 上常数·rhs
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = weight.n
    if m.shape[0] != n:
        raise InputError("矩阵行数与权的维数不符")
    matrices = weight.on_cube(cube)
    norms = np.linalg.norm(matrices @ m, ord=2, axis=(1, 2))
    lhs = float(power_mean(norms, reciprocal(p)))
    op = reducing_operator(weight, cube, p)
    rhs = float(np.linalg.norm(op.A @ m, 2))
    # ‖AM‖ <= Σ_k‖AMe_k‖ <= n‖AM‖ (列范数等价)
    recip = reciprocal(p)
    lower = 1.0 / (n ** 1.5 * (1 + op.slack))
    upper = n ** max(1.0, float(recip)) * quasi_constant_recip(recip) ** n / max(1e-12, 1 - op.slack)
    return lhs, rhs, lower, upper
