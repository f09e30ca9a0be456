"""
多线性 Muckenhoupt 特征量: 导出指数, Roudenko / 约化算子 / 平均算子范数三种求值器
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from config import ORACLE_GRID, ORACLE_MAX_SWEEPS, ORACLE_STARTS, SEED
from harmonics.convex import spd_sqrt
from harmonics.errors import InputError
from harmonics.geometry import Cube, Grid
from harmonics.tensor import tensor_matrix
from harmonics.weights import (
    MatrixWeightField,
    power_mean,
    reciprocal,
    reducing_operator,
    tensor_weight,
)
from logger import setup_logger
from utils.directions import default_count, direction_net

logger = setup_logger("muckenhoupt")


def exponent(recip) -> float:
    """由倒数还原指数, 0 -> inf"""
    recip = Fraction(recip)
    return np.inf if recip == 0 else float(1 / recip)


def _as_exponent_arg(recip: Fraction):
    return np.inf if recip == 0 else 1 / recip


@dataclass(frozen=True)
class ExponentConfig:
    """(p⃗, r⃗, s) 及全部导出指数, 一律以倒数 (Fraction) 存储"""

    recip_p: Tuple[Fraction, ...]
    recip_r: Tuple[Fraction, ...]
    recip_s: Fraction

    @property
    def m(self) -> int:
        return len(self.recip_p)

    @property
    def recip_p_total(self) -> Fraction:
        return sum(self.recip_p, Fraction(0))

    @property
    def recip_r_total(self) -> Fraction:
        return sum(self.recip_r, Fraction(0))

    @property
    def recip_q(self) -> Fraction:
        return self.recip_p_total - self.recip_s

    @property
    def recip_t(self) -> Tuple[Fraction, ...]:
        return tuple(r - p for r, p in zip(self.recip_r, self.recip_p))

    @property
    def recip_t_total(self) -> Fraction:
        return sum(self.recip_t, Fraction(0))

    @property
    def recip_rho(self) -> Fraction:
        return self.recip_r_total - self.recip_s

    @property
    def recip_sigma(self) -> Tuple[Fraction, ...]:
        return tuple(r - self.recip_rho for r in self.recip_r)

    @property
    def recip_phat(self) -> Tuple[Fraction, ...]:
        return tuple(r + sig - p for r, sig, p in zip(self.recip_r, self.recip_sigma, self.recip_p))

    @property
    def recip_phat_total(self) -> Fraction:
        return self.recip_r_total + self.recip_s - self.recip_p_total

    @property
    def recip_kappa(self) -> Optional[Fraction]:
        if self.recip_rho == 0:
            return None
        return self.recip_q / self.recip_rho

    @property
    def lambdas(self) -> Optional[Tuple[float, ...]]:
        """λ_j = t_j (1/r - 1/s)"""
        if self.recip_rho == 0:
            return None
        return tuple(np.inf if t == 0 else float(self.recip_rho / t) for t in self.recip_t)

    @property
    def p(self) -> Tuple[float, ...]:
        return tuple(exponent(v) for v in self.recip_p)

    @property
    def q(self) -> float:
        return exponent(self.recip_q)

    @property
    def t(self) -> Tuple[float, ...]:
        return tuple(exponent(v) for v in self.recip_t)

    @property
    def sigma(self) -> Tuple[float, ...]:
        return tuple(exponent(v) for v in self.recip_sigma)

    @property
    def phat(self) -> Tuple[float, ...]:
        return tuple(exponent(v) for v in self.recip_phat)

    @property
    def kappa(self) -> Optional[float]:
        k = self.recip_kappa
        return None if k is None else exponent(k)

    @property
    def rho(self) -> Optional[float]:
        return None if self.recip_rho == 0 else exponent(self.recip_rho)

    def reciprocals(self) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...], Fraction]:
        return self.recip_p, self.recip_r, self.recip_s

    @classmethod
    def from_reciprocals(cls, recip_p, recip_r, recip_s) -> "ExponentConfig":
        return _validate(tuple(Fraction(v) for v in recip_p), tuple(Fraction(v) for v in recip_r),
                         Fraction(recip_s))

    def to_json(self) -> dict:
        def enc(v):
            return "inf" if v == np.inf else v
        return {
            "p": [enc(v) for v in self.p],
            "q": enc(self.q),
            "t": [enc(v) for v in self.t],
            "sigma": [enc(v) for v in self.sigma],
            "phat": [enc(v) for v in self.phat],
            "phat_total": enc(exponent(self.recip_phat_total)),
            "kappa": None if self.kappa is None else enc(self.kappa),
            "rho": None if self.rho is None else enc(self.rho),
            "lambda": None if self.lambdas is None else [enc(v) for v in self.lambdas],
        }


def _validate(recip_p, recip_r, recip_s) -> ExponentConfig:
    if not recip_p or len(recip_p) != len(recip_r):
        raise InputError("p⃗ 与 r⃗ 的长度必须相同且 >= 1")
    for j, (rp, rr) in enumerate(zip(recip_p, recip_r)):
        if rp < 0:
            raise InputError(f"p[{j}] 必须在 (0, inf] 内")
        if rr <= 0:
            raise InputError(f"r[{j}] 必须在 (0, inf) 内")
        if rp > rr:
            raise InputError(f"需要 p[{j}] >= r[{j}]")
    cfg = ExponentConfig(recip_p, recip_r, recip_s)
    if cfg.recip_q < 0:
        raise InputError("需要 1/p >= 1/s")
    return cfg


def derived_exponents(p: Sequence, r: Sequence, s) -> ExponentConfig:
    """
    由 (p⃗, r⃗, s) 计算全部导出指数

    Args:
        p: 每个因子的 p_j ∈ (0, inf], "inf" 或 float('inf') 表示无穷
        r: r_j ∈ (0, inf)
        s: 非零实数或 inf

    Raises:
        InputError: 违反 p⃗ >= r⃗, 1/p >= 1/s 等前提
    """
    try:
        recip_p = tuple(reciprocal(v) for v in p)
        recip_r = tuple(reciprocal(v) for v in r)
        recip_s = reciprocal(s)
    except (TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"无法解析指数: {str(e)}")
    return _validate(recip_p, recip_r, recip_s)


def reverse_holder_exponents(cfg: ExponentConfig) -> dict:
    """(κ, ρ, λ⃗) 摘要"""
    return {"kappa": cfg.kappa, "rho": cfg.rho, "lambda": cfg.lambdas}


def pair_norms(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """‖L(x) R(y)‖ 的 (k, k) 表"""
    if left.shape[1] == 1:
        return np.abs(left[:, 0, 0][:, None] * right[:, 0, 0][None, :])
    products = np.einsum("xij,yjk->xyik", left, right)
    return np.linalg.norm(products, ord=2, axis=(2, 3))


def double_average(left: np.ndarray, right: np.ndarray, recip_outer, recip_inner) -> float:
    """(avg_x (avg_y ‖L(x)R(y)‖^inner)^{outer/inner})^{1/outer}"""
    inner = power_mean(pair_norms(left, right), recip_inner, axis=1)
    return float(power_mean(inner, recip_outer))


def _sweep(fn: Callable, items: Sequence, workers: int = 1) -> List:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_weights(weights: Sequence[MatrixWeightField], cfg: Optional[ExponentConfig] = None):
    if not weights:
        raise InputError("至少需要一个权")
    if cfg is not None and len(weights) != cfg.m:
        raise InputError(f"权的个数 {len(weights)} 与 m={cfg.m} 不符")
    grid = weights[0].grid
    if any(w.grid != grid for w in weights):
        raise InputError("所有权必须定义在同一网格上")


def characteristic_on_cube(weights: Sequence[MatrixWeightField], cfg: ExponentConfig, cube: Cube) -> float:
    """单个立方体上的 Roudenko 型平均值"""
    _check_weights(weights, cfg)
    factors = []
    for w, rt in zip(weights, cfg.recip_t):
        vals = w.on_cube(cube)
        inv = w.inverse().on_cube(cube)
        factors.append(power_mean(pair_norms(vals, inv), rt, axis=1))
    return float(power_mean(np.prod(factors, axis=0), cfg.recip_q))


def roudenko_characteristic(weights: Sequence[MatrixWeightField], cfg: ExponentConfig,
                            cubes: Sequence[Cube], workers: int = 1) -> float:
    """
    [W⃗]_{p⃗,(r⃗,s),op} 在给定立方体族上的上确界

    Raises:
        InputError: 空立方体族
    """
    if not cubes:
        raise InputError("立方体族不能为空")
    values = _sweep(lambda q: characteristic_on_cube(weights, cfg, q), list(cubes), workers)
    return float(max(values))


@dataclass
class ReducingValue:
    value: float
    lower: float
    upper: float


def reducing_on_cube(weights: Sequence[MatrixWeightField], cfg: ExponentConfig, cube: Cube,
                     full: Optional[MatrixWeightField] = None) -> ReducingValue:
    """
    ‖A_{𝐖,Q,q} (⊗_j A_{W_j^{-1},Q,t_j})‖ 及约化算子夹逼常数的乘积

    Args:
        full: 预先构造的张量权 𝐖, 在整个 sweep 中共享以复用缓存
    """
    _check_weights(weights, cfg)
    if full is None:
        full = weights[0] if len(weights) == 1 else tensor_weight(weights)
    outer = reducing_operator(full, cube, _as_exponent_arg(cfg.recip_q))
    inner = [reducing_operator(w.inverse(), cube, _as_exponent_arg(rt)) for w, rt in zip(weights, cfg.recip_t)]
    value = float(np.linalg.norm(outer.A @ tensor_matrix(*[op.A for op in inner]), 2))
    lower, upper = 1.0, 1.0
    for op in [outer] + inner:
        lo, hi = op.sandwich()
        lower *= lo
        upper *= hi
    return ReducingValue(value, lower, upper)


def reducing_characteristic(weights: Sequence[MatrixWeightField], cfg: ExponentConfig,
                            cubes: Sequence[Cube], workers: int = 1) -> ReducingValue:
    """
    约化算子形式的特征量

    Returns:
        ReducingValue: 上确界 value; [lower, upper] 为所用约化算子夹逼常数之积
    """
    if not cubes:
        raise InputError("立方体族不能为空")
    _check_weights(weights, cfg)
    full = weights[0] if len(weights) == 1 else tensor_weight(weights)
    rows = _sweep(lambda q: reducing_on_cube(weights, cfg, q, full), list(cubes), workers)
    best = max(rows, key=lambda r: r.value)
    return ReducingValue(best.value, min(r.lower for r in rows), max(r.upper for r in rows))


def per_cube_table(weights: Sequence[MatrixWeightField], cfg: ExponentConfig, cubes: Sequence[Cube],
                   kind: str = "roudenko", workers: int = 1) -> List[Tuple[Cube, float, float]]:
    """CSV 行 (立方体, 值, 松弛)"""
    if kind == "roudenko":
        values = _sweep(lambda q: characteristic_on_cube(weights, cfg, q), list(cubes), workers)
        return [(q, v, 0.0) for q, v in zip(cubes, values)]
    if kind == "reducing":
        rows = _sweep(lambda q: reducing_on_cube(weights, cfg, q), list(cubes), workers)
        return [(q, r.value, r.upper / r.lower) for q, r in zip(cubes, rows)]
    if kind == "oracle":
        values = _sweep(lambda q: averaging_norm_oracle(weights, cfg.p, q), list(cubes), workers)
        return [(q, v, 0.0) for q, v in zip(cubes, values)]
    raise InputError(f"未知的特征量类型: {kind!r}")


# ---- 平均算子范数的暴力估计 ----

def _extremal(vals: np.ndarray, inv: np.ndarray, v: np.ndarray, recip_p: Fraction) -> np.ndarray:
    """给定对偶向量 v, 在 L^p_W 中达到 Hölder 等号的函数"""
    g = inv @ v
    norms = np.linalg.norm(g, axis=1)
    if recip_p == 1:
        f = np.zeros_like(g)
        cell = int(np.argmax(norms))
        if norms[cell] > 0:
            f[cell] = inv[cell] @ (g[cell] / norms[cell])
        return f
    conj = 1.0 / (1.0 - float(recip_p))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, norms ** (conj - 2.0), 0.0)
    return scale[:, None] * np.einsum("cij,cj->ci", inv, g)


class _OracleProblem:
    def __init__(self, weights: Sequence[MatrixWeightField], recip_p: Sequence[Fraction], cube: Cube):
        self.vals = [w.on_cube(cube) for w in weights]
        self.invs = [w.inverse().on_cube(cube) for w in weights]
        self.recip_p = list(recip_p)
        self.recip_total = sum(self.recip_p, Fraction(0))
        self.dims = [w.n for w in weights]

    def ratio(self, vs: Sequence[np.ndarray]) -> float:
        """‖T_Q f⃗‖ / Π‖f_j‖, 对实际函数精确求值"""
        numer = 1.0
        denom = 1.0
        image = None
        for vals, inv, v, rp in zip(self.vals, self.invs, vs, self.recip_p):
            f = _extremal(vals, inv, v, rp)
            mu = f.mean(axis=0)
            term = np.linalg.norm(vals @ mu, axis=1)
            image = term if image is None else image * term
            denom *= float(power_mean(np.linalg.norm(np.einsum("cij,cj->ci", vals, f), axis=1), rp))
        numer = float(power_mean(image, self.recip_total))
        return numer / denom if denom > 0 else 0.0


def _angle_vector(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def _improve_factor(problem: _OracleProblem, vs: List[np.ndarray], j: int, value: float):
    n = problem.dims[j]

    def evaluate(candidate):
        trial = list(vs)
        trial[j] = candidate
        return problem.ratio(trial)

    if n == 2:
        base = float(np.arctan2(vs[j][1], vs[j][0]))
        angles = base + np.pi * np.arange(ORACLE_GRID) / ORACLE_GRID
        scores = [evaluate(_angle_vector(a)) for a in angles]
        k = int(np.argmax(scores))
        width = np.pi / ORACLE_GRID
        refined = minimize_scalar(lambda a: -evaluate(_angle_vector(a)),
                                  bounds=(angles[k] - width, angles[k] + width),
                                  method="bounded", options={"xatol": 1e-11})
        options = [(value, vs[j]), (scores[k], _angle_vector(angles[k])),
                   (-float(refined.fun), _angle_vector(float(refined.x)))]
    else:
        net = direction_net(n, default_count(n))
        scores = [evaluate(u) for u in net]
        k = int(np.argmax(scores))
        start = net[k] if scores[k] > value else vs[j]
        refined = minimize(lambda x: -evaluate(x / max(np.linalg.norm(x), 1e-300)), start,
                           method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * n})
        polished = refined.x / max(np.linalg.norm(refined.x), 1e-300)
        options = [(value, vs[j]), (scores[k], net[k]), (-float(refined.fun), polished)]
    best_value, best = max(options, key=lambda item: item[0])
    return best_value, np.asarray(best, dtype=float)


def _search(problem: _OracleProblem, start: List[np.ndarray]) -> Tuple[float, bool]:
    vs = [np.asarray(v, dtype=float) for v in start]
    value = problem.ratio(vs)
    free = [j for j, n in enumerate(problem.dims) if n > 1]
    if not free:
        return value, True
    for _ in range(ORACLE_MAX_SWEEPS):
        before = value
        for j in free:
            value, vs[j] = _improve_factor(problem, vs, j, value)
        if value <= before * (1 + 1e-12):
            return value, True
    return value, False


@dataclass
class OracleResult:
    value: float
    converged: bool
    closed_form: bool
    starts: int


def averaging_norm_search(weights: Sequence[MatrixWeightField], p: Sequence, cube: Cube,
                          seed: int = SEED, workers: int = 1, starts: int = ORACLE_STARTS) -> OracleResult:
    """
    ‖T_Q‖ 的下界: 对偶向量参数化的极值函数族上的交替最大化

    Args:
        weights: W_1, ..., W_m
        p: p_j ∈ [1, inf]
        cube: 立方体
        seed: 多起点种子
        workers: 并行起点数
        starts: 随机起点个数 (另加坐标轴起点)
    """
    _check_weights(weights)
    recip_p = [reciprocal(v) for v in p]
    if len(recip_p) != len(weights):
        raise InputError("p⃗ 的长度与权的个数不符")
    if any(rp < 0 or rp > 1 for rp in recip_p):
        raise InputError("平均算子范数的暴力估计要求 p_j ∈ [1, inf]")
    if len(weights) == 1 and recip_p[0] == Fraction(1, 2):
        vals = weights[0].on_cube(cube)
        inv = weights[0].inverse().on_cube(cube)
        a = spd_sqrt(np.mean(vals @ vals, axis=0))
        b = spd_sqrt(np.mean(inv @ inv, axis=0))
        return OracleResult(float(np.linalg.norm(a @ b, 2)), True, True, 0)

    problem = _OracleProblem(weights, recip_p, cube)
    dims = problem.dims
    initial = []
    for k in range(max(dims)):
        initial.append([np.eye(n)[min(k, n - 1)] for n in dims])
    for s in range(starts):
        rng = np.random.default_rng(seed + s)
        vectors = []
        for n in dims:
            v = rng.standard_normal(n)
            vectors.append(v / np.linalg.norm(v))
        initial.append(vectors)
    results = _sweep(lambda start: _search(problem, start), initial, workers)
    value = max(r[0] for r in results)
    converged = all(r[1] for r in results)
    if not converged:
        logger.warning(f"平均算子范数估计在 {ORACLE_MAX_SWEEPS} 轮内未全部收敛, 返回最好值 {value:.6g}")
    logger.debug(f"平均算子范数 {cube}: {value:.9g} ({len(initial)} 个起点)")
    return OracleResult(value, converged, False, len(initial))


def averaging_norm_oracle(weights: Sequence[MatrixWeightField], p: Sequence, cube: Cube,
                          seed: int = SEED, workers: int = 1) -> float:
    """‖T_Q‖ 的认证下界; m=1, p=2 时为闭式 ‖(avg W²)^{1/2}(avg W^{-2})^{1/2}‖"""
    return averaging_norm_search(weights, p, cube, seed, workers).value


# ---- Fujii–Wilson ----

def fujii_wilson(weight, cube: Cube, grid: Optional[Grid] = None) -> float:
    """
    (1/w(Q₀)) ∫_{Q₀} M^{𝒟(Q₀)}(w 1_{Q₀})

    Args:
        weight: 数量权 (MatrixWeightField, n=1) 或与 grid 配套的一维数组
        cube: Q₀, 边长为格子边长的 2 的幂倍
        grid: weight 为数组时必须给出

    Raises:
        InputError: w 非正或 w(Q₀) = 0
    """
    if isinstance(weight, MatrixWeightField):
        grid = weight.grid
        values = weight.scalar
    else:
        if grid is None:
            raise InputError("数组形式的权需要给出网格")
        values = np.asarray(weight, dtype=float)
    cells = grid.cells_in(cube)
    d = grid.d
    width = int(round(len(cells) ** (1.0 / d)))
    depth = int(np.log2(width)) if width > 0 else 0
    if width ** d != len(cells) or (1 << depth) != width:
        raise InputError(f"{cube} 的边长不是格子边长的 2 的幂倍")
    local = values[cells].reshape((width,) * d)
    if np.any(local < 0):
        raise InputError("Fujii–Wilson 要求权非负")
    total = float(local.mean())
    if total <= 0:
        raise InputError("w(Q₀) = 0")

    # 自底向上: 各层二进平均
    levels = [local]
    for _ in range(depth):
        current = levels[-1]
        k = current.shape[0] // 2
        pooled = current.reshape(sum(((k, 2) for _ in range(d)), ())).mean(axis=tuple(range(1, 2 * d, 2)))
        levels.append(pooled)
    # 自顶向下: 取祖先平均的最大值
    maximal = levels[-1]
    for averages in reversed(levels[:-1]):
        up = maximal
        for axis in range(d):
            up = np.repeat(up, 2, axis=axis)
        maximal = np.maximum(averages, up)
    return float(maximal.mean() / total)


# ---- 特征量之间的关系 ----

def factorization_bound(weights: Sequence[MatrixWeightField], cfg: ExponentConfig,
                        cubes: Sequence[Cube], workers: int = 1) -> Tuple[float, float, dict]:
    """
    [W⃗]_{p⃗,(r⃗,s),op} <= [𝐖^{-1}]_{p̂,(r,s),op} Π_j [W_j]_{p_j,(r_j,σ_j),op}

    Returns:
        (lhs, rhs, 各因子的上确界)
    """
    _check_weights(weights, cfg)
    full = tensor_weight(weights) if len(weights) > 1 else weights[0]
    recip_w = [cfg.recip_rho - rt for rt in cfg.recip_t]

    def on_cube(cube):
        lhs = characteristic_on_cube(weights, cfg, cube)
        inverse_term = double_average(full.inverse().on_cube(cube), full.on_cube(cube),
                                      cfg.recip_t_total, cfg.recip_q)
        terms = [double_average(w.on_cube(cube), w.inverse().on_cube(cube), rw, rt)
                 for w, rw, rt in zip(weights, recip_w, cfg.recip_t)]
        return lhs, inverse_term, terms

    rows = _sweep(on_cube, list(cubes), workers)
    lhs = max(r[0] for r in rows)
    inverse_term = max(r[1] for r in rows)
    terms = [max(r[2][j] for r in rows) for j in range(cfg.m)]
    rhs = inverse_term * float(np.prod(terms))
    return lhs, rhs, {"inverse": inverse_term, "factors": terms}


def tensor_monotonicity(weights: Sequence[MatrixWeightField], cfg: ExponentConfig,
                        cubes: Sequence[Cube], workers: int = 1) -> Tuple[float, float]:
    """([𝐖]_{p,(r,s),op}, [W⃗]_{p⃗,(r⃗,s),op})"""
    _check_weights(weights, cfg)
    full = tensor_weight(weights) if len(weights) > 1 else weights[0]

    def on_cube(cube):
        return double_average(full.on_cube(cube), full.inverse().on_cube(cube), cfg.recip_q, cfg.recip_t_total)

    tensor_value = float(max(_sweep(on_cube, list(cubes), workers)))
    return tensor_value, roudenko_characteristic(weights, cfg, cubes, workers)


def symmetry_ratio(weight: MatrixWeightField, cfg: ExponentConfig,
                   cubes: Sequence[Cube], workers: int = 1) -> Tuple[float, float, float]:
    """([W]_{p,(r,s),op}, [W^{-1}]_{p̂,(r,s),op}, 比值)"""
    if cfg.m != 1:
        raise InputError("对称性比较只适用于 m = 1")
    # [W^{-1}]_{p̂}: 外层 1/t, 内层 1/q
    forward = roudenko_characteristic([weight], cfg, cubes, workers)
    backward = float(max(_sweep(lambda q: double_average(weight.inverse().on_cube(q), weight.on_cube(q),
                                                         cfg.recip_t_total, cfg.recip_q),
                                list(cubes), workers)))
    return forward, backward, forward / backward


def scalar_embedding(weights: Sequence[MatrixWeightField], p: Sequence, cube: Cube,
                     directions: Sequence[Sequence[np.ndarray]], seed: int = SEED) -> Tuple[float, float]:
    """
    (各方向组 u⃗ 下数量权 (‖W_j u_j‖)_j 的平均算子范数最大值, 矩阵权的平均算子范数)
    """
    _check_weights(weights)
    best = 0.0
    for units in directions:
        scalars = [MatrixWeightField.from_scalar(w.grid, w.project(u), f"|{w.name}u|")
                   for w, u in zip(weights, units)]
        best = max(best, averaging_norm_oracle(scalars, p, cube, seed))
    return best, averaging_norm_oracle(weights, p, cube, seed)


def scalar_reduction(weight: MatrixWeightField, cfg: ExponentConfig, cube: Cube, v) -> Tuple[float, float]:
    """
    w = ‖W v‖^ρ: (κ 指数下 T_Q 在 L^κ_w 上的范数, Q 上 Roudenko 值的 ρ 次幂)

    Raises:
        InputError: m != 1 或 1/r = 1/s (κ 无定义)
    """
    if cfg.m != 1:
        raise InputError("数量约化只适用于 m = 1")
    if cfg.recip_kappa is None:
        raise InputError("1/r = 1/s 时 κ, ρ 无定义")
    rho = float(1 / cfg.recip_rho)
    scalar = MatrixWeightField.from_scalar(weight.grid, weight.project(v) ** rho, "|Wv|^rho")
    value = averaging_norm_oracle([scalar], [_as_exponent_arg(cfg.recip_kappa)], cube)
    return value, characteristic_on_cube([weight], cfg, cube) ** rho


def bilinear_duality(weight: MatrixWeightField, cube: Cube, seed: int = SEED) -> Tuple[float, float, float]:
    """
    (‖T_Q‖_{L²_W}, L²_W x L²_{W^{-1}} -> L¹_{W⊗W^{-1}} 的双线性范数下界, ‖T_Q‖²)
    """
    linear = averaging_norm_oracle([weight], [2], cube)
    bilinear = averaging_norm_oracle([weight, weight.inverse()], [2, 2], cube, seed)
    return linear, bilinear, linear ** 2
