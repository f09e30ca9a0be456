"""
对称凸体算术: 支撑函数, John / MVEE 椭球, Carathéodory 分解, Aumann 平均
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from config import MVEE_MAX_ITER, MVEE_TOLERANCE, NULL_DIRECTION_RATIO, VERIFY_SEED_OFFSET
from harmonics.errors import InputError, OutsideHullError
from harmonics.geometry import Cube, Grid
from logger import setup_logger
from utils.directions import default_count, direction_net, with_extra

logger = setup_logger("convex")

MAX_EXACT_GENERATORS = 20000
MAX_LP_POINTS = 4000


def _as_directions(v, dim: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(v, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise InputError(f"方向维数 {arr.shape[1]} 与凸体维数 {dim} 不符")
    return arr, single


class SymmetricConvexBody:
    """关于原点对称的紧凸集, 以支撑函数为语义"""

    dim: int

    def support(self, directions: np.ndarray) -> np.ndarray:
        """h_B(v), directions: (k, n) -> (k,)"""
        raise NotImplementedError

    def support_points(self, directions: np.ndarray) -> np.ndarray:
        """B 中达到 h_B(v) 的点, (k, n) -> (k, n)"""
        raise NotImplementedError

    def generators(self) -> Tuple[np.ndarray, bool]:
        """
        有限点集 G, conv(±G) ⊆ B

        Returns:
            (G, exact) exact 为真时 conv(±G) = B
        """
        directions = direction_net(self.dim, default_count(self.dim))
        return self.support_points(directions), self.dim == 1

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ellipsoid(SymmetricConvexBody):
    """A · (闭单位球)"""

    A: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError(f"椭球矩阵必须是方阵: {a.shape}")
        object.__setattr__(self, "A", a)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def support(self, directions):
        return np.linalg.norm(directions @ self.A, axis=1)

    def support_points(self, directions):
        image = directions @ self.A
        lengths = np.linalg.norm(image, axis=1, keepdims=True)
        safe = np.where(lengths > 0, lengths, 1.0)
        return np.where(lengths > 0, (image @ self.A.T) / safe, 0.0)

    def to_json(self):
        return {"kind": "ellipsoid", "A": self.A.tolist()}


@dataclass(frozen=True, eq=False)
class SymmetricHull(SymmetricConvexBody):
    """conv(±points)"""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] == 0:
            raise InputError(f"凸包点集形状无效: {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def support(self, directions):
        if len(self.points) == 0:
            return np.zeros(len(directions))
        return np.abs(directions @ self.points.T).max(axis=1)

    def support_points(self, directions):
        if len(self.points) == 0:
            return np.zeros_like(directions)
        values = directions @ self.points.T
        best = np.abs(values).argmax(axis=1)
        signs = np.sign(values[np.arange(len(directions)), best])
        signs[signs == 0] = 1.0
        return signs[:, None] * self.points[best]

    def generators(self):
        return self.points, True

    def to_json(self):
        return {"kind": "hull", "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class Zonotope(SymmetricConvexBody):
    """线段 conv{±g_i} 的 Minkowski 和, 即向量值函数的 Aumann 平均"""

    generators_: np.ndarray

    def __post_init__(self):
        gens = np.atleast_2d(np.asarray(self.generators_, dtype=float))
        object.__setattr__(self, "generators_", gens)

    @property
    def dim(self) -> int:
        return self.generators_.shape[1]

    def support(self, directions):
        return np.abs(directions @ self.generators_.T).sum(axis=1)

    def support_points(self, directions):
        signs = np.sign(directions @ self.generators_.T)
        return signs @ self.generators_

    def generators(self):
        gens = self.generators_[np.linalg.norm(self.generators_, axis=1) > 0]
        if len(gens) == 0:
            return np.zeros((1, self.dim)), True
        if self.dim == 1:
            return np.array([[np.abs(gens).sum()]]), True
        if self.dim == 2:
            # 每段弧 (相邻法向之间) 对应一个顶点
            normals = np.arctan2(gens[:, 0], -gens[:, 1]) % np.pi
            angles = np.sort(np.concatenate([normals, normals + np.pi]))
            gaps = np.diff(np.concatenate([angles, angles[:1] + 2 * np.pi]))
            mids = angles + gaps / 2
            mids = mids[gaps > 1e-13]
            directions = np.stack([np.cos(mids), np.sin(mids)], axis=1)
            return self.support_points(directions), True
        return super().generators()

    def to_json(self):
        return {"kind": "zonotope", "generators": self.generators_.tolist()}


@dataclass(frozen=True, eq=False)
class MinkowskiSum(SymmetricConvexBody):
    bodies: Tuple[SymmetricConvexBody, ...]

    def __post_init__(self):
        bodies = tuple(self.bodies)
        if not bodies:
            raise InputError("Minkowski 和至少需要一个凸体")
        if len({b.dim for b in bodies}) != 1:
            raise InputError("Minkowski 和的各项维数不一致")
        object.__setattr__(self, "bodies", bodies)

    @property
    def dim(self) -> int:
        return self.bodies[0].dim

    def support(self, directions):
        return np.sum([b.support(directions) for b in self.bodies], axis=0)

    def support_points(self, directions):
        return np.sum([b.support_points(directions) for b in self.bodies], axis=0)

    def to_json(self):
        return {"kind": "sum", "bodies": [b.to_json() for b in self.bodies]}


@dataclass(frozen=True, eq=False)
class Scaled(SymmetricConvexBody):
    c: float
    body: SymmetricConvexBody

    def __post_init__(self):
        if not self.c >= 0:
            raise InputError(f"缩放系数必须非负: {self.c}")
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.body.dim

    def support(self, directions):
        return self.c * self.body.support(directions)

    def support_points(self, directions):
        return self.c * self.body.support_points(directions)

    def generators(self):
        gens, exact = self.body.generators()
        return self.c * gens, exact

    def to_json(self):
        return {"kind": "scaled", "c": self.c, "body": self.body.to_json()}


@dataclass(frozen=True, eq=False)
class ConvexUnion(SymmetricConvexBody):
    """conv(∪ bodies), 支撑函数取最大"""

    bodies: Tuple[SymmetricConvexBody, ...]

    def __post_init__(self):
        bodies = tuple(self.bodies)
        if not bodies:
            raise InputError("并集至少需要一个凸体")
        if len({b.dim for b in bodies}) != 1:
            raise InputError("并集的各项维数不一致")
        object.__setattr__(self, "bodies", bodies)

    @property
    def dim(self) -> int:
        return self.bodies[0].dim

    def _values(self, directions):
        return np.stack([b.support(directions) for b in self.bodies], axis=0)

    def support(self, directions):
        return self._values(directions).max(axis=0)

    def support_points(self, directions):
        best = self._values(directions).argmax(axis=0)
        out = np.zeros_like(directions)
        for k, body in enumerate(self.bodies):
            rows = best == k
            if rows.any():
                out[rows] = body.support_points(directions[rows])
        return out

    def generators(self):
        parts = [b.generators() for b in self.bodies]
        return np.vstack([g for g, _ in parts]), all(e for _, e in parts)

    def to_json(self):
        return {"kind": "union", "bodies": [b.to_json() for b in self.bodies]}


@dataclass(frozen=True, eq=False)
class TensorProduct(SymmetricConvexBody):
    """𝒦(⊗K_j) = conv{⊗u_j : u_j ∈ K_j}, 行优先展平"""

    factors: Tuple[SymmetricConvexBody, ...]

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise InputError("张量积至少需要一个因子")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "_cache", {})

    @property
    def dim(self) -> int:
        return int(np.prod([f.dim for f in self.factors]))

    def _factor_generators(self, j: int) -> np.ndarray:
        if j not in self._cache:
            self._cache[j] = self.factors[j].generators()
        return self._cache[j][0]

    @property
    def exact(self) -> bool:
        for j in range(len(self.factors) - 1):
            self._factor_generators(j)
        return all(self._cache[j][1] for j in range(len(self.factors) - 1))

    def _evaluate(self, directions: np.ndarray, j: int):
        """从第 j 个因子起的递归: 返回 (支撑值, 达到点)"""
        if j == len(self.factors) - 1:
            body = self.factors[j]
            return body.support(directions), body.support_points(directions)
        gens = self._factor_generators(j)
        n_j = self.factors[j].dim
        rest = directions.shape[1] // n_j
        k = len(directions)
        blocks = directions.reshape(k, n_j, rest)
        contracted = np.einsum("kir,gi->kgr", blocks, gens).reshape(k * len(gens), rest)
        values, points = self._evaluate(contracted, j + 1)
        values = values.reshape(k, len(gens))
        best = values.argmax(axis=1)
        chosen = points.reshape(k, len(gens), rest)[np.arange(k), best]
        full = np.einsum("ki,kr->kir", gens[best], chosen).reshape(k, n_j * rest)
        return values[np.arange(k), best], full

    def support(self, directions):
        return self._evaluate(directions, 0)[0]

    def support_points(self, directions):
        return self._evaluate(directions, 0)[1]

    def generators(self):
        parts = [f.generators() for f in self.factors]
        count = int(np.prod([len(g) for g, _ in parts]))
        if count > MAX_EXACT_GENERATORS:
            return super().generators()[0], False
        gens = parts[0][0]
        for g, _ in parts[1:]:
            gens = np.einsum("ai,bj->abij", gens, g).reshape(len(gens) * len(g), -1)
        return gens, all(e for _, e in parts)

    def to_json(self):
        return {"kind": "tensor", "factors": [f.to_json() for f in self.factors]}


def body_from_json(data: dict) -> SymmetricConvexBody:
    """按 kind 字段解析凸体"""
    kind = data.get("kind")
    if kind == "ellipsoid":
        return Ellipsoid(np.array(data["A"], dtype=float))
    if kind == "hull":
        return SymmetricHull(np.array(data["points"], dtype=float))
    if kind == "zonotope":
        return Zonotope(np.array(data["generators"], dtype=float))
    if kind == "sum":
        return MinkowskiSum(tuple(body_from_json(b) for b in data["bodies"]))
    if kind == "scaled":
        return Scaled(float(data["c"]), body_from_json(data["body"]))
    if kind == "union":
        return ConvexUnion(tuple(body_from_json(b) for b in data["bodies"]))
    if kind == "tensor":
        return TensorProduct(tuple(body_from_json(b) for b in data["factors"]))
    raise InputError(f"未知的凸体类型: {kind!r}")


def segment(vector) -> SymmetricHull:
    """𝒦(f) = conv{±f}"""
    return SymmetricHull(np.asarray(vector, dtype=float)[None, :])


def ball(n: int, radius: float = 1.0) -> Ellipsoid:
    return Ellipsoid(radius * np.eye(n))


def support(body: SymmetricConvexBody, v) -> np.ndarray:
    """
    支撑函数 h_B(v)

    Args:
        body: 凸体
        v: (n,) 或 (k, n)

    Returns:
        标量或 (k,) 数组
    """
    directions, single = _as_directions(v, body.dim)
    values = body.support(directions)
    return float(values[0]) if single else values


def support_point(body: SymmetricConvexBody, v) -> np.ndarray:
    directions, single = _as_directions(v, body.dim)
    points = body.support_points(directions)
    return points[0] if single else points


def _ascent(body: SymmetricConvexBody, start: np.ndarray, transform: Optional[np.ndarray] = None,
            steps: int = 50) -> float:
    """
    固定点上升 u <- argmax_{B} <M^T M u, ·>, ‖Mu‖ 单调不减, 返回达到的最大值
    """
    m = transform if transform is not None else np.eye(body.dim)
    gram = m.T @ m
    points = body.support_points(start)
    best = np.linalg.norm(points @ m.T, axis=1)
    for _ in range(steps):
        pulled = points @ gram
        lengths = np.linalg.norm(pulled, axis=1, keepdims=True)
        if not np.any(lengths > 0):
            break
        pulled = np.where(lengths > 0, pulled / np.where(lengths > 0, lengths, 1.0), start)
        points = body.support_points(pulled)
        values = np.linalg.norm(points @ m.T, axis=1)
        if np.all(values <= best * (1 + 1e-15)):
            break
        best = np.maximum(best, values)
    return float(best.max()) if best.size else 0.0


def image_norm(body: SymmetricConvexBody, matrix: np.ndarray) -> float:
    """sup_{u∈B} ‖M u‖"""
    m = np.asarray(matrix, dtype=float)
    if isinstance(body, Ellipsoid):
        return float(np.linalg.norm(m @ body.A, 2))
    if isinstance(body, Scaled):
        return body.c * image_norm(body.body, m)
    if isinstance(body, ConvexUnion):
        return max(image_norm(b, m) for b in body.bodies)
    if isinstance(body, (SymmetricHull, Zonotope, TensorProduct)):
        gens, exact = body.generators()
        if exact:
            return float(np.linalg.norm(gens @ m.T, axis=1).max())
    net = direction_net(body.dim, default_count(body.dim))
    values = body.support(net @ m)
    top = np.argsort(values)[-8:]
    return max(float(values.max()), _ascent(body, net[top] @ m, m))


def body_norm_sampled(body: SymmetricConvexBody, count: Optional[int] = None) -> Tuple[float, int]:
    """
    ‖B‖ = sup_{u∈B}‖u‖ 的方向采样下界 (采样后再做单调上升)

    Returns:
        (数值, 使用的方向数)
    """
    count = count or default_count(body.dim)
    net = direction_net(body.dim, count)
    values = body.support(net)
    top = np.argsort(values)[-8:]
    return max(float(values.max()), _ascent(body, net[top])), count


def body_norm(body: SymmetricConvexBody) -> float:
    """sup_{u∈B}‖u‖; 椭球, 凸包, 缩放, 并集精确, 其余为采样下界"""
    if isinstance(body, Ellipsoid):
        return float(np.linalg.norm(body.A, 2))
    if isinstance(body, SymmetricHull):
        return float(np.linalg.norm(body.points, axis=1).max()) if len(body.points) else 0.0
    if isinstance(body, Scaled):
        return body.c * body_norm(body.body)
    if isinstance(body, ConvexUnion):
        return max(body_norm(b) for b in body.bodies)
    if isinstance(body, (Zonotope, TensorProduct)):
        gens, exact = body.generators()
        if exact:
            return float(np.linalg.norm(gens, axis=1).max())
    value, count = body_norm_sampled(body)
    logger.debug(f"凸体范数由 {count} 个方向采样得到: {value:.6g}")
    return value


def _hull_gauge(points: np.ndarray, v: np.ndarray) -> float:
    """conv(±points) 的 Minkowski 规范 γ(v), 不在张成空间内时为 inf"""
    k, n = points.shape
    a_eq = np.hstack([points.T, -points.T])
    result = linprog(np.ones(2 * k), A_eq=a_eq, b_eq=v, bounds=(0, None), method="highs")
    if result.status != 0:
        return np.inf
    return float(result.fun)


def _exact_points(body: SymmetricConvexBody) -> Optional[np.ndarray]:
    if isinstance(body, Ellipsoid):
        return None
    if isinstance(body, Scaled):
        inner = _exact_points(body.body)
        return None if inner is None else body.c * inner
    if isinstance(body, MinkowskiSum):
        return None
    gens, exact = body.generators()
    return gens if exact and len(gens) <= MAX_LP_POINTS else None


def radial(body: SymmetricConvexBody, v) -> float:
    """
    径向函数 ρ_B(v) = sup{r >= 0 : r v ∈ B}

    椭球与有限生成元的凸体精确, 其余由支撑函数网格给出上界
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size != body.dim:
        raise InputError("方向维数不符")
    if not np.any(v):
        return np.inf
    if isinstance(body, Ellipsoid):
        coeffs, *_ = np.linalg.lstsq(body.A, v, rcond=None)
        if np.linalg.norm(body.A @ coeffs - v) > 1e-10 * np.linalg.norm(v):
            return 0.0
        norm = np.linalg.norm(coeffs)
        return np.inf if norm == 0 else 1.0 / norm
    if isinstance(body, Scaled):
        return body.c * radial(body.body, v)
    points = _exact_points(body)
    if points is not None:
        gauge = _hull_gauge(points, v)
        return 0.0 if not np.isfinite(gauge) else (np.inf if gauge == 0 else 1.0 / gauge)
    net = with_extra(direction_net(body.dim, default_count(body.dim)), v)
    net = np.vstack([net, -net])
    inner = net @ v
    usable = inner > 1e-12
    return float((body.support(net[usable]) / inner[usable]).min())


def contains(body: SymmetricConvexBody, u, tol: float = 0.0) -> bool:
    """
    u ∈ B 的检验

    椭球用 ‖A⁻¹u‖ <= 1 精确判定; 其余在确定性方向网格及 u 自身方向上检验
    <u, v> <= h_B(v)(1 + tol)
    """
    if tol < 0:
        raise InputError(f"容差必须非负: {tol}")
    u = np.asarray(u, dtype=float).ravel()
    if u.size != body.dim:
        raise InputError("向量维数与凸体不符")
    if not np.any(u):
        return True
    if isinstance(body, Ellipsoid):
        coeffs, *_ = np.linalg.lstsq(body.A, u, rcond=None)
        if np.linalg.norm(body.A @ coeffs - u) > 1e-10 * np.linalg.norm(u):
            return False
        return bool(np.linalg.norm(coeffs) <= 1 + tol + 1e-12)
    net = with_extra(direction_net(body.dim, default_count(body.dim)), u)
    net = np.vstack([net, -net])
    slack = 1e-12 * (1 + np.linalg.norm(u))
    return bool(np.all(net @ u <= body.support(net) * (1 + tol) + slack))


def mvee(points: np.ndarray, tol: float = MVEE_TOLERANCE, limits: int = MVEE_MAX_ITER):
    """
    Finds the minimum volume enclosing ellipsoid of a centrally symmetric set
    ±points (Khachiyan barycentric ascent with away steps and rank-one updates).

    Args:
        points: (N, d) 点集, 对称性隐含 (只需一半)
        tol: 收敛容差, max_i M_i <= d(1 + tol)
        limits: 迭代上限

    Returns:
        (H, u, iterations, converged): 椭球 {x : x^T H^{-1} x <= 1}, 设计权重
    """
    P = np.asarray(points, dtype=float)
    N, d = P.shape
    if N < d:
        raise InputError("点数必须不少于维数")
    u = np.full(N, 1.0 / N)

    def refresh(weights):
        x = P.T @ (weights[:, None] * P)
        x_inv = np.linalg.inv(x)
        return x_inv, np.einsum("ij,jk,ik->i", P, x_inv, P)

    X_inv, M = refresh(u)
    converged = False
    iterations = 0
    while iterations < limits:
        j = int(np.argmax(M))
        active = np.flatnonzero(u > 0)
        i = int(active[np.argmin(M[active])])
        up = M[j] / d - 1.0
        down = 1.0 - M[i] / d
        if up <= tol:
            converged = True
            break
        if up >= down or len(active) == 1:
            k = j
            beta = up / (M[j] - 1.0)
        else:
            k = i
            floor = -u[i] / (1.0 - u[i])
            beta = floor if M[i] <= 1.0 else max(floor, -down / (M[i] - 1.0))
        c = beta / (1.0 - beta)
        g = X_inv @ P[k]
        denom = 1.0 + c * M[k]
        proj = P @ g
        X_inv = (X_inv - c * np.outer(g, g) / denom) / (1.0 - beta)
        M = (M - c * proj ** 2 / denom) / (1.0 - beta)
        u *= (1.0 - beta)
        u[k] += beta
        u[u < 1e-15] = 0.0
        iterations += 1
        if iterations % 200 == 0:
            u /= u.sum()
            X_inv, M = refresh(u)
    if not converged:
        logger.warning(f"MVEE 在 {limits} 次迭代内未收敛")
    X = P.T @ (u[:, None] * P)
    return d * X, u, iterations, converged


def spd_sqrt(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((h + h.T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


@dataclass
class JohnEllipsoid:
    """c_in·A·B̄ ⊆ B ⊆ c_out·A·B̄, A 对称半正定"""

    A: np.ndarray
    c_in: float
    c_out: float
    null_directions: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def ratio(self) -> float:
        return self.c_out / self.c_in if self.c_in > 0 else np.inf

    @property
    def degenerate(self) -> bool:
        return self.null_directions.shape[1] > 0


def _symmetric_facets(points: np.ndarray):
    """conv(±points) 的面 (法向, 偏移); 失败时返回 None"""
    try:
        hull = ConvexHull(np.vstack([points, -points]))
    except (QhullError, ValueError):
        return None
    normals = hull.equations[:, :-1]
    offsets = -hull.equations[:, -1]
    return normals, offsets


def _prune(points: np.ndarray) -> np.ndarray:
    """只保留 conv(±points) 的顶点 (每对取一个)"""
    if points.shape[1] > 3 or len(points) <= points.shape[1] + 1:
        return points
    try:
        hull = ConvexHull(np.vstack([points, -points]))
    except (QhullError, ValueError):
        return points
    keep = np.unique(hull.vertices % len(points))
    return points[keep]


def john_ellipsoid(body: SymmetricConvexBody, tol: float = MVEE_TOLERANCE,
                   limits: int = MVEE_MAX_ITER, count: Optional[int] = None) -> JohnEllipsoid:
    """
    由 MVEE 得到 John 椭球证书

    Args:
        body: 对称凸体
        tol: Khachiyan 容差
        limits: 迭代上限
        count: 非凸包凸体的边界采样方向数, 缺省 max(200, 40 n^2)

    Returns:
        JohnEllipsoid: A 为 (近似) 最小外接椭球, c_out 经精确缩放, c_in 为认证的内切因子
    """
    n = body.dim
    if isinstance(body, Ellipsoid):
        shape = spd_sqrt(body.A @ body.A.T)
        return JohnEllipsoid(shape, 1.0, 1.0, _null_space(shape))
    points, exact = body.generators()
    if not exact:
        points = body.support_points(direction_net(n, count or default_count(n)))
    points = points[np.linalg.norm(points, axis=1) > 0]
    if len(points) == 0:
        logger.warning("凸体退化为 {0}")
        return JohnEllipsoid(np.zeros((n, n)), 1.0, 1.0, np.eye(n))

    _, s, vt = np.linalg.svd(points, full_matrices=True)
    rank = int(np.sum(s > NULL_DIRECTION_RATIO * s[0]))
    basis = vt[:rank].T
    null = vt[rank:].T
    if rank < n:
        logger.warning(f"凸体退化: 秩 {rank} < {n}, 已标记零方向")
    y = points @ basis

    if rank == 1:
        radius = float(np.abs(y).max())
        a_r = np.array([[radius]])
        c_in = c_out = 1.0
        iterations, converged = 0, True
    else:
        pruned = _prune(y)
        h, _, iterations, converged = mvee(pruned, tol, limits)
        a_r = spd_sqrt(h)
        a_inv = np.linalg.inv(a_r)
        c_out = float(np.linalg.norm(y @ a_inv.T, axis=1).max())
        facets = _symmetric_facets(y) if rank <= 3 else None
        if facets is not None:
            normals, offsets = facets
            c_in = float((offsets / np.linalg.norm(normals @ a_r, axis=1)).min())
        else:
            net = direction_net(rank, default_count(rank))
            c_in = float((np.abs(net @ y.T).max(axis=1) / np.linalg.norm(net @ a_r, axis=1)).min())
    if not exact and rank == n:
        verify = direction_net(n, count or default_count(n), seed=VERIFY_SEED_OFFSET)
        a_full = basis @ a_r @ basis.T
        c_out = max(c_out, float((body.support(verify) / np.linalg.norm(verify @ a_full, axis=1)).max()))
    a = basis @ a_r @ basis.T
    logger.debug(f"John 椭球: n={n}, 秩={rank}, 迭代={iterations}, c_in={c_in:.6g}, c_out={c_out:.6g}")
    return JohnEllipsoid(a, c_in, c_out, null, iterations, converged)


def _null_space(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    scale = max(float(np.abs(w).max()), 0.0)
    return v[:, w <= NULL_DIRECTION_RATIO * scale] if scale > 0 else v


def john_basis(body: SymmetricConvexBody) -> np.ndarray:
    """John 椭球主轴组成的正交基, 列向量"""
    john = john_ellipsoid(body)
    _, v = np.linalg.eigh(john.A)
    return v


def caratheodory_decompose(points, target, tol: float = 1e-10) -> List[Tuple[float, np.ndarray]]:
    """
    把凸包中的点写成至多 n+1 个生成点的凸组合

    Args:
        points: (k, n) 生成点
        target: (n,) 目标点
        tol: 重构误差上限

    Returns:
        [(θ_k, u_k)], θ_k >= 0, Σθ_k = 1

    Raises:
        OutsideHullError: 目标不在凸包内, 附带分离方向
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    target = np.asarray(target, dtype=float).ravel()
    k, n = pts.shape
    if target.size != n:
        raise InputError("目标点维数不符")
    a_eq = np.vstack([pts.T, np.ones((1, k))])
    b_eq = np.concatenate([target, [1.0]])
    result = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if result.status != 0:
        # max <v, target> - s, s.t. <v, p_i> <= s, |v_i| <= 1
        c = np.concatenate([-target, [1.0]])
        a_ub = np.hstack([pts, -np.ones((k, 1))])
        bounds = [(-1, 1)] * n + [(None, None)]
        sep = linprog(c, A_ub=a_ub, b_ub=np.zeros(k), bounds=bounds, method="highs")
        direction = sep.x[:n] if sep.status == 0 else None
        raise OutsideHullError("目标点不在凸包内", direction)

    theta = np.clip(result.x, 0, None)
    active = list(np.flatnonzero(theta > 1e-14))
    while len(active) > n + 1:
        system = a_eq[:, active]
        _, _, vt = np.linalg.svd(system)
        lam = vt[-1]
        if lam.max() <= 0:
            lam = -lam
        ratios = np.where(lam > 1e-15, theta[active] / np.where(lam > 1e-15, lam, 1.0), np.inf)
        step = ratios.min()
        theta[active] = theta[active] - step * lam
        theta[active[int(np.argmin(ratios))]] = 0.0
        theta = np.clip(theta, 0, None)
        active = [a for a in active if theta[a] > 1e-14]

    # 在支撑集上做最小二乘精修
    polished, *_ = np.linalg.lstsq(a_eq[:, active], b_eq, rcond=None)
    if np.all(polished >= 0):
        theta[active] = polished
    error = np.linalg.norm(pts[active].T @ theta[active] - target)
    if error > tol:
        logger.warning(f"Carathéodory 重构误差 {error:.3e} 超过 {tol:.1e}")
    return [(float(theta[a]), pts[a].copy()) for a in active]


@dataclass
class BodyField:
    """分片常值的凸体值函数, 每个格子一个凸体"""

    grid: Grid
    bodies: List[SymmetricConvexBody]

    def __post_init__(self):
        if len(self.bodies) != self.grid.n_cells:
            raise InputError(f"凸体个数 {len(self.bodies)} 与格子数 {self.grid.n_cells} 不符")

    @property
    def dim(self) -> int:
        return self.bodies[0].dim

    @classmethod
    def constant(cls, grid: Grid, body: SymmetricConvexBody) -> "BodyField":
        return cls(grid, [body] * grid.n_cells)

    @classmethod
    def from_vectors(cls, grid: Grid, values: np.ndarray) -> "BodyField":
        """𝒦(f): 每格 conv{±f(x)}"""
        values = np.asarray(values, dtype=float)
        return cls(grid, [segment(v) for v in values.reshape(grid.n_cells, -1)])

    def support_table(self, directions: np.ndarray) -> np.ndarray:
        """(格子数, 方向数) 支撑函数表, 相同凸体只计算一次"""
        table = np.zeros((self.grid.n_cells, len(directions)))
        seen = {}
        for c, body in enumerate(self.bodies):
            key = id(body)
            if key not in seen:
                seen[key] = body.support(directions)
            table[c] = seen[key]
        return table


def aumann_average(field: BodyField, cube: Cube) -> SymmetricConvexBody:
    """
    ⟨F⟩_Q: 分片常值凸体函数在 Q 上的 Minkowski 平均

    Raises:
        InputError: Q 未与网格对齐
    """
    cells = field.grid.cells_in(cube)
    weights = {}
    bodies = {}
    for c in cells:
        body = field.bodies[c]
        key = id(body)
        bodies[key] = body
        weights[key] = weights.get(key, 0) + 1
    if len(bodies) == 1:
        return next(iter(bodies.values()))
    total = len(cells)
    hulls = [b for b in bodies.values() if isinstance(b, SymmetricHull) and len(b.points) == 1]
    if len(hulls) == len(bodies):
        gens = np.vstack([weights[id(b)] / total * b.points for b in hulls])
        return Zonotope(gens)
    return MinkowskiSum(tuple(Scaled(weights[k] / total, bodies[k]) for k in bodies))


def aumann_average_vectors(grid: Grid, values: np.ndarray, cube: Cube) -> Zonotope:
    """⟨𝒦(f)⟩_Q, 向量值 f 的 Aumann 平均 (带状多面体)"""
    values = np.asarray(values, dtype=float).reshape(grid.n_cells, -1)
    cells = grid.cells_in(cube)
    return Zonotope(values[cells] / len(cells))
