"""
极大算子: 数量, 多线性, 矩阵加权, 辅助, 凸体极大算子; 弱范数; M^𝒦 的稀疏控制
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from harmonics.convex import (
    BodyField,
    ConvexUnion,
    SymmetricConvexBody,
    SymmetricHull,
    TensorProduct,
    aumann_average,
    image_norm,
    john_basis,
    radial,
)
from harmonics.errors import InputError, InvariantViolation
from harmonics.geometry import Cube, Grid, SparseFamily, common_dyadic_grid, is_martingale_sparse
from harmonics.muckenhoupt import ExponentConfig
from harmonics.tensor import tensor_vector
from harmonics.weights import MatrixWeightField, power_mean, reciprocal, reducing_operator, tensor_weight
from logger import setup_logger
from utils.directions import default_count, direction_net, with_extra

logger = setup_logger("maximal")


@dataclass
class VectorField:
    """分片常值向量场, values: (格子数, n)"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.n_cells:
            raise InputError(f"向量个数 {values.shape[0]} 与格子数 {self.grid.n_cells} 不符")
        if not np.all(np.isfinite(values)):
            raise InputError("向量场含有非有限值")
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def average(self, cube: Cube) -> np.ndarray:
        return self.values[self.grid.cells_in(cube)].mean(axis=0)

    def bodies(self) -> BodyField:
        return BodyField.from_vectors(self.grid, self.values)


Field = Union[VectorField, BodyField]


def _check_family(cubes: Sequence[Cube]):
    if not cubes:
        raise InputError("立方体族不能为空")


def _sup_over_cubes(grid: Grid, cubes: Sequence[Cube], per_cube) -> np.ndarray:
    """per_cube(Q, cells) 返回 Q 内每个格子的值; 结果是含 x 的立方体上的最大值"""
    _check_family(cubes)
    out = np.zeros(grid.n_cells)
    for q in cubes:
        cells = grid.cells_in(q)
        out[cells] = np.maximum(out[cells], per_cube(q, cells))
    return out


def eta_maximal(grid: Grid, f, eta: float, cubes: Sequence[Cube]) -> np.ndarray:
    """M_η f(x) = max_{Q∋x} ⟨|f|^η⟩_Q^{1/η}"""
    if not eta > 0:
        raise InputError(f"η 必须为正: {eta}")
    values = np.abs(np.asarray(f, dtype=float))
    recip = 1.0 / eta
    return _sup_over_cubes(grid, cubes, lambda q, cells: power_mean(values[cells], recip))


def multilinear_maximal(grid: Grid, fs: Sequence, cubes: Sequence[Cube]) -> np.ndarray:
    """M(f⃗)(x) = max_{Q∋x} Π_j ⟨|f_j|⟩_Q"""
    values = [np.abs(np.asarray(f, dtype=float)) for f in fs]
    if any(v.shape != (grid.n_cells,) for v in values):
        raise InputError("多线性极大函数要求公共网格")
    return _sup_over_cubes(grid, cubes,
                           lambda q, cells: float(np.prod([v[cells].mean() for v in values])))


def _weighted_norm_table(field: Field, weight: MatrixWeightField, cells: np.ndarray) -> np.ndarray:
    """(x, y) -> ‖W(x) F(y)‖, x, y ∈ cells"""
    w = weight.values[cells]
    if isinstance(field, VectorField):
        images = np.einsum("xab,yb->xya", w, field.values[cells])
        return np.linalg.norm(images, axis=2)
    table = np.zeros((len(cells), len(cells)))
    cache: Dict[Tuple[int, int], float] = {}
    for a, x in enumerate(cells):
        for b, y in enumerate(cells):
            body = field.bodies[y]
            key = (x, id(body))
            if key not in cache:
                cache[key] = image_norm(body, weight.values[x])
            table[a, b] = cache[key]
    return table


def _check_fields(fields: Sequence[Field], weights: Sequence[MatrixWeightField], r: Sequence):
    if len(fields) != len(weights) or len(fields) != len(r):
        raise InputError("F⃗, W⃗, r⃗ 的长度必须相同")
    grid = fields[0].grid
    for f, w in zip(fields, weights):
        if f.grid != grid or w.grid != grid:
            raise InputError("网格不一致")
        dim = f.n if isinstance(f, VectorField) else f.dim
        if dim != w.n:
            raise InputError("函数维数与权维数不符")
    for v in r:
        if not 0 < float(v) < np.inf:
            raise InputError(f"r_j 必须在 (0, inf) 内: {v}")
    return grid


def weighted_maximal(fields: Sequence[Field], weights: Sequence[MatrixWeightField], r: Sequence,
                     cubes: Sequence[Cube]) -> np.ndarray:
    """M_{W⃗,r⃗}F⃗(x) = sup_{Q∋x} Π_j ⟨‖W_j(x)F_j‖^{r_j}⟩_Q^{1/r_j}"""
    grid = _check_fields(fields, weights, r)

    def per_cube(q, cells):
        value = np.ones(len(cells))
        for f, w, rj in zip(fields, weights, r):
            value *= power_mean(_weighted_norm_table(f, w, cells), 1.0 / float(rj), axis=1)
        return value

    return _sup_over_cubes(grid, cubes, per_cube)


def auxiliary_maximal(fields: Sequence[Field], weights: Sequence[MatrixWeightField], r: Sequence,
                      t: Sequence, cubes: Sequence[Cube]) -> np.ndarray:
    """
    Goldberg 辅助极大算子 sup_{Q∋x} Π_j ⟨‖A_{W_j^{-1},Q,t_j}^{-1} F_j‖^{r_j}⟩_Q^{1/r_j}
    """
    grid = _check_fields(fields, weights, r)

    def per_cube(q, cells):
        value = 1.0
        for f, w, rj, tj in zip(fields, weights, r, t):
            a_inv = np.linalg.inv(reducing_operator(w.inverse(), q, tj).A)
            if isinstance(f, VectorField):
                norms = np.linalg.norm(f.values[cells] @ a_inv.T, axis=1)
            else:
                norms = np.array([image_norm(f.bodies[c], a_inv) for c in cells])
            value *= float(power_mean(norms, 1.0 / float(rj)))
        return value

    return _sup_over_cubes(grid, cubes, per_cube)


def _as_bodies(field: Field) -> BodyField:
    return field.bodies() if isinstance(field, VectorField) else field


def cube_generator(fields: Sequence[Field], cube: Cube) -> SymmetricConvexBody:
    """𝒦(⊗_j ⟨F_j⟩_Q)"""
    averages = [aumann_average(_as_bodies(f), cube) for f in fields]
    return averages[0] if len(averages) == 1 else TensorProduct(tuple(averages))


def convex_body_maximal(fields: Sequence[Field], cubes: Sequence[Cube]) -> BodyField:
    """
    M^𝒦 F⃗(x) = 𝒦(∪_{Q∋x} ⊗_j ⟨F_j⟩_Q), 生成元按需凸化

    Returns:
        BodyField: 不属于任何立方体的格子上为 {0}
    """
    _check_family(cubes)
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise InputError("网格不一致")
    generators = [cube_generator(fields, q) for q in cubes]
    owners: List[List[int]] = [[] for _ in range(grid.n_cells)]
    for k, q in enumerate(cubes):
        for c in grid.cells_in(q):
            owners[c].append(k)
    dim = generators[0].dim
    zero = SymmetricHull(np.zeros((1, dim)))
    shared: Dict[Tuple[int, ...], SymmetricConvexBody] = {}
    bodies = []
    for members in owners:
        key = tuple(members)
        if key not in shared:
            if not members:
                shared[key] = zero
            elif len(members) == 1:
                shared[key] = generators[members[0]]
            else:
                shared[key] = ConvexUnion(tuple(generators[k] for k in members))
        bodies.append(shared[key])
    return BodyField(grid, bodies)


def weak_norm(field: BodyField, weight: MatrixWeightField, p, count: Optional[int] = None,
              extra: Optional[np.ndarray] = None) -> float:
    """
    sup_u ‖1_{x: u∈F(x)} u‖_{L^p_W}, 沿方向网格逐方向精确求值

    Args:
        field: 凸体值函数
        weight: 矩阵权
        p: (0, inf]
        count: 方向数, 缺省 max(200, 40 n^2)
        extra: 额外的方向 (例如已知的候选向量)
    """
    recip = reciprocal(p)
    if recip < 0:
        raise InputError(f"p 必须在 (0, inf] 内: {p}")
    n = field.dim
    net = direction_net(n, count or default_count(n))
    if extra is not None:
        net = with_extra(net, extra)
    vol = field.grid.cell_volume
    norms = np.stack([np.linalg.norm(weight.values @ v, axis=1) for v in net], axis=1)
    best = 0.0
    radii: Dict[Tuple[int, int], float] = {}
    for k, v in enumerate(net):
        rho = np.zeros(field.grid.n_cells)
        for c, body in enumerate(field.bodies):
            key = (id(body), k)
            if key not in radii:
                radii[key] = radial(body, v)
            rho[c] = radii[key]
        rho = np.where(np.isfinite(rho), rho, 0.0)
        if recip == 0:
            best = max(best, float((rho * norms[:, k]).max()))
            continue
        # 阈值 s 取某个 ρ_x 时达到最大
        order = np.argsort(-rho)
        mass = np.cumsum(vol * norms[order, k] ** float(1 / recip))
        candidates = rho[order] * mass ** float(recip)
        best = max(best, float(candidates.max()))
    return best


def averaging_image_norm(fields: Sequence[VectorField], weight: MatrixWeightField, p, cube: Cube) -> float:
    """‖T_Q f⃗‖_{L^p_𝐖} = ‖1_Q 𝐖 (⊗_j ⟨f_j⟩_Q)‖_{L^p}"""
    u = tensor_vector([f.average(cube) for f in fields])
    cells = weight.grid.cells_in(cube)
    norms = np.linalg.norm(weight.values[cells] @ u, axis=1)
    recip = reciprocal(p)
    vol = weight.grid.cell_volume
    if recip == 0:
        return float(norms.max())
    return float((vol * np.sum(norms ** float(1 / recip))) ** float(recip))


def weak_type_check(fields: Sequence[VectorField], weights: Sequence[MatrixWeightField], p,
                    cubes: Sequence[Cube], count: Optional[int] = None) -> Tuple[float, float]:
    """(M^𝒦(𝒦(f⃗)) 在 L^p_𝐖 中的弱范数, max_Q ‖T_Q f⃗‖_{L^p_𝐖})"""
    full = weights[0] if len(weights) == 1 else tensor_weight(weights)
    body = convex_body_maximal(fields, cubes)
    extra = np.array([tensor_vector([f.average(q) for f in fields]) for q in cubes])
    weak = weak_norm(body, full, p, count=count, extra=extra)
    strong = max(averaging_image_norm(fields, full, p, q) for q in cubes)
    return weak, strong


def auxiliary_n(weights: Sequence[MatrixWeightField], cfg: ExponentConfig, cube: Cube,
                cubes: Sequence[Cube]) -> Tuple[np.ndarray, float]:
    """
    N_{Q,𝓕}(x) = sup_{R∈𝓕, R⊆Q} Π_j ‖W_j(x) A_{W_j^{-1},R,t_j}‖ 1_R(x)

    Returns:
        (N 的格子值, (1/|Q|) ∫_Q N^p)
    """
    grid = weights[0].grid
    inside = [r for r in cubes if cube.contains_cube(r)]
    if not inside:
        raise InputError(f"{cube} 内没有族中的立方体")
    t_args = [np.inf if rt == 0 else 1 / rt for rt in cfg.recip_t]

    def per_cube(r, cells):
        value = np.ones(len(cells))
        for w, tj in zip(weights, t_args):
            a = reducing_operator(w.inverse(), r, tj).A
            value *= np.linalg.norm(w.values[cells] @ a, ord=2, axis=(1, 2))
        return value

    field = _sup_over_cubes(grid, inside, per_cube)
    local = field[grid.cells_in(cube)]
    recip = cfg.recip_p_total
    integral = float(power_mean(local, recip)) ** (float(1 / recip) if recip else 1.0)
    return field, integral


def strong_type_ratio(fields: Sequence[VectorField], weights: Sequence[MatrixWeightField], r: Sequence,
                      p: Sequence, cubes: Sequence[Cube]) -> float:
    """‖M_{W⃗,r⃗}F⃗‖_{L^p} / Π_j ‖F_j‖_{L^{p_j}_{W_j}}"""
    recip_p = [reciprocal(v) for v in p]
    total = sum(recip_p, Fraction(0))
    vol = fields[0].grid.cell_volume
    m = weighted_maximal(fields, weights, r, cubes)

    def lebesgue(values, recip):
        if recip == 0:
            return float(values.max())
        return float((vol * np.sum(values ** float(1 / recip))) ** float(recip))

    denom = 1.0
    for f, w, rp in zip(fields, weights, recip_p):
        denom *= lebesgue(np.linalg.norm(np.einsum("cab,cb->ca", w.values, f.values), axis=1), rp)
    return lebesgue(m, total) / denom if denom > 0 else np.inf


@dataclass
class MaximalDomination:
    family: SparseFamily
    factor: float
    bound: float
    sparse: bool


def _support_by_cell(grid: Grid, cubes: Sequence[Cube], bodies: Sequence[SymmetricConvexBody],
                     directions: np.ndarray) -> np.ndarray:
    table = np.zeros((grid.n_cells, len(directions)))
    for q, body in zip(cubes, bodies):
        cells = grid.cells_in(q)
        table[cells] = np.maximum(table[cells], body.support(directions)[None, :])
    return table


def maximal_sparse_dominate(fields: Sequence[Field], cubes: Sequence[Cube],
                            count: Optional[int] = None) -> MaximalDomination:
    """
    M^𝒦_𝓕 的稀疏控制: 沿各因子 John 基的停时构造, 阈值 (2n)^m

    Args:
        fields: F_1, ..., F_m (向量场或凸体场)
        cubes: 同一二进网格中的有限族 𝓕
        count: 检验所用方向数, 缺省 max(200, 40 n^2)

    Returns:
        MaximalDomination: 停时族 𝒮, 实测因子, 理论界 n^{3/2}(2n)^m

    Raises:
        InvariantViolation: 停时族不是鞅 1/2-稀疏
    """
    _check_family(cubes)
    common_dyadic_grid(list(cubes))
    grid = fields[0].grid
    family = list(dict.fromkeys(cubes))
    bodies_f = [_as_bodies(f) for f in fields]
    dims = [b.dim for b in bodies_f]
    m = len(fields)
    n = int(np.prod(dims))
    threshold = float((2 * n) ** m)

    def profile(cube: Cube, bases: List[np.ndarray]) -> np.ndarray:
        """Π_j h_{⟨F_j⟩_R}(e_{j,k_j}) 对全部多重指标"""
        values = None
        for field, basis in zip(bodies_f, bases):
            h = aumann_average(field, cube).support(basis.T)
            values = h if values is None else np.multiply.outer(values, h).ravel()
        return values

    tops = [q for q in family if not any(r != q and r.contains_cube(q) for r in family)]
    selected: List[Cube] = []
    queue = list(tops)
    while queue:
        top = queue.pop(0)
        selected.append(top)
        bases = [john_basis(aumann_average(field, top)) for field in bodies_f]
        reference = profile(top, bases)
        inside = [r for r in family if r != top and top.contains_cube(r)]
        inside.sort(key=lambda r: r.side, reverse=True)
        children: List[Cube] = []
        for r in inside:
            if any(c.contains_cube(r) for c in children):
                continue
            if np.any(profile(r, bases) > threshold * reference * (1 + 1e-12)):
                children.append(r)
        queue.extend(children)

    sparse_family = SparseFamily(selected, grid=grid)
    sparse = is_martingale_sparse(sparse_family, 0.5)
    if not sparse:
        raise InvariantViolation(f"停时族不是鞅 1/2-稀疏 (Σn_j={sum(dims)}, n={n}, |S|={len(selected)})")

    directions = direction_net(n, count or default_count(n))
    full = _support_by_cell(grid, family, [cube_generator(fields, q) for q in family], directions)
    stopped = _support_by_cell(grid, selected, [cube_generator(fields, q) for q in selected], directions)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(full > 1e-300, full / np.where(stopped > 0, stopped, np.nan), 1.0)
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    factor = float(ratios.max()) if ratios.size else 1.0
    bound = float(n ** 1.5 * threshold)
    logger.debug(f"M^K 稀疏控制: |S|={len(selected)}, 因子={factor:.6g}, 界={bound:.6g}")
    return MaximalDomination(sparse_family, factor, bound, sparse)
