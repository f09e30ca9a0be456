"""
多线性 Calderón–Zygmund 算子: 核, Dini 积分, 离散作用, 大极大算子, CZ 分解, 稀疏控制, 非退化检验
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from harmonics.convex import BodyField, MinkowskiSum, SymmetricConvexBody, SymmetricHull, aumann_average_vectors, john_basis
from harmonics.errors import DivergenceError, InputError, InvariantViolation
from harmonics.geometry import Cube, Grid, SparseFamily, is_eta_sparse, is_martingale_sparse
from harmonics.maximal import VectorField, cube_generator, eta_maximal, multilinear_maximal
from harmonics.muckenhoupt import derived_exponents, roudenko_characteristic
from harmonics.weights import MatrixWeightField, reciprocal, tensor_weight
from logger import setup_logger
from utils.directions import default_count, direction_net, with_extra

logger = setup_logger("czo")

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)
DIVERGENCE_RATIO = 0.95


def dini(omega: Callable[[np.ndarray], np.ndarray], level: int = 20) -> float:
    """
    ∫₀¹ ω(t) dt/t = ∫₀^∞ ω(e^{-s}) ds, 在 s 的二进块 [0,1], [1,2], [2,4], ... 上做 16 点 Gauss-Legendre

    Args:
        omega: 连续模
        level: 块数, 覆盖 s ∈ [0, 2^level]

    Raises:
        DivergenceError: 相邻块的贡献不衰减
    """
    edges = np.concatenate([[0.0], 2.0 ** np.arange(level + 1)])

    def block(a, b, pieces=1):
        total = 0.0
        cuts = np.linspace(a, b, pieces + 1)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            s = (hi - lo) / 2 * GAUSS_NODES + (hi + lo) / 2
            total += (hi - lo) / 2 * float(np.dot(GAUSS_WEIGHTS, omega(np.exp(-s))))
        return total

    blocks = np.array([block(a, b) for a, b in zip(edges[:-1], edges[1:])])
    value = float(blocks.sum())
    # Richardson 检查: 每块对分后重算
    refined = float(sum(block(a, b, 2) for a, b in zip(edges[:-1], edges[1:])))
    if abs(refined - value) > 1e-8 * max(1.0, abs(value)):
        logger.warning(f"Dini 积分的求积误差偏大: {value:.10g} vs {refined:.10g}")
    last, previous = abs(blocks[-1]), abs(blocks[-2])
    if last <= 1e-15 * max(1.0, abs(value)):
        return refined
    ratio = last / previous if previous > 0 else np.inf
    if ratio >= DIVERGENCE_RATIO:
        raise DivergenceError(f"Dini 积分发散: 相邻块之比 {ratio:.3f}")
    # Aitken 外推几何尾项
    return refined + float(blocks[-1]) * ratio / (1 - ratio)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """m 线性核 K(x, y_1, ..., y_m), 连续模 ω(t) = c t 或一般函数"""

    name: str
    m: int
    d: int
    evaluate: Callable
    omega: Callable
    doubling: float
    size_constant: float
    dini_value: float

    def __call__(self, x, *ys):
        x = np.asarray(x, dtype=float)
        return self.evaluate(x, [np.asarray(y, dtype=float) for y in ys])


def riesz_kernel(m: int, d: int) -> KernelSpec:
    """
    第一坐标的多线性 Riesz 变换
    K(x, y⃗) = Σ_j (x¹ - y_j¹) / (Σ_j |x - y_j|)^{md+1}
    """
    if m < 1 or d < 1:
        raise InputError("需要 m >= 1, d >= 1")
    power = m * d + 1

    def evaluate(x, ys):
        num = sum(x[..., 0] - y[..., 0] for y in ys)
        den = sum(np.linalg.norm(x - y, axis=-1) for y in ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = num / den ** power
        return np.where(den > 0, value, 0.0)

    c = float(m ** (m * d + 2) * (m * d + 2) * 2 ** (m * d + 1))

    def omega(t):
        return c * np.asarray(t, dtype=float)

    return KernelSpec(f"riesz(m={m},d={d})", m, d, evaluate, omega, 2.0,
                      float(m ** (m * d)), dini(omega))


def zero_kernel(m: int, d: int) -> KernelSpec:
    def evaluate(x, ys):
        shape = np.broadcast_shapes(x.shape[:-1], *[y.shape[:-1] for y in ys])
        return np.zeros(shape)

    def omega(t):
        return np.zeros_like(np.asarray(t, dtype=float))

    return KernelSpec(f"zero(m={m},d={d})", m, d, evaluate, omega, 1.0, 0.0, 0.0)


def _pair_sum(x: np.ndarray, ys: Sequence[np.ndarray]) -> np.ndarray:
    points = [x] + list(ys)
    total = 0.0
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            total = total + np.linalg.norm(points[a] - points[b], axis=-1)
    return total


def check_kernel(kernel: KernelSpec, samples: int, rng: np.random.Generator) -> Dict[str, float]:
    """
    随机抽查尺寸条件与光滑条件

    Returns:
        {"size_ratio": max |K| S^{md} / C_K, "smooth_ratio": 光滑条件两侧之比的最大值,
         "doubling_ratio": max ω(2t)/(D ω(t))}
    """
    m, d = kernel.m, kernel.d
    x = rng.uniform(-1, 1, (samples, d))
    ys = [rng.uniform(-1, 1, (samples, d)) for _ in range(m)]
    s = _pair_sum(x, ys)
    size = np.abs(kernel.evaluate(x, ys)) * s ** (m * d)
    size_ratio = float(size.max() / kernel.size_constant) if kernel.size_constant > 0 else float(size.max())

    # |x - x'| <= max_j |x - y_j| / 2
    reach = np.max([np.linalg.norm(x - y, axis=1) for y in ys], axis=0)
    direction = rng.standard_normal((samples, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    step = rng.uniform(0, 0.5, samples) * reach
    x2 = x + step[:, None] * direction
    diff = np.abs(kernel.evaluate(x, ys) - kernel.evaluate(x2, ys))
    bound = kernel.size_constant * kernel.omega(step / s) / s ** (m * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.where(bound > 0, diff / bound, np.where(diff > 0, np.inf, 0.0))

    t = rng.uniform(0, 1, samples)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = kernel.doubling * kernel.omega(t)
        doubling = np.where(base > 0, kernel.omega(2 * t) / base, 0.0)
    return {"size_ratio": size_ratio, "smooth_ratio": float(smooth.max()),
            "doubling_ratio": float(doubling.max())}


Fields = Sequence[Union[VectorField, np.ndarray]]


def _components(fields: Fields, grid: Grid) -> List[np.ndarray]:
    out = []
    for f in fields:
        values = f.values if isinstance(f, VectorField) else np.asarray(f, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != grid.n_cells:
            raise InputError("函数与网格不符")
        out.append(values)
    return out


class DiscreteOperator:
    """T 在分片常值函数上的离散化: 中点求积, 含目标格子的元组跳过"""

    def __init__(self, kernel: KernelSpec, grid: Grid):
        if kernel.d != grid.d:
            raise InputError(f"核的维数 {kernel.d} 与网格维数 {grid.d} 不符")
        self.kernel = kernel
        self.grid = grid
        self.volume = grid.cell_volume
        self._tensor = lru_cache(maxsize=1024)(self._build_tensor)

    @property
    def m(self) -> int:
        return self.kernel.m

    def _build_tensor(self, target) -> np.ndarray:
        grid = self.grid
        m, n_cells = self.m, grid.n_cells
        if isinstance(target, (int, np.integer)):
            point = grid.centers[int(target)]
            excluded = int(target)
        else:
            point = np.asarray(target, dtype=float)
            try:
                excluded = grid.locate(tuple(Fraction(v).limit_denominator(1 << 40) for v in target))
            except InputError:
                excluded = None
        ys = []
        for j in range(m):
            shape = (1,) * j + (n_cells,) + (1,) * (m - j - 1) + (grid.d,)
            ys.append(grid.centers.reshape(shape))
        tensor = np.array(self.kernel.evaluate(point, ys), dtype=float)
        tensor = np.broadcast_to(tensor, (n_cells,) * m).copy()
        if excluded is not None:
            for j in range(m):
                index = [slice(None)] * m
                index[j] = excluded
                tensor[tuple(index)] = 0.0
        tensor.setflags(write=False)
        return tensor

    def kernel_tensor(self, target) -> np.ndarray:
        key = int(target) if isinstance(target, (int, np.integer)) else tuple(float(v) for v in target)
        return self._tensor(key)

    def apply(self, comps: Sequence[np.ndarray], target, support: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Σ_{元组} K(x, y⃗) ⊗_j f_j(y_j) Π vol

        Args:
            comps: 每个因子 (格子数, n_j)
            target: 格子编号或显式点
            support: 只在这些格子上求和 (即 f⃗ 1_E)
        """
        tensor = self.kernel_tensor(target)
        if support is not None:
            tensor = tensor[np.ix_(*([support] * self.m))]
            comps = [c[support] for c in comps]
        out = tensor
        for c in comps:
            out = np.tensordot(out, c, axes=([0], [0]))
        return np.asarray(out).ravel() * self.volume ** self.m

    def apply_all(self, comps: Sequence[np.ndarray], targets: Optional[Sequence[int]] = None,
                  support: Optional[np.ndarray] = None) -> np.ndarray:
        targets = range(self.grid.n_cells) if targets is None else targets
        return np.array([self.apply(comps, t, support) for t in targets])


def apply_czo(kernel: KernelSpec, fields: Fields, x, grid: Optional[Grid] = None) -> np.ndarray:
    """
    T̃(f⃗)(x) ∈ H

    Args:
        kernel: 核
        fields: VectorField 或一维数组 (数量情形)
        x: 格子编号或显式点
        grid: fields 为数组时必须给出
    """
    grid = grid or next(f.grid for f in fields if isinstance(f, VectorField))
    if len(fields) != kernel.m:
        raise InputError(f"需要 {kernel.m} 个函数")
    return DiscreteOperator(kernel, grid).apply(_components(fields, grid), x)


def _norms(values: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(values), axis=-1)


def _localized_grand(op: DiscreteOperator, comps: Sequence[np.ndarray], top: Cube) -> np.ndarray:
    """M_{T,Q}(f⃗)(x), x ∈ Q 的格子 (块内行优先)"""
    grid = op.grid
    cells = grid.cells_in(top)
    support = grid.cells_in(top.triple())
    position = {int(c): k for k, c in enumerate(cells)}
    reference = {int(c): op.apply(comps, int(c), support) for c in cells}
    out = np.zeros(len(cells))
    for r in grid.dyadic_cubes(top)[1:]:
        inner = grid.cells_in(r)
        local = grid.cells_in(r.triple())
        value = max(float(np.linalg.norm(reference[int(c)] - op.apply(comps, int(c), local))) for c in inner)
        idx = [position[int(c)] for c in inner]
        out[idx] = np.maximum(out[idx], value)
    return out


def grand_maximal(kernel: KernelSpec, fields: Fields, cubes: Sequence[Cube],
                  localized_at: Optional[Cube] = None, grid: Optional[Grid] = None) -> np.ndarray:
    """
    M_T(f⃗)(x) = sup_{Q∋x} ess sup_{ξ∈Q} |T(f⃗)(ξ) - T(f⃗ 1_{3Q})(ξ)|

    Args:
        localized_at: Q₀; 给出时 f⃗ 换成 f⃗ 1_{3Q₀}, 只取 Q ⊆ Q₀

    Returns:
        np.ndarray: 格子上的值; 3Q 越出区域的立方体被跳过
    """
    grid = grid or next(f.grid for f in fields if isinstance(f, VectorField))
    op = DiscreteOperator(kernel, grid)
    comps = _components(fields, grid)
    base_support = None
    if localized_at is not None:
        base_support = grid.try_cells_in(localized_at.triple())
        if base_support is None:
            raise InputError(f"3Q₀ 越出区域: {localized_at}")
        cubes = [q for q in cubes if localized_at.contains_cube(q)]
    out = np.zeros(grid.n_cells)
    full: Dict[int, np.ndarray] = {}
    skipped = 0
    for q in cubes:
        local = grid.try_cells_in(q.triple())
        if local is None:
            skipped += 1
            continue
        inner = grid.cells_in(q)
        value = 0.0
        for c in inner:
            c = int(c)
            if c not in full:
                full[c] = op.apply(comps, c, base_support)
            value = max(value, float(np.linalg.norm(full[c] - op.apply(comps, c, local))))
        out[inner] = np.maximum(out[inner], value)
    if skipped:
        logger.warning(f"{skipped} 个立方体的 3Q 越出区域, 已跳过")
    return out


@dataclass
class CZDecomposition:
    grid: Grid
    good: np.ndarray
    bad: Dict[Cube, np.ndarray]
    cubes: List[Cube]
    height: float

    def reconstruct(self) -> np.ndarray:
        total = self.good.copy()
        for b in self.bad.values():
            total = total + b
        return total


def cz_decompose(grid: Grid, f, height: float, top: Optional[Cube] = None) -> CZDecomposition:
    """
    高度 λ 的 Calderón–Zygmund 分解: 选出 ⟨|f|⟩_Q > λ 的极大二进立方体

    Raises:
        InputError: λ <= 0, 或 λ < ⟨|f|⟩_{Q₀}
    """
    if not height > 0:
        raise InputError(f"高度必须为正: {height}")
    values = np.asarray(f, dtype=float)
    top = top or grid.box
    magnitude = np.abs(values)
    if magnitude[grid.cells_in(top)].mean() > height:
        raise InputError(f"高度 {height} 小于 ⟨|f|⟩_Q₀")
    selected: List[Cube] = []
    queue = top.children() if len(grid.cells_in(top)) > 1 else []
    while queue:
        q = queue.pop(0)
        cells = grid.cells_in(q)
        if magnitude[cells].mean() > height:
            selected.append(q)
        elif len(cells) > 1:
            queue.extend(q.children())
    good = values.copy()
    bad: Dict[Cube, np.ndarray] = {}
    for q in selected:
        cells = grid.cells_in(q)
        mean = values[cells].mean()
        b = np.zeros_like(values)
        b[cells] = values[cells] - mean
        good[cells] = mean
        bad[q] = b
    return CZDecomposition(grid, good, bad, selected, float(height))


@dataclass
class CZSparseResult:
    stopping: SparseFamily
    triples: SparseFamily
    constant: float
    martingale: bool
    eta_sparse: bool
    thresholds: List[float] = field(default_factory=list)


def _children_of_exceptional(grid: Grid, top: Cube, exceptional: np.ndarray) -> List[Cube]:
    """⟨1_E⟩_P > 2^{-d-1} 的极大真子二进立方体"""
    level = 2.0 ** (-grid.d - 1)
    out = []
    queue = top.children() if len(grid.cells_in(top)) > 1 else []
    while queue:
        p = queue.pop(0)
        share = exceptional[grid.cells_in(p)].mean()
        if share > level:
            out.append(p)
        elif share > 0 and len(grid.cells_in(p)) > 1:
            queue.extend(p.children())
    return out


def _component_bases(grid: Grid, comps: Sequence[np.ndarray], region: Cube) -> List[np.ndarray]:
    bases = []
    for c in comps:
        if c.shape[1] == 1:
            bases.append(np.ones((1, 1)))
            continue
        masked = np.zeros_like(c)
        cells = grid.cells_in(region)
        masked[cells] = c[cells]
        bases.append(john_basis(aumann_average_vectors(grid, masked, region)))
    return bases


def _stopping_step(op: DiscreteOperator, comps: Sequence[np.ndarray], q: Cube, eps: float):
    """一步停时: 返回 (子立方体, 所用阈值)"""
    grid = op.grid
    cells = grid.cells_in(q)
    triple = grid.cells_in(q.triple())
    bases = _component_bases(grid, comps, q.triple())
    tuples = [()]
    for basis in bases:
        tuples = [t + (k,) for t in tuples for k in range(basis.shape[1])]
    budget_total = eps * 2.0 ** (-grid.d - 1) * len(cells)
    budget = int(np.floor(budget_total / len(tuples) + 1e-12))
    exceptional = np.zeros(grid.n_cells, dtype=bool)
    thresholds = []
    for t in tuples:
        scalars = [c @ basis[:, k] for c, basis, k in zip(comps, bases, t)]
        averages = [float(np.abs(s[triple]).mean()) for s in scalars]
        if min(averages) <= 0:
            continue
        grand = _localized_grand(op, [s[:, None] for s in scalars], q)
        score = grand / float(np.prod(averages))
        for s, a in zip(scalars, averages):
            score = np.maximum(score, np.abs(s[cells]) / a)
        order = np.sort(score)[::-1]
        threshold = float(order[budget]) if budget < len(order) else 0.0
        thresholds.append(threshold)
        exceptional[cells[score > threshold]] = True
    if exceptional.sum() > budget_total + 1e-9:
        logger.error(f"{q}: 例外集 {int(exceptional.sum())} 格超出预算 {budget_total:.2f}")
        raise InvariantViolation(f"例外集超出测度预算: {q}")
    return _children_of_exceptional(grid, q, exceptional), thresholds


def _sparse_sum(grid: Grid, comps: Sequence[np.ndarray], triples: Sequence[Cube]) -> np.ndarray:
    """Σ_{3Q} Π_j ⟨|f_j|⟩_{3Q} 1_{3Q}"""
    out = np.zeros(grid.n_cells)
    for r in triples:
        cells = grid.cells_in(r)
        out[cells] += float(np.prod([_norms(c[cells]).mean() for c in comps]))
    return out


def _gauge_ratio(body: SymmetricConvexBody, u: np.ndarray) -> float:
    """与 contains 相同网格上的 max <u,v>/h(v)"""
    if not np.any(u):
        return 0.0
    net = with_extra(direction_net(body.dim, default_count(body.dim)), u)
    net = np.vstack([net, -net])
    inner = net @ u
    h = body.support(net)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h > 0, inner / h, np.where(inner > 1e-12 * np.linalg.norm(u), np.inf, 0.0))
    return float(ratio.max())


def sparse_dominate(kernel: KernelSpec, fields: Fields, top: Cube, grid: Optional[Grid] = None,
                    eps: float = 0.5, workers: int = 1) -> CZSparseResult:
    """
    T̃ 的稀疏控制: 迭代停时构造

    Args:
        kernel: 核
        fields: f⃗, 支撑在 Q₀ 内
        top: Q₀
        grid: 区域须包含 3Q₀
        eps: 鞅稀疏参数
        workers: 同层兄弟立方体并行数

    Returns:
        CZSparseResult: 二进停时族 𝒢, 三倍族 {3Q}, 拟合常数 C
    """
    grid = grid or next(f.grid for f in fields if isinstance(f, VectorField))
    if len(fields) != kernel.m:
        raise InputError(f"需要 {kernel.m} 个函数")
    if grid.try_cells_in(top.triple()) is None:
        raise InputError(f"区域必须包含 3Q₀: {top.triple()}")
    comps = _components(fields, grid)
    outside = np.ones(grid.n_cells, dtype=bool)
    outside[grid.cells_in(top)] = False
    if any(np.any(c[outside]) for c in comps):
        raise InputError("f⃗ 必须支撑在 Q₀ 内")
    op = DiscreteOperator(kernel, grid)

    stopping: List[Cube] = []
    thresholds: List[float] = []
    layer = [top]
    while layer:
        stopping.extend(layer)
        steps = _sweep_steps(op, comps, layer, eps, workers)
        layer = []
        for children, used in steps:
            layer.extend(children)
            thresholds.extend(used)

    triples = [q.triple() for q in stopping]
    d = grid.d
    martingale = is_martingale_sparse(SparseFamily(list(stopping)), eps)
    eta_ok, _ = is_eta_sparse(SparseFamily(list(triples)), (1 - eps) / 3 ** d, grid)

    cells = grid.cells_in(top)
    values = op.apply_all(comps, cells)
    n_out = values.shape[1]
    if n_out == 1:
        dominating = _sparse_sum(grid, comps, triples)[cells]
        magnitude = np.abs(values[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(dominating > 0, magnitude / dominating, np.where(magnitude > 0, np.inf, 0.0))
        constant = float(ratios.max()) if len(ratios) else 0.0
    else:
        body = convex_sparse_operator([VectorField(grid, c) for c in comps], triples)
        constant = max((_gauge_ratio(body.bodies[c], values[k]) for k, c in enumerate(cells)), default=0.0)
    if not martingale:
        logger.warning("停时族未通过鞅稀疏检验")
    logger.info(f"稀疏控制 {top}: |S|={len(stopping)}, C={constant:.6g}")
    return CZSparseResult(SparseFamily(stopping, grid=grid), SparseFamily(triples, grid=grid),
                          constant, martingale, eta_ok, thresholds)


def _sweep_steps(op, comps, layer, eps, workers):
    if workers <= 1 or len(layer) <= 1:
        return [_stopping_step(op, comps, q, eps) for q in layer]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: _stopping_step(op, comps, q, eps), layer))


def convex_sparse_operator(fields: Sequence[Union[VectorField, BodyField]], family) -> BodyField:
    """
    A_𝒮 F⃗(x) = Σ_{Q∈𝒮, Q∋x} 𝒦(⊗_j ⟨F_j⟩_Q), 逐格的 Minkowski 和
    """
    cubes = family.cubes if isinstance(family, SparseFamily) else list(family)
    grid = fields[0].grid
    generators = [cube_generator(fields, q) for q in cubes]
    dim = generators[0].dim if generators else int(np.prod([
        f.n if isinstance(f, VectorField) else f.dim for f in fields]))
    owners: List[List[int]] = [[] for _ in range(grid.n_cells)]
    for k, q in enumerate(cubes):
        for c in grid.cells_in(q):
            owners[c].append(k)
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
                shared[key] = MinkowskiSum(tuple(generators[k] for k in members))
        bodies.append(shared[key])
    return BodyField(grid, bodies)


def nondegeneracy_constant(m: int, d: int) -> float:
    """C_{m,d} = (d - 1 + (2m+1)²)^{1/2} / (m(2m-1))"""
    return float(np.sqrt(d - 1 + (2 * m + 1) ** 2) / (m * (2 * m - 1)))


@dataclass
class NondegeneracyReport:
    constant: float
    property_a_min: float
    property_a_needed: float
    property_b_max: float
    samples: int


def nondegeneracy_check(kernel: KernelSpec, grid: Grid, cube: Cube, alpha: float,
                        samples: int = 8, seed: int = 0) -> NondegeneracyReport:
    """
    Riesz 核的方向非退化检验

    (a) 对 1_{Q'} 的随机分解 h⃗ (Π h_j = 1_{Q'}), min_{x∈Q} C_{m,d}|T(h⃗)(x)|;
    (b) S(x,y⃗) = α^{-1}(|Q|^{-m} - (1-α)C_{m,d}K(x,y⃗)) 在 x∈Q', y⃗∈Q^m 上的 max |S| |Q|^m

    Raises:
        InputError: α ∉ (0,1) 或 Q' 越出区域
    """
    if not 0 < alpha < 1:
        raise InputError(f"α 必须在 (0,1) 内: {alpha}")
    m, d = kernel.m, kernel.d
    shift = [2 * m * cube.side] + [0] * (d - 1)
    partner = cube.translate(shift)
    q_cells = grid.try_cells_in(cube)
    p_cells = grid.try_cells_in(partner)
    if q_cells is None or p_cells is None:
        raise InputError(f"Q 或 Q' 越出区域: {cube}, {partner}")
    c_md = nondegeneracy_constant(m, d)
    op = DiscreteOperator(kernel, grid)
    rng = np.random.default_rng(seed)

    worst = np.inf
    for _ in range(samples if m > 1 else 1):
        logs = rng.standard_normal((m, len(p_cells)))
        logs -= logs.mean(axis=0)
        comps = []
        for j in range(m):
            h = np.zeros((grid.n_cells, 1))
            h[p_cells, 0] = np.exp(logs[j])
            comps.append(h)
        values = np.abs(op.apply_all(comps, q_cells, support=p_cells)[:, 0])
        worst = min(worst, float(values.min()))
    property_a = c_md * worst

    volume = float(cube.volume)
    centers = grid.centers
    xs = centers[p_cells]
    ys = []
    for j in range(m):
        shape = (1,) + (1,) * j + (len(q_cells),) + (1,) * (m - j - 1) + (d,)
        ys.append(centers[q_cells].reshape(shape))
    k_values = kernel.evaluate(xs.reshape((len(p_cells),) + (1,) * m + (d,)), ys)
    s_values = (volume ** (-m) - (1 - alpha) * c_md * k_values) / alpha
    property_b = float(np.abs(s_values).max() * volume ** m)
    needed = 1.0 / worst if worst > 0 else np.inf
    logger.info(f"非退化: C={c_md:.6g}, (a) min={property_a:.6g}, (b) max={property_b:.6g}")
    return NondegeneracyReport(c_md, property_a, needed, property_b, samples if m > 1 else 1)


# ---- 诊断常数 ----

def endpoint_constant(kernel: KernelSpec, fields: Fields, grid: Grid) -> float:
    """sup_λ λ^{1/m} |{|T f⃗| > λ}| / Π ‖f_j‖₁^{1/m}"""
    op = DiscreteOperator(kernel, grid)
    comps = _components(fields, grid)
    values = np.sort(_norms(op.apply_all(comps)))[::-1]
    m = kernel.m
    vol = grid.cell_volume
    denom = float(np.prod([(_norms(c).sum() * vol) ** (1.0 / m) for c in comps]))
    if denom == 0:
        return 0.0
    counts = np.arange(1, len(values) + 1) * vol
    return float((values ** (1.0 / m) * counts).max() / denom)


def pointwise_constant(kernel: KernelSpec, fields: Fields, grid: Grid, top: Cube) -> float:
    """|T(f⃗ 1_{3Q₀})(x)| <= c Π|f_j| + M_{T,Q₀}(f⃗)(x) 中最小的 c (局部项取相邻 3 格上的最大值)"""
    op = DiscreteOperator(kernel, grid)
    comps = _components(fields, grid)
    cells = grid.cells_in(top)
    support = grid.try_cells_in(top.triple())
    if support is None:
        raise InputError("3Q₀ 越出区域")
    values = _norms(op.apply_all(comps, cells, support))
    grand = _localized_grand(op, comps, top)
    best = 0.0
    for k, c in enumerate(cells):
        excess = values[k] - grand[k]
        if excess <= 1e-12 * max(1.0, values[k]):
            continue
        neighbourhood = grid.try_cells_in(grid.cell_cube(int(c)).triple())
        if neighbourhood is None:
            neighbourhood = np.array([int(c)])
        local = float(np.prod([_norms(comp[neighbourhood]).max() for comp in comps]))
        best = max(best, excess / local if local > 0 else np.inf)
    return best


def cotlar_constant(kernel: KernelSpec, fields: Fields, grid: Grid, cubes: Sequence[Cube]) -> float:
    """M_T(f⃗) <= C 𝓜(f⃗) + M_η(|T f⃗|), η = 1/(2m), 在 {3Q} 族上"""
    comps = _components(fields, grid)
    op = DiscreteOperator(kernel, grid)
    triples = [q.triple() for q in cubes if grid.try_cells_in(q.triple()) is not None]
    if not triples:
        raise InputError("没有可用的 3Q")
    grand = grand_maximal(kernel, fields, cubes, grid=grid)
    t_values = _norms(op.apply_all(comps))
    eta = eta_maximal(grid, t_values, 1.0 / (2 * kernel.m), triples)
    multi = multilinear_maximal(grid, [_norms(c) for c in comps], triples)
    excess = grand - eta
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(excess > 1e-12, excess / np.where(multi > 0, multi, np.nan), 0.0)
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    return float(ratios.max())


def weighted_bound_table(kernel: KernelSpec, fields: Sequence[VectorField], weights: Sequence[MatrixWeightField],
                         p: Sequence, families: Sequence[Sequence[Cube]]) -> List[dict]:
    """
    ‖T̃f⃗‖_{L^p_𝐖} / Π‖f_j‖_{L^{p_j}_{W_j}} 与 [W⃗]_{p⃗,op} 的比较, 每个族一行
    """
    grid = fields[0].grid
    comps = _components(fields, grid)
    op = DiscreteOperator(kernel, grid)
    full = weights[0] if len(weights) == 1 else tensor_weight(weights)
    values = op.apply_all(comps)
    recip_p = [reciprocal(v) for v in p]
    total = sum(recip_p, Fraction(0))
    vol = grid.cell_volume

    def lebesgue(norms, recip):
        if recip == 0:
            return float(norms.max())
        return float((vol * np.sum(norms ** float(1 / recip))) ** float(recip))

    lhs = lebesgue(np.linalg.norm(np.einsum("cab,cb->ca", full.values, values), axis=1), total)
    denom = float(np.prod([lebesgue(np.linalg.norm(np.einsum("cab,cb->ca", w.values, c), axis=1), rp)
                           for w, c, rp in zip(weights, comps, recip_p)]))
    ratio = lhs / denom if denom > 0 else np.inf
    cfg = derived_exponents(list(p), [1] * len(p), np.inf)
    rows = []
    for family in families:
        characteristic = roudenko_characteristic(weights, cfg, family)
        rows.append({"cubes": len(family), "characteristic": characteristic, "ratio": ratio,
                     "constant": ratio / characteristic})
    return rows
