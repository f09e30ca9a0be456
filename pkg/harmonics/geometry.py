"""
立方体与二进网格的精确算术, 以及稀疏族检验
"""

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from harmonics.errors import InputError, InvariantViolation
from logger import setup_logger

logger = setup_logger("geometry")

THIRD = Fraction(1, 3)
SHIFTS = (Fraction(0), THIRD, -THIRD)
MAX_RESOLUTION_CELLS = 1 << 22


def as_fraction(value) -> Fraction:
    """
    把输入转换成精确有理数

    Args:
        value: int / Fraction / float / "a/b" 字符串 / [mantissa, exp] / {"num","den"}

    Returns:
        Fraction
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        mantissa, exponent = int(value[0]), int(value[1])
        return Fraction(mantissa) * Fraction(2) ** exponent
    if isinstance(value, dict):
        return Fraction(int(value["num"]), int(value["den"]))
    if isinstance(value, bool):
        raise InputError(f"无法解析坐标: {value!r}")
    if isinstance(value, (int, float, str, np.integer, np.floating)):
        return Fraction(value.item() if isinstance(value, (np.integer, np.floating)) else value)
    raise InputError(f"无法解析坐标: {value!r}")


def encode_rational(value: Fraction):
    """二进有理数编码为 [mantissa, exp], 其余 (来自 1/3 平移) 编码为 {num, den}"""
    den = value.denominator
    if den & (den - 1) == 0:
        return [value.numerator, -(den.bit_length() - 1)]
    return {"num": value.numerator, "den": den}


def _floor_log2(x: Fraction) -> int:
    """最大的 e 使 2^e <= x"""
    e = x.numerator.bit_length() - x.denominator.bit_length()
    while Fraction(2) ** e > x:
        e -= 1
    while Fraction(2) ** (e + 1) <= x:
        e += 1
    return e


def _exact_log2(x: Fraction) -> Optional[int]:
    e = _floor_log2(x)
    return e if Fraction(2) ** e == x else None


@dataclass(frozen=True)
class Cube:
    """轴平行的半开立方体 corner + [0, side)^d"""

    corner: Tuple[Fraction, ...]
    side: Fraction

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(as_fraction(c) for c in self.corner))
        object.__setattr__(self, "side", as_fraction(self.side))
        if self.side <= 0:
            raise InputError(f"立方体边长必须为正: {self.side}")
        if not self.corner:
            raise InputError("立方体维数必须 >= 1")

    @classmethod
    def unit(cls, d: int) -> "Cube":
        return cls((0,) * d, 1)

    @property
    def d(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> Fraction:
        return self.side ** self.d

    @property
    def upper(self) -> Tuple[Fraction, ...]:
        return tuple(c + self.side for c in self.corner)

    @property
    def center(self) -> Tuple[Fraction, ...]:
        return tuple(c + self.side / 2 for c in self.corner)

    def dilate(self, factor) -> "Cube":
        """中心不动, 边长乘以 factor"""
        factor = as_fraction(factor)
        if factor <= 0:
            raise InputError(f"伸缩因子必须为正: {factor}")
        new_side = self.side * factor
        return Cube(tuple(c - new_side / 2 for c in self.center), new_side)

    def triple(self) -> "Cube":
        return self.dilate(3)

    def translate(self, offset: Sequence) -> "Cube":
        if len(offset) != self.d:
            raise InputError("平移向量维数不符")
        return Cube(tuple(c + as_fraction(o) for c, o in zip(self.corner, offset)), self.side)

    def contains_cube(self, other: "Cube") -> bool:
        return all(a <= b and b + other.side <= a + self.side
                   for a, b in zip(self.corner, other.corner))

    def intersects(self, other: "Cube") -> bool:
        return all(a < b + other.side and b < a + self.side
                   for a, b in zip(self.corner, other.corner))

    def contains_point(self, point: Sequence) -> bool:
        return all(c <= as_fraction(x) < c + self.side for c, x in zip(self.corner, point))

    def children(self) -> List["Cube"]:
        half = self.side / 2
        return [Cube(tuple(c + b * half for c, b in zip(self.corner, bits)), half)
                for bits in itertools.product((0, 1), repeat=self.d)]

    def parent_in(self, grid: "DyadicGrid") -> "Cube":
        """grid 中的父立方体; 本立方体必须属于 grid"""
        if not grid.contains(self):
            raise InputError(f"{self} 不属于该二进网格")
        return grid.enclosing(self, grid.level_of(self) - 1)

    def to_json(self) -> dict:
        return {"corner": [encode_rational(c) for c in self.corner],
                "side": encode_rational(self.side)}

    @classmethod
    def from_json(cls, data: dict) -> "Cube":
        try:
            return cls(tuple(as_fraction(c) for c in data["corner"]), as_fraction(data["side"]))
        except (KeyError, TypeError) as e:
            raise InputError(f"立方体 JSON 格式错误: {e}")

    def __repr__(self):
        corner = ", ".join(str(c) for c in self.corner)
        return f"Cube(({corner}), {self.side})"


def dyadic_family(top: Cube, depth: int) -> List[Cube]:
    """top 的全部二进子立方体, 从第 0 层到第 depth 层, 层内按行优先排列"""
    cubes = []
    for level in range(depth + 1):
        side = top.side / (1 << level)
        for multi in itertools.product(range(1 << level), repeat=top.d):
            cubes.append(Cube(tuple(c + k * side for c, k in zip(top.corner, multi)), side))
    return cubes


@dataclass(frozen=True)
class DyadicGrid:
    """平移二进网格 {2^-k([0,1)^d + m + (-1)^k shift)}"""

    d: int
    shift: Tuple[Fraction, ...] = ()

    def __post_init__(self):
        shift = self.shift or (Fraction(0),) * self.d
        shift = tuple(as_fraction(s) for s in shift)
        if len(shift) != self.d:
            raise InputError("平移向量维数不符")
        if any(s not in SHIFTS for s in shift):
            raise InputError(f"平移分量必须属于 {{0, 1/3, -1/3}}: {shift}")
        object.__setattr__(self, "shift", shift)

    @classmethod
    def all_grids(cls, d: int) -> List["DyadicGrid"]:
        """3^d 个平移网格, 第 0 个是标准网格"""
        return [cls(d, shift) for shift in itertools.product(SHIFTS, repeat=d)]

    def _offset(self, level: int) -> Tuple[Fraction, ...]:
        sign = 1 if level % 2 == 0 else -1
        return tuple(sign * s for s in self.shift)

    def cube_at(self, level: int, index: Sequence[int]) -> Cube:
        side = Fraction(2) ** (-level)
        return Cube(tuple(side * (m + o) for m, o in zip(index, self._offset(level))), side)

    def level_of(self, cube: Cube) -> Optional[int]:
        e = _exact_log2(cube.side)
        return None if e is None else -e

    def contains(self, cube: Cube) -> bool:
        """cube 是否属于本网格"""
        if cube.d != self.d:
            return False
        level = self.level_of(cube)
        if level is None:
            return False
        for c, o in zip(cube.corner, self._offset(level)):
            if (c / cube.side - o).denominator != 1:
                return False
        return True

    def enclosing(self, cube: Cube, level: int) -> Optional[Cube]:
        """本网格第 level 层中包含 cube 的立方体 (若存在)"""
        side = Fraction(2) ** (-level)
        index = []
        for c, o in zip(cube.corner, self._offset(level)):
            m = (c / side - o).__floor__()
            index.append(m)
        candidate = self.cube_at(level, index)
        return candidate if candidate.contains_cube(cube) else None


def cover_dyadic(cube: Cube, d: Optional[int] = None) -> Tuple[int, Cube]:
    """
    3^d 格点技巧: 在某个平移网格中找包含 cube 且体积最小的立方体

    Args:
        cube: 任意立方体
        d: 维数 (缺省取 cube.d)

    Returns:
        (网格编号, R), 编号对应 DyadicGrid.all_grids(d) 的顺序

    Raises:
        InputError: d 与 cube.d 不符
        InvariantViolation: 内部断言; 任意立方体都有 |R| <= 6^d|Q| 的覆盖, 正常输入不会触发
    """
    d = d or cube.d
    if d != cube.d:
        raise InputError("维数不符")
    grids = DyadicGrid.all_grids(d)
    finest = -(_floor_log2(cube.side) if _exact_log2(cube.side) is not None
               else _floor_log2(cube.side) + 1)
    best = None
    # 边长 2^-k 从 >= l(Q) 起向上最多 8 倍, 6 倍之内必然命中
    for level in range(finest, finest - 4, -1):
        for gid, grid in enumerate(grids):
            found = grid.enclosing(cube, level)
            if found is not None and (best is None or found.side < best[1].side):
                best = (gid, found)
        if best is not None:
            break
    if best is None or best[1].volume > 6 ** d * cube.volume:
        raise InvariantViolation(f"3^d 覆盖失败: {cube}")
    return best


@dataclass(frozen=True)
class Grid:
    """
    离散化分辨率: box 被剖分为 cells_per_side^d 个同样大小的格子, 按行优先编号
    """

    box: Cube
    cells_per_side: int

    def __post_init__(self):
        if self.cells_per_side < 1:
            raise InputError("cells_per_side 必须 >= 1")

    @classmethod
    def dyadic(cls, d: int, level: int, corner: Optional[Sequence] = None, side=1) -> "Grid":
        corner = corner if corner is not None else (0,) * d
        return cls(Cube(tuple(corner), side), 1 << level)

    @classmethod
    def covering(cls, cubes: Sequence[Cube]) -> "Grid":
        """一族立方体的公共分辨率网格"""
        if not cubes:
            raise InputError("空立方体族")
        d = cubes[0].d
        if any(q.d != d for q in cubes):
            raise InputError("立方体维数不一致")
        origin = tuple(min(q.corner[i] for q in cubes) for i in range(d))
        extent = max(q.corner[i] + q.side - origin[i] for q in cubes for i in range(d))
        numerators, denominators = [], []
        for q in cubes:
            for value in [q.side] + [q.corner[i] - origin[i] for i in range(d)]:
                if value:
                    numerators.append(value.numerator)
                    denominators.append(value.denominator)
        num = np.gcd.reduce(numerators)
        den = np.lcm.reduce(denominators)
        cell = Fraction(int(num), int(den))
        per_side = int((extent / cell).__ceil__())
        if per_side ** d > MAX_RESOLUTION_CELLS:
            raise InputError(f"分辨率不匹配: 公共网格需要 {per_side ** d} 个格子")
        return cls(Cube(origin, cell * per_side), per_side)

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def cell_side(self) -> Fraction:
        return self.box.side / self.cells_per_side

    @property
    def n_cells(self) -> int:
        return self.cells_per_side ** self.d

    @property
    def cell_volume(self) -> float:
        return float(self.cell_side ** self.d)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells_per_side,) * self.d

    @property
    def level(self) -> Optional[int]:
        e = _exact_log2(Fraction(self.cells_per_side))
        return e

    @cached_property
    def centers(self) -> np.ndarray:
        h = float(self.cell_side)
        axes = [float(c) + h * (np.arange(self.cells_per_side) + 0.5) for c in self.box.corner]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_cube(self, index: int) -> Cube:
        multi = np.unravel_index(index, self.shape)
        h = self.cell_side
        return Cube(tuple(c + int(k) * h for c, k in zip(self.box.corner, multi)), h)

    def locate(self, point: Sequence) -> int:
        """包含 point 的格子编号"""
        multi = []
        for c, x in zip(self.box.corner, point):
            k = ((as_fraction(x) - c) / self.cell_side).__floor__()
            if not 0 <= k < self.cells_per_side:
                raise InputError(f"点 {point} 不在区域内")
            multi.append(k)
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    @cached_property
    def _cells_cache(self) -> Dict[Cube, np.ndarray]:
        return {}

    def cells_in(self, cube: Cube) -> np.ndarray:
        """
        cube 内格子的编号 (块内行优先), 可 reshape 成 (k,)*d

        Raises:
            InputError: cube 未与网格对齐或越界
        """
        cached = self._cells_cache.get(cube)
        if cached is not None:
            return cached
        if cube.d != self.d:
            raise InputError("立方体维数与网格不符")
        h = self.cell_side
        width = cube.side / h
        if width.denominator != 1:
            raise InputError(f"立方体 {cube} 未与网格对齐")
        ranges = []
        for c, b in zip(cube.corner, self.box.corner):
            offset = (c - b) / h
            if offset.denominator != 1:
                raise InputError(f"立方体 {cube} 未与网格对齐")
            start = int(offset)
            if start < 0 or start + int(width) > self.cells_per_side:
                raise InputError(f"立方体 {cube} 超出区域 {self.box}")
            ranges.append(np.arange(start, start + int(width)))
        mesh = np.meshgrid(*ranges, indexing="ij")
        idx = np.ravel_multi_index(tuple(m.ravel() for m in mesh), self.shape)
        idx.setflags(write=False)
        self._cells_cache[cube] = idx
        return idx

    def try_cells_in(self, cube: Cube) -> Optional[np.ndarray]:
        try:
            return self.cells_in(cube)
        except InputError:
            return None

    def mask(self, cube: Cube) -> np.ndarray:
        out = np.zeros(self.n_cells, dtype=bool)
        out[self.cells_in(cube)] = True
        return out

    def dyadic_cubes(self, top: Optional[Cube] = None) -> List[Cube]:
        """top (缺省为 box) 的二进子立方体族, 细到格子一层"""
        top = top or self.box
        width = top.side / self.cell_side
        depth = _exact_log2(width)
        if width.denominator != 1 or depth is None:
            raise InputError(f"{top} 的边长不是格子边长的 2 的幂倍")
        return dyadic_family(top, depth)


@dataclass
class SparseFamily:
    """有限立方体族, 可附带见证集 (按格子的测度份额)"""

    cubes: List[Cube]
    witness: Optional[Dict[int, np.ndarray]] = None
    grid: Optional[Grid] = field(default=None, repr=False)

    def to_json(self) -> list:
        return [q.to_json() for q in self.cubes]

    @classmethod
    def from_json(cls, data: list) -> "SparseFamily":
        return cls([Cube.from_json(item) for item in data])

    def __len__(self):
        return len(self.cubes)


def _membership(cubes: Sequence[Cube], grid: Grid) -> np.ndarray:
    members = np.zeros((len(cubes), grid.n_cells), dtype=bool)
    for k, q in enumerate(cubes):
        try:
            members[k, grid.cells_in(q)] = True
        except InputError as e:
            raise InputError(f"分辨率不匹配: {e}")
    return members


def _canonical_witness(members: np.ndarray) -> Tuple[np.ndarray, bool]:
    """嵌套族的标准见证 E_Q = Q 去掉 S 中严格含于 Q 的立方体"""
    counts = members.astype(np.int64)
    inter = counts @ counts.T
    sizes = counts.sum(axis=1)
    nested = inter == np.minimum.outer(sizes, sizes)
    laminar = bool(np.all(nested | (inter == 0)))
    strictly_inside = (inter == sizes[None, :]) & (sizes[None, :] < sizes[:, None])
    witness = members.copy()
    for k in range(len(members)):
        inner = strictly_inside[k]
        if inner.any():
            witness[k] &= ~members[inner].any(axis=0)
    return witness, laminar


def _transport_witness(members: np.ndarray, targets: np.ndarray) -> Optional[np.ndarray]:
    """按成员签名合并格子后解运输可行性线性规划, 返回每个立方体在每个格子上的份额"""
    covered = members.any(axis=0)
    signatures, atom_of_cell = np.unique(members[:, covered].T, axis=0, return_inverse=True)
    atom_size = np.bincount(atom_of_cell.ravel(), minlength=len(signatures)).astype(float)
    pairs = [(k, a) for a in range(len(signatures)) for k in np.flatnonzero(signatures[a])]
    n_var = len(pairs)
    a_ub = np.zeros((len(signatures) + len(members), n_var))
    b_ub = np.concatenate([atom_size, -targets])
    for v, (k, a) in enumerate(pairs):
        a_ub[a, v] = 1.0
        a_ub[len(signatures) + k, v] = -1.0
    result = linprog(np.zeros(n_var), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if result.status != 0:
        return None
    share = np.zeros((len(members), members.shape[1]))
    cell_ids = np.flatnonzero(covered)
    atom_of_cell = atom_of_cell.ravel()
    for v, (k, a) in enumerate(pairs):
        cells = cell_ids[atom_of_cell == a]
        share[k, cells] = result.x[v] / atom_size[a]
    return share


def is_eta_sparse(family: SparseFamily, eta: float,
                  grid: Optional[Grid] = None) -> Tuple[bool, Optional[Dict[int, np.ndarray]]]:
    """
    η-稀疏检验, 并构造见证集

    Args:
        family: 立方体族
        eta: (0,1) 中的比例
        grid: 公共分辨率, 缺省由族本身推出

    Returns:
        (是否稀疏, 见证) 见证为 {立方体序号: 每格测度份额}
    """
    if not 0 < eta < 1:
        raise InputError(f"η 必须在 (0,1) 内: {eta}")
    cubes = family.cubes
    if not cubes:
        return True, {}
    if len(set(cubes)) < len(cubes):
        logger.warning("族中含有重复立方体, 见证集无法两两不交")
        return False, None
    grid = grid or family.grid or Grid.covering(cubes)
    members = _membership(cubes, grid)
    sizes = members.sum(axis=1)
    targets = eta * sizes

    witness, laminar = _canonical_witness(members)
    if laminar and np.all(witness.sum(axis=1) >= targets - 1e-9):
        result = {k: witness[k].astype(float) for k in range(len(cubes))}
        family.witness, family.grid = result, grid
        return True, result

    share = _transport_witness(members, targets)
    if share is None:
        return False, None
    result = {k: share[k] for k in range(len(cubes))}
    family.witness, family.grid = result, grid
    return True, result


def common_dyadic_grid(cubes: Sequence[Cube]) -> int:
    """族中全部立方体共同所属的平移网格编号"""
    d = cubes[0].d
    grids = DyadicGrid.all_grids(d)
    candidates = set(range(len(grids)))
    for q in cubes:
        candidates &= {g for g in candidates if grids[g].contains(q)}
        if not candidates:
            raise InputError("立方体不属于同一个二进网格")
    return min(candidates)


def stopping_children(cubes: Sequence[Cube], parent: Cube) -> List[Cube]:
    """ch_S(Q): S 中严格含于 Q 的极大立方体"""
    inside = [q for q in set(cubes) if q != parent and parent.contains_cube(q)]
    return [q for q in inside
            if not any(r != q and r.contains_cube(q) for r in inside)]


def is_martingale_sparse(family: SparseFamily, eps: float) -> bool:
    """
    鞅 ε-稀疏: 每个 Q 的子族 ch_S(Q) 总体积 <= ε|Q|

    Raises:
        InputError: 立方体不属于同一个二进网格
    """
    if not 0 < eps < 1:
        raise InputError(f"ε 必须在 (0,1) 内: {eps}")
    cubes = list(family.cubes)
    if not cubes:
        return True
    common_dyadic_grid(cubes)
    budget = as_fraction(eps)
    for q in set(cubes):
        total = sum((r.volume for r in stopping_children(cubes, q)), Fraction(0))
        if total > budget * q.volume:
            logger.debug(f"{q} 的子立方体占比 {float(total / q.volume):.4f} > {eps}")
            return False
    return True
