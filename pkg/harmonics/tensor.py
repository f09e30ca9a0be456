"""
张量积线性代数: Kronecker 算子, 部分缩并, 范数等价
"""

from dataclasses import dataclass
from functools import reduce
from typing import Sequence, Tuple

import numpy as np

from harmonics.errors import InputError
from logger import setup_logger

logger = setup_logger("tensor")


@dataclass(frozen=True)
class TensorSpace:
    """H = H_1 ⊗ ... ⊗ H_m, 多重指标按行优先展平"""

    dims: Tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 1 for n in dims):
            raise InputError(f"各因子维数必须 >= 1: {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def m(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    def flatten(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.dims))

    def unflatten(self, index: int) -> Tuple[int, ...]:
        return tuple(int(k) for k in np.unravel_index(index, self.dims))

    def basis_vector(self, multi: Sequence[int]) -> np.ndarray:
        e = np.zeros(self.n)
        e[self.flatten(multi)] = 1.0
        return e


def tensor_vector(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """⊗u_j, 行优先"""
    if not vectors:
        raise InputError("至少需要一个因子")
    return reduce(np.kron, [np.asarray(v, dtype=float).ravel() for v in vectors])


def tensor_matrix(*matrices: np.ndarray) -> np.ndarray:
    """
    ⊗A_j, 满足 (⊗A_j)(⊗u_j) = ⊗(A_j u_j)

    Args:
        matrices: 方阵 A_1, ..., A_m

    Returns:
        np.ndarray: n x n 矩阵, n = Π n_j
    """
    if not matrices:
        raise InputError("至少需要一个因子")
    arrays = []
    for a in matrices:
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError(f"因子必须是方阵: shape={a.shape}")
        arrays.append(a)
    return reduce(np.kron, arrays)


def batched_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """逐格 Kronecker 积, a: (N, p, p), b: (N, q, q) -> (N, pq, pq)"""
    if a.shape[0] != b.shape[0]:
        raise InputError("逐格 Kronecker 积的格子数不一致")
    n_cells, p, _ = a.shape
    q = b.shape[1]
    return np.einsum("cij,ckl->cikjl", a, b).reshape(n_cells, p * q, p * q)


def partial_contraction(space: TensorSpace, u: np.ndarray, vectors: Sequence[np.ndarray],
                        block: str = "suffix") -> np.ndarray:
    """
    把 u 与一段连续因子上的 ⊗v_j 缩并, 得到互补因子中的元素

    Args:
        space: 张量空间
        u: H 中的元素 (展平)
        vectors: 前缀或后缀因子上的向量
        block: "prefix" 或 "suffix"

    Returns:
        np.ndarray: 互补因子张量积中的元素 (展平); 全部缩并时为标量数组
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.size != space.n:
        raise InputError(f"u 的长度 {u.size} 与 n={space.n} 不符")
    k = len(vectors)
    if k == 0 or k > space.m:
        raise InputError("缩并因子个数必须在 1..m 之间")
    if block == "suffix":
        positions = list(range(space.m - k, space.m))
    elif block == "prefix":
        positions = list(range(k))
    else:
        logger.error(f"不支持的缩并块 {block!r}, dims={space.dims}")
        raise InputError(f"只支持连续的前缀或后缀块: {block!r}")
    for pos, v in zip(positions, vectors):
        if np.asarray(v).size != space.dims[pos]:
            raise InputError(f"第 {pos} 个因子维数不符")
    tensor = u.reshape(space.dims)
    block_tensor = tensor_vector(vectors).reshape([space.dims[p] for p in positions])
    out = np.tensordot(tensor, block_tensor, axes=(positions, list(range(k))))
    return np.asarray(out).ravel()


def iterated_contraction(space: TensorSpace, u: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    """(...((u v_m) v_{m-1})...) v_1, 逐个从后缀缩并, 结果等于 <u, ⊗v_j>"""
    current = np.asarray(u, dtype=float).ravel()
    dims = list(space.dims)
    for j in range(space.m - 1, -1, -1):
        sub = TensorSpace(tuple(dims[: j + 1]))
        current = partial_contraction(sub, current, [vectors[j]], "suffix")
    return float(current[0])


def operator_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float), 2))


def column_norm_bounds(a: np.ndarray) -> Tuple[float, float]:
    """
    列范数等价: (1/n) Σ‖Ae_k‖ <= ‖A‖ <= Σ‖Ae_k‖

    Returns:
        (下界, 上界)
    """
    a = np.asarray(a, dtype=float)
    total = float(np.linalg.norm(a, axis=0).sum())
    return total / a.shape[1], total
