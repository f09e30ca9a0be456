"""
验收套件: 每条准则给出通过与否, 实测余量与耗时
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config import MVEE_TOLERANCE, SEED
from harmonics.convex import BodyField, Ellipsoid, SymmetricHull, aumann_average, body_norm
from harmonics.czo import (
    CZSparseResult,
    cotlar_constant,
    cz_decompose,
    endpoint_constant,
    nondegeneracy_check,
    riesz_kernel,
    sparse_dominate,
)
from harmonics.errors import InvariantViolation
from harmonics.geometry import Cube, Grid
from harmonics.maximal import VectorField, maximal_sparse_dominate, weak_type_check
from harmonics.muckenhoupt import (
    averaging_norm_oracle,
    characteristic_on_cube,
    derived_exponents,
    factorization_bound,
    fujii_wilson,
    reducing_characteristic,
    roudenko_characteristic,
    scalar_embedding,
    tensor_monotonicity,
)
from harmonics.tensor import operator_norm, tensor_matrix
from harmonics.weights import MatrixWeightField, make_weight, quasi_constant, reducing_operator
from logger import setup_logger

logger = setup_logger("acceptance")

SANDWICH_SLACK = 1e-3

TIERS = {
    "fast": {"max_level": 5, "weights": 50, "tensors": 1000, "instances": 30, "bodies": 100,
             "directions": 50, "cz": 100, "levels": (3, 4, 5), "sparse_levels": (3, 4, 5)},
    "full": {"max_level": 7, "weights": 50, "tensors": 1000, "instances": 30, "bodies": 100,
             "directions": 50, "cz": 100, "levels": (4, 5, 6), "sparse_levels": (5, 6, 7)},
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    slack: float
    runtime: float
    detail: Dict = field(default_factory=dict)


@dataclass
class AcceptanceReport:
    tier: str
    results: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[CriterionResult]:
        return [r for r in self.results if not r.passed]

    def rows(self) -> List[list]:
        return [[r.number, r.name, r.passed, r.slack, r.runtime] for r in self.results]


def _margin(value: float, bound: float) -> float:
    """bound - value 的相对余量, 正数为通过"""
    scale = max(abs(bound), 1e-300)
    return (bound - value) / scale


def _random_weights(grid: Grid, m: int, n: int, seed: int) -> List[MatrixWeightField]:
    return [make_weight({"kind": "random", "n": n, "lipschitz": 2.0, "seed": seed + 101 * j}, grid)
            for j in range(m)]


def check_sandwich(settings: dict, seed: int, tolerance: float) -> CriterionResult:
    grid = Grid.dyadic(1, min(4, settings["max_level"]))
    worst = np.inf
    certificate = float(np.sqrt(1 + tolerance) - 1)
    failures = 0
    cases = [(2, k) for k in range(settings["weights"])]
    if settings["max_level"] > 5:
        cases += [(3, k) for k in range(settings["weights"] // 2)]
    for n, k in cases:
        weight = make_weight({"kind": "random", "n": n, "lipschitz": 2.0, "seed": seed + k}, grid)
        for p in (0.5, 1, 2, np.inf):
            op = reducing_operator(weight, grid.box, p, tol=tolerance, use_cache=False)
            lower = quasi_constant(p) ** (-n) * (1 - SANDWICH_SLACK)
            upper = np.sqrt(n) * (1 + SANDWICH_SLACK)
            margin = min(op.lower_ratio / lower - 1, 1 - op.upper_ratio / upper)
            worst = min(worst, margin)
            if margin < 0:
                failures += 1
    passed = failures == 0 and certificate <= SANDWICH_SLACK
    return CriterionResult(1, "reducing-sandwich", passed, min(worst, SANDWICH_SLACK - certificate), 0.0,
                           {"cases": len(cases) * 4, "failures": failures, "john_tolerance": tolerance,
                            "certificate_slack": certificate})


def check_tensor_norms(settings: dict, seed: int) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(settings["tensors"]):
        m = int(rng.integers(2, 4))
        matrices = [rng.standard_normal((int(rng.integers(1, 4)),) * 2) for _ in range(m)]
        product = float(np.prod([operator_norm(a) for a in matrices]))
        error = abs(operator_norm(tensor_matrix(*matrices)) - product) / max(1.0, product)
        worst = max(worst, error)
    return CriterionResult(2, "tensor-norm-multiplicativity", worst <= 1e-10, 1e-10 - worst, 0.0,
                           {"instances": settings["tensors"], "max_error": worst})


def check_oracle_below_roudenko(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, 3)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(settings["instances"]):
        m = 1 + k % 2
        p = [int(v) for v in rng.choice([2, 3, 4], size=m)]
        weights = _random_weights(grid, m, 2, seed + k)
        cfg = derived_exponents(p, [1] * m, np.inf)
        roudenko = characteristic_on_cube(weights, cfg, grid.box)
        oracle = averaging_norm_oracle(weights, p, grid.box, seed)
        worst = min(worst, roudenko + 1e-6 - oracle)
    return CriterionResult(3, "oracle-below-roudenko", worst >= 0, worst, 0.0,
                           {"instances": settings["instances"]})


def check_closed_form(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, 1)
    weight = MatrixWeightField.from_scalar(grid, [1.0, 4.0], "1|4")
    cfg = derived_exponents([2], [1], np.inf)
    target = 17 / 8
    values = {
        "oracle": averaging_norm_oracle([weight], [2], grid.box, seed),
        "roudenko": roudenko_characteristic([weight], cfg, [grid.box]),
        "reducing": reducing_characteristic([weight], cfg, [grid.box]).value,
    }
    error = max(abs(v - target) for v in values.values())
    return CriterionResult(4, "closed-form-17/8", error <= 2e-3, 2e-3 - error, 0.0, values)


def check_factorization(settings: dict, seed: int) -> List[CriterionResult]:
    grid = Grid.dyadic(1, 3)
    cubes = grid.dyadic_cubes()
    rng = np.random.default_rng(seed + 5)
    factor_margin, tensor_margin = np.inf, np.inf
    for k in range(settings["instances"]):
        m = 1 + k % 2
        p = [int(v) for v in rng.choice([2, 3, 4], size=m)]
        weights = _random_weights(grid, m, 2, seed + 31 * k)
        cfg = derived_exponents(p, [1] * m, np.inf)
        lhs, rhs, _ = factorization_bound(weights, cfg, cubes)
        factor_margin = min(factor_margin, _margin(lhs, rhs * (1 + 1e-6)))
        tensor_value, roudenko = tensor_monotonicity(weights, cfg, cubes)
        tensor_margin = min(tensor_margin, _margin(tensor_value, roudenko * (1 + 1e-6)))
    detail = {"instances": settings["instances"]}
    return [CriterionResult(5, "factorization", factor_margin >= 0, factor_margin, 0.0, detail),
            CriterionResult(6, "tensor-monotonicity", tensor_margin >= 0, tensor_margin, 0.0, detail)]


def check_scalar_embedding(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, 3)
    weight = _random_weights(grid, 1, 2, seed)[0]
    rng = np.random.default_rng(seed)
    units = rng.standard_normal((settings["directions"], 2))
    units /= np.linalg.norm(units, axis=1, keepdims=True)
    scalar, matrix = scalar_embedding([weight], [2], grid.box, [[u] for u in units], seed)
    margin = _margin(scalar, matrix * (1 + 1e-9))
    return CriterionResult(7, "scalar-embedding", margin >= 0, margin, 0.0,
                           {"scalar": scalar, "matrix": matrix})


def check_aumann(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, 2)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(settings["bodies"]):
        n = 2 + k % 2
        bodies = []
        for _ in range(grid.n_cells):
            if rng.random() < 0.5:
                bodies.append(SymmetricHull(rng.standard_normal((3, n))))
            else:
                bodies.append(Ellipsoid(rng.standard_normal((n, n))))
        average = aumann_average(BodyField(grid, bodies), grid.box)
        left = body_norm(average)
        middle = float(np.mean([body_norm(b) for b in bodies]))
        worst = min(worst, _margin(left, middle * (1 + 1e-9)), _margin(middle, n * left * (1 + 1e-9)))
    return CriterionResult(8, "aumann-two-sided", worst >= 0, worst, 0.0, {"fields": settings["bodies"]})


def check_maximal_sparse(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, min(4, settings["max_level"]))
    cubes = grid.dyadic_cubes()
    rng = np.random.default_rng(seed)
    worst = np.inf
    sparse = True
    for m, n in ((1, 2), (2, 2), (2, 1), (1, 1)):
        fields = [VectorField(grid, rng.standard_normal((grid.n_cells, n))) for _ in range(m)]
        try:
            result = maximal_sparse_dominate(fields, cubes, count=200)
        except InvariantViolation as e:
            logger.error(f"准则 9 (m={m}, n={n}): {str(e)}")
            sparse = False
            continue
        worst = min(worst, _margin(result.factor, result.bound))
    return CriterionResult(9, "maximal-sparse-domination", sparse and worst >= 0, worst, 0.0,
                           {"sparse": sparse})


def _riesz_grid(level: int) -> Grid:
    """[-1, 2), Q₀ = [0, 1) 上 2^level 个格子"""
    return Grid(Cube((-1,), 3), 3 << level)


def check_cz_sparse(settings: dict, seed: int, workers: int) -> CriterionResult:
    top = Cube((0,), 1)
    constants: Dict[int, List[float]] = {}
    certified = True
    for m in (1, 2):
        kernel = riesz_kernel(m, 1)
        for level in settings["sparse_levels"]:
            grid = _riesz_grid(level)
            f = grid.mask(top).astype(float)
            result: CZSparseResult = sparse_dominate(kernel, [f] * m, top, grid, workers=workers)
            certified = certified and result.martingale and result.eta_sparse and np.isfinite(result.constant)
            constants.setdefault(m, []).append(result.constant)
    spread = max(max(v) / min(v) - 1 for v in constants.values() if min(v) > 0)
    passed = certified and spread <= 0.2
    return CriterionResult(10, "cz-sparse-domination", passed, 0.2 - spread, 0.0,
                           {"constants": constants, "certified": certified})


def check_nondegeneracy(settings: dict, seed: int) -> CriterionResult:
    level = min(6, settings["max_level"])
    grid = Grid(Cube((0,), 4), 4 << level)
    report = nondegeneracy_check(riesz_kernel(1, 1), grid, Cube((0,), 1), 0.5, seed=seed)
    target_a = 1 - 5 * 2.0 ** (-level)
    margin = min(report.property_a_min - target_a, 1 + 1e-12 - report.property_b_max)
    return CriterionResult(11, "riesz-nondegeneracy", margin >= 0 and report.constant == 3.0, margin, 0.0,
                           {"a": report.property_a_min, "b": report.property_b_max, "constant": report.constant})


def check_cz_decomposition(settings: dict, seed: int) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(settings["cz"]):
        d = 1 + k % 2
        grid = Grid.dyadic(d, 5 if d == 1 else 3)
        f = rng.standard_normal(grid.n_cells) * rng.exponential(1.0, grid.n_cells) ** 3
        height = float(np.abs(f).mean() * rng.uniform(1.0, 4.0))
        cz = cz_decompose(grid, f, height)
        reconstruction = float(np.abs(cz.reconstruct() - f).max())
        good = float(np.abs(cz.good).max())
        means = max((abs(float(b[grid.cells_in(q)].mean())) for q, b in cz.bad.items()), default=0.0)
        measure = sum(float(q.volume) for q in cz.cubes)
        budget = float(np.abs(f).sum() * grid.cell_volume / height)
        scale = max(1.0, float(np.abs(f).max()))
        worst = min(worst, 1e-12 * scale - reconstruction, _margin(good, 2 ** d * height * (1 + 1e-12)),
                    1e-12 * scale - means, _margin(measure, budget * (1 + 1e-12)))
    return CriterionResult(12, "cz-decomposition", worst >= 0, worst, 0.0, {"instances": settings["cz"]})


def _fujii_wilson_enumerated(grid: Grid, values: np.ndarray, top: Cube) -> float:
    maximal = np.zeros(grid.n_cells)
    for q in grid.dyadic_cubes(top):
        cells = grid.cells_in(q)
        maximal[cells] = np.maximum(maximal[cells], values[cells].mean())
    cells = grid.cells_in(top)
    return float(maximal[cells].mean() / values[cells].mean())


def check_fujii_wilson(settings: dict, seed: int) -> CriterionResult:
    rng = np.random.default_rng(seed)
    grid = Grid.dyadic(1, min(5, settings["max_level"]))
    constant = fujii_wilson(np.full(grid.n_cells, 2.5), grid.box, grid)
    worst = 0.0 if constant == 1.0 else -abs(constant - 1.0)
    for k in range(10):
        d = 1 + k % 2
        g = Grid.dyadic(d, 4 if d == 1 else 2)
        w = rng.exponential(1.0, g.n_cells)
        error = abs(fujii_wilson(w, g.box, g) - _fujii_wilson_enumerated(g, w, g.box))
        worst = min(worst, 1e-10 - error)
    return CriterionResult(13, "fujii-wilson", worst >= 0 and constant == 1.0, worst, 0.0, {"constant": constant})


def check_weak_type(settings: dict, seed: int) -> CriterionResult:
    grid = Grid.dyadic(1, 3)
    cubes = grid.dyadic_cubes()
    rng = np.random.default_rng(seed)
    worst = np.inf
    count = max(4, settings["instances"] * 2 // 3)
    for k in range(count):
        m = 1 + k % 2
        weights = _random_weights(grid, m, 2, seed + 7 * k)
        fields = [VectorField(grid, rng.standard_normal((grid.n_cells, 2))) for _ in range(m)]
        p = float(rng.choice([1.0, 2.0, 4.0]))
        weak, strong = weak_type_check(fields, weights, p, cubes)
        worst = min(worst, _margin(strong, weak * (1 + 1e-9)))
    return CriterionResult(14, "weak-type-direction", worst >= 0, worst, 0.0, {"instances": count})


def check_diagnostics(settings: dict, seed: int) -> CriterionResult:
    kernel = riesz_kernel(1, 1)
    top = Cube((0,), 1)
    rng = np.random.default_rng(seed)
    series = {"cotlar": [], "endpoint": []}
    # 同一函数在各分辨率下的分片常值表示
    coarse = rng.exponential(1.0, 8)
    for level in settings["levels"]:
        grid = _riesz_grid(level)
        f = np.zeros(grid.n_cells)
        f[grid.cells_in(top)] = np.repeat(coarse, (1 << level) // 8)
        cubes = grid.dyadic_cubes(top)
        series["cotlar"].append(cotlar_constant(kernel, [f], grid, cubes))
        series["endpoint"].append(endpoint_constant(kernel, [f], grid))
    growth = max(b / a for values in series.values() for a, b in zip(values[:-1], values[1:]) if a > 0)
    finite = all(np.isfinite(v) for values in series.values() for v in values)
    return CriterionResult(15, "diagnostics-stability", finite and growth <= 2.0, 2.0 - growth, 0.0, series)


def acceptance_suite(tier: str = "fast", seed: int = SEED, workers: int = 1,
                     john_tolerance: Optional[float] = None) -> AcceptanceReport:
    """
    运行全部验收准则

    Args:
        tier: fast (L <= 5) 或 full (L <= 7)
        seed: 随机种子
        workers: 并行线程数
        john_tolerance: 覆盖 MVEE 容差 (故障注入用)

    Returns:
        AcceptanceReport: 每条准则的结果, 失败的准则不会中断其余准则
    """
    if tier not in TIERS:
        raise ValueError(f"未知的验收层级: {tier!r}")
    settings = TIERS[tier]
    tolerance = MVEE_TOLERANCE if john_tolerance is None else john_tolerance
    checks: List[tuple] = [
        (1, "reducing-sandwich", lambda: check_sandwich(settings, seed, tolerance)),
        (2, "tensor-norm-multiplicativity", lambda: check_tensor_norms(settings, seed)),
        (3, "oracle-below-roudenko", lambda: check_oracle_below_roudenko(settings, seed)),
        (4, "closed-form-17/8", lambda: check_closed_form(settings, seed)),
        (5, "factorization", lambda: check_factorization(settings, seed)),
        (7, "scalar-embedding", lambda: check_scalar_embedding(settings, seed)),
        (8, "aumann-two-sided", lambda: check_aumann(settings, seed)),
        (9, "maximal-sparse-domination", lambda: check_maximal_sparse(settings, seed)),
        (10, "cz-sparse-domination", lambda: check_cz_sparse(settings, seed, workers)),
        (11, "riesz-nondegeneracy", lambda: check_nondegeneracy(settings, seed)),
        (12, "cz-decomposition", lambda: check_cz_decomposition(settings, seed)),
        (13, "fujii-wilson", lambda: check_fujii_wilson(settings, seed)),
        (14, "weak-type-direction", lambda: check_weak_type(settings, seed)),
        (15, "diagnostics-stability", lambda: check_diagnostics(settings, seed)),
    ]
    results: List[CriterionResult] = []
    for number, name, run in checks:
        start = time.perf_counter()
        try:
            outcome = run()
            outcome = outcome if isinstance(outcome, list) else [outcome]
        except Exception as e:
            logger.error(f"准则 {number} ({name}) 运行失败: {str(e)}")
            outcome = [CriterionResult(number, name, False, -np.inf, 0.0, {"error": str(e)})]
        elapsed = time.perf_counter() - start
        for r in outcome:
            r.runtime = elapsed / len(outcome)
            level = "通过" if r.passed else "失败"
            logger.info(f"准则 {r.number:2d} {r.name}: {level}, 余量 {r.slack:.3g}, 耗时 {r.runtime:.2f}s")
            results.append(r)
    report = AcceptanceReport(tier, results)
    if not report.passed:
        logger.warning(f"{len(report.failures())} 条准则未通过: {[r.number for r in report.failures()]}")
    return report
