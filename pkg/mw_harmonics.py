"""
实验入口: 读取 JSON 配置, 运行一条命令, 写出 CSV/JSON 结果
"""

import argparse
import json
import sys
import traceback
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from config import SEED, THREADS
from harmonics.acceptance import acceptance_suite
from harmonics.convex import body_norm
from harmonics.czo import endpoint_constant, nondegeneracy_check, riesz_kernel, sparse_dominate, zero_kernel
from harmonics.errors import ConfigError, InputError, InvariantViolation
from harmonics.geometry import Cube, Grid, dyadic_family
from harmonics.maximal import (
    VectorField,
    auxiliary_maximal,
    convex_body_maximal,
    eta_maximal,
    multilinear_maximal,
    weighted_maximal,
)
from harmonics.muckenhoupt import derived_exponents, fujii_wilson, per_cube_table, reverse_holder_exponents
from harmonics.weights import make_weight, reducing_operator
from logger import setup_logger
from utils.results import ResultStore

logger = setup_logger("mw_harmonics")

COMMANDS = ("characteristic", "reduce", "maximal", "sparse-dominate", "nondegeneracy", "verify")
CHARACTERISTIC_KINDS = ("roudenko", "reducing", "oracle", "fw")
MAXIMAL_OPS = ("eta", "multi", "weighted", "aux", "convex")
KERNELS = {"riesz": riesz_kernel, "zero": zero_kernel}

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVARIANT = 2


def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ConfigError(f"{path}.{key}" if path else key, "缺少必填字段")
    return data[key]


def _as_int(value, path: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"必须是整数, 当前值 {value!r}")
    if value < minimum:
        raise ConfigError(path, f"必须 >= {minimum}")
    return value


def _as_exponent(value, path: str):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return np.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"指数必须是数字或 \"inf\", 当前值 {value!r}")
    return value


@dataclass
class ExperimentConfig:
    """一次实验的完整描述; seed 决定全部随机输入"""

    seed: int = SEED
    d: int = 1
    level: int = 3
    weights: List[dict] = field(default_factory=list)
    p: List[Any] = field(default_factory=list)
    r: List[Any] = field(default_factory=list)
    s: Any = np.inf
    cubes: Any = "dyadic"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        """
        手写的模式校验

        Raises:
            ConfigError: 附带出错字段的 JSON 路径, 例如 exponents.p[1]
        """
        if not isinstance(data, dict):
            raise ConfigError("$", "配置必须是 JSON 对象")
        cfg = cls()
        if "seed" in data:
            cfg.seed = _as_int(data["seed"], "seed")
        cfg.d = _as_int(data.get("d", 1), "d", minimum=1)
        cfg.level = _as_int(data.get("level", 3), "level")
        if cfg.level > 12:
            raise ConfigError("level", "分辨率过高 (上限 12)")
        weights = data.get("weights", [])
        if not isinstance(weights, list):
            raise ConfigError("weights", "必须是数组")
        for k, spec in enumerate(weights):
            if not isinstance(spec, dict):
                raise ConfigError(f"weights[{k}]", "必须是对象")
            _require(spec, "kind", f"weights[{k}]")
        cfg.weights = weights
        exponents = data.get("exponents", {})
        if not isinstance(exponents, dict):
            raise ConfigError("exponents", "必须是对象")
        cfg.p = [_as_exponent(v, f"exponents.p[{j}]") for j, v in enumerate(exponents.get("p", []))]
        cfg.r = [_as_exponent(v, f"exponents.r[{j}]") for j, v in enumerate(exponents.get("r", [1] * len(cfg.p)))]
        cfg.s = _as_exponent(exponents.get("s", "inf"), "exponents.s")
        if cfg.p:
            if len(cfg.r) != len(cfg.p):
                raise ConfigError("exponents.r", "长度必须与 p 相同")
            for j, (pj, rj) in enumerate(zip(cfg.p, cfg.r)):
                if float(pj) <= 0:
                    raise ConfigError(f"exponents.p[{j}]", "必须为正")
                if float(pj) < float(rj):
                    raise ConfigError(f"exponents.p[{j}]", f"需要 p[{j}] >= r[{j}]")
        cfg.cubes = data.get("cubes", "dyadic")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params", "必须是对象")
        cfg.params = params
        return cfg

    def grid(self) -> Grid:
        return Grid.dyadic(self.d, self.level)

    def cube_family(self, grid: Grid) -> List[Cube]:
        spec = self.cubes
        if isinstance(spec, str):
            if spec == "dyadic":
                return grid.dyadic_cubes()
            if spec.startswith("dyadic:"):
                try:
                    depth = int(spec.split(":", 1)[1])
                except ValueError:
                    raise ConfigError("cubes", f"无法解析深度: {spec!r}")
                if depth > self.level:
                    raise ConfigError("cubes", f"深度 {depth} 超过网格分辨率 {self.level}")
                return dyadic_family(grid.box, depth)
            raise ConfigError("cubes", f"未知的立方体族: {spec!r}")
        if not isinstance(spec, list) or not spec:
            raise ConfigError("cubes", "必须是 \"dyadic\", \"dyadic:L\" 或非空立方体数组")
        cubes = []
        for k, item in enumerate(spec):
            try:
                cubes.append(Cube.from_json(item))
            except InputError as e:
                raise ConfigError(f"cubes[{k}]", str(e))
        return cubes


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, out_dir: Optional[str] = None, threads: int = THREADS,
                 tier: str = "fast"):
        """
        初始化实验

        Args:
            config: 已校验的实验配置
            out_dir: 结果目录
            threads: 工作线程数
            tier: verify 使用的验收层级
        """
        self.config = config
        self.store = ResultStore(out_dir)
        self.threads = max(1, threads)
        self.tier = tier

    def run(self, command: str) -> int:
        handlers = {
            "characteristic": self.run_characteristic,
            "reduce": self.run_reduce,
            "maximal": self.run_maximal,
            "sparse-dominate": self.run_sparse_dominate,
            "nondegeneracy": self.run_nondegeneracy,
            "verify": self.run_verify,
        }
        if command not in handlers:
            raise InputError(f"未知命令: {command!r}")
        logger.info(f"运行 {command} (seed={self.config.seed}, 线程={self.threads})")
        return handlers[command]()

    # ---- 输入构造 ----

    def _weights(self, grid: Grid):
        if not self.config.weights:
            raise ConfigError("weights", "该命令至少需要一个权")
        weights = []
        for k, spec in enumerate(self.config.weights):
            spec = dict(spec)
            spec.setdefault("seed", self.config.seed + k)
            try:
                weights.append(make_weight(spec, grid))
            except (KeyError, TypeError) as e:
                raise ConfigError(f"weights[{k}]", f"字段缺失或类型错误: {e}")
            except InputError as e:
                raise ConfigError(f"weights[{k}]", str(e))
        return weights

    def _exponents(self):
        if not self.config.p:
            raise ConfigError("exponents.p", "该命令需要指数")
        return derived_exponents(self.config.p, self.config.r, self.config.s)

    def _fields(self, grid: Grid, key: str = "fields") -> List[VectorField]:
        specs = self.config.params.get(key)
        if not isinstance(specs, list) or not specs:
            raise ConfigError(f"params.{key}", "必须是非空数组")
        fields = []
        for k, spec in enumerate(specs):
            path = f"params.{key}[{k}]"
            kind = spec.get("kind") if isinstance(spec, dict) else None
            if kind == "random":
                rng = np.random.default_rng(int(spec.get("seed", self.config.seed + 17 * k)))
                values = rng.standard_normal((grid.n_cells, int(spec.get("n", 1))))
            elif kind == "indicator":
                try:
                    cube = Cube.from_json(_require(spec, "cube", path))
                    mask = grid.mask(cube).astype(float)
                except InputError as e:
                    raise ConfigError(f"{path}.cube", str(e))
                vector = np.asarray(spec.get("vector", [1.0]), dtype=float)
                values = mask[:, None] * vector[None, :]
            elif kind == "values":
                values = np.asarray(_require(spec, "values", path), dtype=float)
            else:
                raise ConfigError(f"{path}.kind", f"未知的函数类型: {kind!r}")
            try:
                fields.append(VectorField(grid, values))
            except InputError as e:
                raise ConfigError(path, str(e))
        return fields

    # ---- 命令 ----

    def run_characteristic(self) -> int:
        grid = self.config.grid()
        kind = self.config.params.get("kind", "roudenko")
        if kind not in CHARACTERISTIC_KINDS:
            raise ConfigError("params.kind", f"必须属于 {CHARACTERISTIC_KINDS}")
        weights = self._weights(grid)
        cubes = self.config.cube_family(grid)
        header = ["cube_corner", "cube_side", "value", "slack"]
        if kind == "fw":
            rows = [[_corner(q), float(q.side), fujii_wilson(weights[0], q), 0.0] for q in cubes]
        else:
            cfg = self._exponents()
            table = per_cube_table(weights, cfg, cubes, kind, workers=self.threads)
            rows = [[_corner(q), float(q.side), value, slack] for q, value, slack in table]
            self.store.write_json("exponents.json", {"derived": cfg.to_json(),
                                                     "reverse_holder": reverse_holder_exponents(cfg)})
        self.store.write_csv(f"characteristic_{kind}.csv", header, rows)
        value = max(row[2] for row in rows)
        logger.info(f"特征量 ({kind}) = {value:.12g}, 共 {len(rows)} 个立方体")
        return EXIT_OK

    def run_reduce(self) -> int:
        grid = self.config.grid()
        weight = self._weights(grid)[0]
        p = _as_exponent(self.config.params.get("p", self.config.p[0] if self.config.p else 2), "params.p")
        cubes = self.config.cube_family(grid)
        n = weight.n
        header = ["cube_corner", "cube_side"] + [f"a{i}{j}" for i in range(n) for j in range(n)] + \
                 ["slack", "lower_ratio", "upper_ratio", "degenerate"]
        rows = []
        violations = 0
        for q in cubes:
            op = reducing_operator(weight, q, p)
            lower, upper = op.sandwich()
            if op.lower_ratio < lower * (1 - 1e-12) or op.upper_ratio > upper * (1 + 1e-12):
                violations += 1
            rows.append([_corner(q), float(q.side)] + list(op.A.ravel()) +
                        [op.slack, op.lower_ratio, op.upper_ratio, op.degenerate])
        self.store.write_csv("reducing.csv", header, rows)
        weight.to_csv(self.store, "weight.csv")
        if violations:
            raise InvariantViolation(f"{violations} 个约化算子未通过夹逼检验")
        return EXIT_OK

    def run_maximal(self) -> int:
        grid = self.config.grid()
        op = self.config.params.get("op", "eta")
        if op not in MAXIMAL_OPS:
            raise ConfigError("params.op", f"必须属于 {MAXIMAL_OPS}")
        cubes = self.config.cube_family(grid)
        fields = self._fields(grid)
        if op == "eta":
            values = eta_maximal(grid, fields[0].norms(), float(self.config.params.get("eta", 1.0)), cubes)
        elif op == "multi":
            values = multilinear_maximal(grid, [f.norms() for f in fields], cubes)
        elif op == "weighted":
            values = weighted_maximal(fields, self._weights(grid), self.config.r, cubes)
        elif op == "aux":
            cfg = self._exponents()
            t = [np.inf if rt == 0 else float(1 / rt) for rt in cfg.recip_t]
            values = auxiliary_maximal(fields, self._weights(grid), self.config.r, t, cubes)
        else:
            body = convex_body_maximal(fields, cubes)
            norms = {}
            values = np.array([norms.setdefault(id(b), body_norm(b)) for b in body.bodies])
        rows = [[c, *grid.centers[c], values[c]] for c in range(grid.n_cells)]
        header = ["cell"] + [f"x{i}" for i in range(grid.d)] + ["value"]
        self.store.write_csv(f"maximal_{op}.csv", header, rows)
        return EXIT_OK

    def run_sparse_dominate(self) -> int:
        params = self.config.params
        m = _as_int(params.get("m", 1), "params.m", minimum=1)
        top = Cube.unit(self.config.d)
        grid = Grid(top.triple(), 3 << self.config.level)
        name = params.get("kernel", "riesz")
        if name not in KERNELS:
            raise ConfigError("params.kernel", f"必须属于 {tuple(KERNELS)}")
        kernel = KERNELS[name](m, self.config.d)
        fields = self._fields(grid)
        if len(fields) != m:
            raise ConfigError("params.fields", f"需要 {m} 个函数")
        result = sparse_dominate(kernel, fields, top, grid, eps=float(params.get("eps", 0.5)),
                                 workers=self.threads)
        self.store.write_json("sparse_family.json", {"stopping": result.stopping.to_json(),
                                                     "triples": result.triples.to_json(),
                                                     "constant": result.constant,
                                                     "martingale": result.martingale,
                                                     "eta_sparse": result.eta_sparse})
        rows = [[self.config.level, m, len(result.stopping), result.constant, result.martingale,
                 result.eta_sparse, endpoint_constant(kernel, fields, grid)]]
        self.store.write_csv("sparse_dominate.csv", ["level", "m", "cubes", "constant", "martingale",
                                                     "eta_sparse", "endpoint_constant"], rows)
        if not (result.martingale and result.eta_sparse):
            raise InvariantViolation("稀疏族未通过稀疏检验")
        return EXIT_OK

    def run_nondegeneracy(self) -> int:
        params = self.config.params
        m = _as_int(params.get("m", 1), "params.m", minimum=1)
        alpha = float(params.get("alpha", 0.5))
        d = self.config.d
        side = 2 * m + 1
        grid = Grid(Cube((0,) * d, side), side << self.config.level)
        report = nondegeneracy_check(riesz_kernel(m, d), grid, Cube.unit(d), alpha,
                                     samples=int(params.get("samples", 8)), seed=self.config.seed)
        header = ["m", "d", "level", "alpha", "constant", "property_a_min", "property_a_needed",
                  "property_b_max", "samples"]
        self.store.write_csv("nondegeneracy.csv", header,
                             [[m, d, self.config.level, alpha, report.constant, report.property_a_min,
                               report.property_a_needed, report.property_b_max, report.samples]])
        if report.property_b_max > 1 + 1e-12:
            raise InvariantViolation(f"性质 (b) 不成立: max |S||Q|^m = {report.property_b_max:.6g}")
        return EXIT_OK

    def run_verify(self) -> int:
        report = acceptance_suite(self.tier, seed=self.config.seed, workers=self.threads)
        self.store.write_csv(f"acceptance_{self.tier}.csv", ["criterion", "name", "passed", "slack", "runtime_s"],
                             report.rows())
        self.store.write_json(f"acceptance_{self.tier}.json",
                              [{"criterion": r.number, "name": r.name, "passed": r.passed, "slack": r.slack,
                                "runtime": r.runtime, "detail": r.detail} for r in report.results])
        return EXIT_OK if report.passed else EXIT_INVARIANT


def _corner(cube: Cube) -> str:
    return " ".join(str(c) for c in cube.corner)


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError("$", f"无法读取配置 {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"JSON 格式错误: {e}")
    return ExperimentConfig.from_json(data)


def load_fields(path: str) -> list:
    """--input: 函数描述数组, 或带 fields 键的对象"""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError("--input", f"无法读取 {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError("--input", f"JSON 格式错误: {e}")
    if isinstance(data, dict):
        data = data.get("fields")
    if not isinstance(data, list) or not data:
        raise ConfigError("--input", "必须是非空数组或 {\"fields\": [...]}")
    return data


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """命令行参数覆盖配置中的同名字段"""
    if args.seed is not None:
        config.seed = args.seed
    if args.level is not None:
        config.level = _as_int(args.level, "--level")
        if config.level > 12:
            raise ConfigError("--level", "分辨率过高 (上限 12)")
    if args.d is not None:
        config.d = _as_int(args.d, "--d", minimum=1)
    if args.cubes is not None:
        config.cubes = args.cubes
    params = dict(config.params)
    if args.kind is not None:
        params["kind"] = args.kind
    if args.op is not None:
        params["op"] = args.op
    if args.kernel is not None:
        params["kernel"] = args.kernel
    if args.m is not None:
        params["m"] = _as_int(args.m, "--m", minimum=1)
    if args.input is not None:
        params["fields"] = load_fields(args.input)
    config.params = params
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mw_harmonics", description="矩阵加权多线性调和分析实验")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON 实验配置")
    parser.add_argument("--out", help="结果目录 (缺省 MWLAB_RESULTS_DIR)")
    parser.add_argument("--seed", type=int, help="覆盖配置中的种子")
    parser.add_argument("--threads", type=int, help="工作线程数 (缺省 MWLAB_THREADS)")
    parser.add_argument("--tier", choices=("fast", "full"), default="fast", help="verify 的验收层级")
    parser.add_argument("--level", type=int, help="覆盖网格分辨率 L")
    parser.add_argument("--d", type=int, help="覆盖维数")
    parser.add_argument("--cubes", help="覆盖立方体族: dyadic 或 dyadic:L")
    parser.add_argument("--kind", choices=CHARACTERISTIC_KINDS, help="characteristic 的特征量类型")
    parser.add_argument("--op", choices=MAXIMAL_OPS, help="maximal 的算子")
    parser.add_argument("--kernel", choices=tuple(KERNELS), help="sparse-dominate 的核")
    parser.add_argument("--m", type=int, help="sparse-dominate / nondegeneracy 的线性度")
    parser.add_argument("--input", help="函数描述 JSON, 覆盖 params.fields")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args)
        threads = args.threads if args.threads is not None else THREADS
        runner = ExperimentRunner(config, args.out, threads, args.tier)
        return runner.run(args.command)
    except InvariantViolation as e:
        logger.error(f"不变量检查失败: {str(e)}")
        return EXIT_INVARIANT
    except InputError as e:
        logger.error(f"输入错误: {str(e)}")
        return EXIT_INPUT
    except Exception as e:
        logger.error(f"运行失败: {str(e)}")
        traceback.print_exc()
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
