"""
异常类型
"""


class HarmonicsError(Exception):
    """所有库内错误的基类"""


class InputError(HarmonicsError, ValueError):
    """输入不满足前置条件 (维数不符, 立方体未对齐, 指数无效 ...)"""


class ConfigError(InputError):
    """实验配置错误, 附带出错字段路径"""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class OutsideHullError(InputError):
    """目标点不在凸包内, 附带分离方向"""

    def __init__(self, message: str, direction):
        super().__init__(message)
        self.direction = direction


class DivergenceError(HarmonicsError):
    """Dini 积分发散"""


class InvariantViolation(HarmonicsError):
    """证书检查失败"""
