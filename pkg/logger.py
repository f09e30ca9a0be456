"""
日志配置模块
"""

import logging
import sys

from config import LOG_FILE, LOG_LEVEL

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s'


def setup_logger(name, level=None):
    """
    配置日志记录器

    Args:
        name: 日志记录器名称
        level: 日志级别, 默认取 MWLAB_LOG_LEVEL

    Returns:
        logging.Logger: 配置好的日志记录器
    """
    logger = logging.getLogger(name)
    logger.setLevel(level or LOG_LEVEL)

    # 同名记录器重复调用时不再添加处理器
    if logger.handlers:
        return logger

    formatter = logging.Formatter(FORMAT)

    # 控制台处理器
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if LOG_FILE:
        file_handler = logging.FileHandler(LOG_FILE)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
