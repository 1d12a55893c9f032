"""
Logging utilities for the entanglement rate toolkit.

This module provides a centralized logging configuration
for consistent logging across the CLI, the sweep harness and scripts.
"""

import time
import logging
import logging.handlers
from functools import wraps
from pathlib import Path
from typing import Optional

DEFAULT_LOGGER_NAME = "entangle_rates"


def setup_logger(name: str = DEFAULT_LOGGER_NAME, level: Optional[str] = None,
                 log_dir: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger with file and console handlers.

    Args:
        name: The logger name
        level: The logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for the rotating log files (defaults to <project>/logs)

    Returns:
        Configured logger instance
    """
    level = (level or "INFO").upper()

    if log_dir is None:
        project_root = Path(__file__).parent.parent.parent  # Go up from src/utils/ to project root
        logs_dir = project_root / "logs"
    else:
        logs_dir = Path(log_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level))

    # Clear existing handlers to avoid duplicates
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
    )
    simple_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG if level == "DEBUG" else logging.INFO)
    console_handler.setFormatter(simple_formatter)
    logger.addHandler(console_handler)

    file_handler = logging.handlers.RotatingFileHandler(
        logs_dir / "entangle_rates.log",
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(detailed_formatter)
    logger.addHandler(file_handler)

    error_handler = logging.handlers.RotatingFileHandler(
        logs_dir / "entangle_rates_error.log",
        maxBytes=5*1024*1024,  # 5MB
        backupCount=3,
        encoding='utf-8'
    )
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(detailed_formatter)
    logger.addHandler(error_handler)

    # Library modules log under their own module names; route them here too
    for module_name in ("model", "solver", "oracle", "sweeps", "svg_chart"):
        module_logger = logging.getLogger(module_name)
        module_logger.setLevel(getattr(logging, level))
        module_logger.handlers = logger.handlers
        module_logger.propagate = False

    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a logger instance.

    Args:
        name: The logger name (optional)

    Returns:
        Logger instance
    """
    return logging.getLogger(name or DEFAULT_LOGGER_NAME)


def log_execution_time(func):
    """
    Decorator to log function execution time.

    Args:
        func: The function to decorate

    Returns:
        Decorated function
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        logger = get_logger()
        func_name = func.__name__

        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
            execution_time = time.perf_counter() - start_time
            logger.info(f"{func_name} executed in {execution_time:.2f} seconds")
            return result
        except Exception as e:
            execution_time = time.perf_counter() - start_time
            logger.error(f"{func_name} failed after {execution_time:.2f} seconds: {e}")
            raise

    return wrapper
