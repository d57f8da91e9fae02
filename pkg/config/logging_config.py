"""
Logging configuration for the heavy-traffic toolkit.
This module sets up the logging system using loguru.
"""

import os
import sys
from typing import Optional

from loguru import logger

from config.settings import settings

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """
    Configure logging for the application.
    Sets up console logging and, unless the log file is empty, a rotating file sink.

    Args:
        level: Overrides HTQ_LOG_LEVEL
        log_file: Overrides HTQ_LOG_FILE
    """
    level = (level or settings.LOG_LEVEL).upper()
    log_file = settings.LOG_FILE if log_file is None else log_file

    # Remove default handler
    logger.remove()

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)
        logger.add(
            log_file,
            rotation="500 MB",
            retention="10 days",
            compression="zip",
            level=level,
            format=LOG_FORMAT,
            enqueue=True,
        )

    logger.add(sys.stderr, level=level, format=LOG_FORMAT)

    logger.debug("Logging system initialized")
