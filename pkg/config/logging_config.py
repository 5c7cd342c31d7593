"""Logging configuration with file rotation support.

This module configures logging to write to both console and a rotating log file.
"""

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

from config.settings import get_settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: str | None = None, logs_dir: Path | None = None) -> Path | None:
    """Configure logging with console and file handlers.

    Sets up:
    - Console handler (stderr) at the configured level
    - Rotating file handler (logs/metastab.log) with 50MB size limit and 10 backups

    Returns the log file path, or None when file logging is disabled.
    """
    settings = get_settings()
    level_name = (level or settings.log_level).upper()
    numeric_level = getattr(logging, level_name, logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)

    # Clear any existing handlers (avoid duplicates)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root_logger.addHandler(console_handler)

    log_file: Path | None = None
    if settings.log_to_file:
        log_dir = Path(logs_dir or settings.logs_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / "metastab.log"

        file_handler = RotatingFileHandler(
            filename=log_file,
            maxBytes=50 * 1024 * 1024,  # 50MB
            backupCount=10,
            encoding="utf-8",
        )
        file_handler.setLevel(numeric_level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root_logger.addHandler(file_handler)

    if log_file is not None:
        logging.info(f"Log file: {log_file}")
    return log_file
