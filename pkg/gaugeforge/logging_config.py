import logging
from pathlib import Path
from typing import Optional, Union

from gaugeforge.config import settings

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_file_logging(log_dir: Optional[Union[str, Path]] = None) -> Path:
    """Add file logging to existing console logging"""
    log_dir = Path(log_dir if log_dir is not None else settings.LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_dir / "gaugeforge.log"

    root_logger = logging.getLogger()
    for handler in root_logger.handlers:
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == log_path.resolve():
            return log_path

    file_handler = logging.FileHandler(log_path)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root_logger.addHandler(file_handler)

    logging.info(f"File logging enabled: {log_path}")
    return log_path
