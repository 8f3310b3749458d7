import logging
import os
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

import pytz

ROOT = Path(__file__).resolve().parent.parent
LOG_DIR = Path(os.getenv("DUPGD_LOG_DIR", ROOT / "logs"))
LOG_FILE_NAME = "dupgd.log"

LOG_TZ = pytz.timezone(os.getenv("DUPGD_LOG_TZ", "UTC"))
FMT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
DATEFMT = "%Y-%m-%d %H:%M:%S %Z"


class TZFormatter(logging.Formatter):
    """Formatter that stamps logs in a specific timezone (default UTC)."""

    def __init__(self, fmt=None, datefmt=None, tz=None):
        super().__init__(fmt=fmt, datefmt=datefmt)
        self.tz = tz or LOG_TZ

    def formatTime(self, record, datefmt=None):
        dt = datetime.fromtimestamp(record.created, self.tz)
        if datefmt:
            return dt.strftime(datefmt)
        return dt.isoformat()


def setup_logger(name: str = "sim", level=logging.INFO, log_dir: Optional[Path] = None) -> logging.Logger:
    """Console + rotating file handlers on `name`; calling twice is a no-op."""
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger
    logger.setLevel(logging.DEBUG)

    # Console handler
    ch = logging.StreamHandler()
    ch.setLevel(level)
    ch.setFormatter(TZFormatter(FMT, DATEFMT, tz=LOG_TZ))
    logger.addHandler(ch)

    # Rotating file handler
    target = Path(log_dir) if log_dir is not None else LOG_DIR
    target.mkdir(parents=True, exist_ok=True)
    fh = RotatingFileHandler(target / LOG_FILE_NAME, maxBytes=5_000_000, backupCount=5)
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(TZFormatter(FMT, DATEFMT, tz=LOG_TZ))
    logger.addHandler(fh)

    logger.propagate = False
    return logger


def set_console_level(name: str, level) -> None:
    """Adjust only the console handler(s); the file handler keeps DEBUG."""
    for handler in logging.getLogger(name).handlers:
        if not isinstance(handler, RotatingFileHandler):
            handler.setLevel(level)
