import logging
from logging.handlers import RotatingFileHandler

from config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s:%(name)s:%(message)s"


def get_logger(name: str) -> logging.Logger:
    """Console plus rotating-file logger; worker threads share the handlers."""
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logger.setLevel(level)
    logger.propagate = False
    fmt = logging.Formatter(LOG_FORMAT)

    ch = logging.StreamHandler()
    ch.setLevel(level)
    ch.setFormatter(fmt)
    logger.addHandler(ch)

    log_dir = settings.DATA_DIR / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    fh = RotatingFileHandler(log_dir / "mil.log", maxBytes=5_000_000, backupCount=3, delay=True)
    fh.setLevel(level)
    fh.setFormatter(fmt)
    logger.addHandler(fh)

    return logger
