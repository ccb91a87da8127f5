import logging
import os

ROOT_LOGGER = "exclusion_hitting"

_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def get_logger(name: str) -> logging.Logger:
    """Child of the package logger named after the calling module."""
    return logging.getLogger(ROOT_LOGGER).getChild(name)


def configure_logging(level: str | None = None) -> logging.Logger:
    """Attach a stream handler to the package logger once."""
    level = (level or os.getenv("LOG_LEVEL") or "INFO").upper()
    logger = logging.getLogger(ROOT_LOGGER)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT))
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger
