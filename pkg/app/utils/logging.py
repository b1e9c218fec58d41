import logging
import sys
from typing import Optional

from app.config import settings

LOG_FORMAT = "ts=%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single key=value stream handler on the app logger"""
    logger = logging.getLogger("app")
    logger.setLevel((level or settings.LOG_LEVEL).upper())
    if not any(getattr(h, "_slam_handler", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._slam_handler = True  # type: ignore[attr-defined]
        logger.addHandler(handler)
    logger.propagate = False
