"""Structured event logging."""

import json
import logging
from typing import Any

from app.config import Settings

_configured = False


def configure_logging(config: Settings) -> None:
    """Configure root logging once per process."""
    global _configured
    if _configured:
        logging.getLogger().setLevel(getattr(logging, config.log_level.upper()))
        return
    fmt = "%(message)s" if config.log_format == "json" else "%(levelname)s %(name)s: %(message)s"
    logging.basicConfig(level=getattr(logging, config.log_level.upper()), format=fmt)
    _configured = True


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    """Emit one JSON-formatted event line."""
    if not logger.isEnabledFor(level):
        return
    payload: dict[str, Any] = {"event": event}
    payload.update(fields)
    logger.log(level, json.dumps(payload, default=str))
